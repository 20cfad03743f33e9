#pragma once

// complexNDM: x0 = f0(history), x_t = Lambda x_{t-1} + fu(u_t), y_t = Re(C x_t).
//
// Lambda is diagonal with the unique eigenvalues from spectral.hpp, f0 and fu
// are MLPs with complex output layers, and C has no bias. There is no direct
// input-to-output path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cndm/common.hpp"
#include "cndm/neural.hpp"
#include "cndm/parallel.hpp"
#include "cndm/random.hpp"
#include "cndm/scan.hpp"
#include "cndm/spectral.hpp"

namespace cndm {

struct ModelShape {
  std::size_t targets = 4;
  std::size_t controls = 10;
  std::size_t history = 8;  // past temperature rows fed to f0
  std::size_t state = 16;   // unique eigenvalues
  std::size_t hidden = 32;
  std::size_t layers = 2;

  MlpShape f0_shape() const { return {history * targets, hidden, layers, state}; }
  MlpShape fu_shape() const { return {controls, hidden, layers, state}; }
  bool operator==(const ModelShape&) const = default;
};

struct ModelParams {
  ModelShape shape;
  EigenParams eig;
  MlpParams f0;
  MlpParams fu;
  std::vector<cplx> readout;  // targets x state, row-major
};

inline ModelParams zero_model(const ModelShape& s) {
  ModelParams p;
  p.shape = s;
  p.eig.nu_bar.assign(s.state, 0.0);
  p.eig.theta_bar.assign(s.state, 0.0);
  p.f0 = make_mlp(s.f0_shape());
  p.fu = make_mlp(s.fu_shape());
  p.readout.assign(s.targets * s.state, cplx(0.0, 0.0));
  return p;
}

/// Ring-initialized spectrum, randomly initialized networks and readout.
inline ModelParams init_model(const ModelShape& s, InitConfig ring, std::uint64_t seed) {
  ModelParams p = zero_model(s);
  ring.m = s.state;
  ring.seed = derive_seed(seed, 1);
  p.eig = sample_ring_init(ring);
  Rng rng(derive_seed(seed, 2));
  p.f0 = init_mlp(s.f0_shape(), rng);
  p.fu = init_mlp(s.fu_shape(), rng);
  const double bound = std::sqrt(1.0 / (2.0 * static_cast<double>(s.state)));
  for (cplx& c : p.readout) c = cplx(uniform(rng, -bound, bound), uniform(rng, -bound, bound));
  return p;
}

namespace detail {

inline std::span<double> as_reals(std::vector<cplx>& v) {
  return {reinterpret_cast<double*>(v.data()), 2 * v.size()};
}
inline std::span<const double> as_reals(const std::vector<cplx>& v) {
  return {reinterpret_cast<const double*>(v.data()), 2 * v.size()};
}

template <class Mlp, class F>
void visit_mlp(Mlp& mlp, const std::string& prefix, F& f) {
  for (std::size_t l = 0; l < mlp.hidden.size(); ++l) {
    const std::string base = prefix + ".hidden" + std::to_string(l);
    f(base + ".weight", std::span(mlp.hidden[l].weight));
    f(base + ".bias", std::span(mlp.hidden[l].bias));
  }
  f(prefix + ".out.weight", as_reals(mlp.output.weight));
  f(prefix + ".out.bias", as_reals(mlp.output.bias));
}

}  // namespace detail

/// Calls f(name, span<double>) for every trainable tensor in a fixed order.
/// Complex tensors appear as interleaved (re, im) pairs.
template <class Params, class F>
void visit_tensors(Params& p, F&& f) {
  f(std::string("eig.nu_bar"), std::span(p.eig.nu_bar));
  f(std::string("eig.theta_bar"), std::span(p.eig.theta_bar));
  detail::visit_mlp(p.f0, "f0", f);
  detail::visit_mlp(p.fu, "fu", f);
  f(std::string("readout"), detail::as_reals(p.readout));
}

/// Trainable real scalars; complex entries count twice.
inline std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  visit_tensors(p, [&](const std::string&, auto span) { n += span.size(); });
  return n;
}

inline std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> flat;
  flat.reserve(parameter_count(p));
  visit_tensors(p, [&](const std::string&, auto span) { flat.insert(flat.end(), span.begin(), span.end()); });
  return flat;
}

inline void unflatten(std::span<const double> flat, ModelParams& p) {
  require_shape(flat.size() == parameter_count(p), "unflatten: size mismatch");
  std::size_t off = 0;
  visit_tensors(p, [&](const std::string&, std::span<double> span) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), span.size(), span.begin());
    off += span.size();
  });
}

inline ModelParams zeros_like(const ModelParams& p) { return zero_model(p.shape); }

/// acc += g, tensor by tensor in visiting order.
inline void accumulate(ModelParams& acc, const ModelParams& g) {
  std::vector<std::span<const double>> src;
  visit_tensors(g, [&](const std::string&, std::span<const double> s) { src.push_back(s); });
  std::size_t k = 0;
  visit_tensors(acc, [&](const std::string&, std::span<double> d) {
    const auto s = src[k++];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  });
}

inline void accumulate(MlpParams& acc, const MlpParams& g) {
  for (std::size_t l = 0; l < acc.hidden.size(); ++l) {
    for (std::size_t i = 0; i < acc.hidden[l].weight.size(); ++i)
      acc.hidden[l].weight[i] += g.hidden[l].weight[i];
    for (std::size_t i = 0; i < acc.hidden[l].bias.size(); ++i)
      acc.hidden[l].bias[i] += g.hidden[l].bias[i];
  }
  for (std::size_t i = 0; i < acc.output.weight.size(); ++i) acc.output.weight[i] += g.output.weight[i];
  for (std::size_t i = 0; i < acc.output.bias.size(); ++i) acc.output.bias[i] += g.output.bias[i];
}

/// One estimation window, row-major: history is h x targets, controls is
/// N x controls, targets is N x targets (may be empty for pure inference).
struct WindowView {
  std::span<const double> history;
  std::span<const double> controls;
  std::span<const double> targets;
};

struct ExecOptions {
  bool time_parallel = false;  // parallelize along time and use the tree scan
  std::size_t workers = 1;
  std::size_t scan_cutoff = 64;
};

struct ForwardResult {
  std::vector<double> outputs;  // N x targets
  StateTrajectory trajectory;   // x0 and x_1..x_N
};

/// Intermediate values kept for the backward pass.
struct ForwardCache {
  std::vector<double> f0_tape;
  std::vector<double> fu_tapes;  // N x fu.tape_size()
  Spectrum spectrum;
};

namespace detail {

// Reductions over time use fixed chunks so that the summation order never
// depends on the worker count.
inline constexpr std::size_t kTimeChunk = 32;

inline std::size_t steps_of(const ModelParams& p, const WindowView& w) {
  const ModelShape& s = p.shape;
  require_shape(w.history.size() == s.history * s.targets,
                "forward: history has " + std::to_string(w.history.size()) + " values, expected " +
                    std::to_string(s.history * s.targets));
  require_shape(!w.controls.empty() && w.controls.size() % s.controls == 0,
                "forward: controls are not a whole number of rows of width " +
                    std::to_string(s.controls));
  const std::size_t n = w.controls.size() / s.controls;
  require_shape(w.targets.empty() || w.targets.size() == n * s.targets,
                "forward: targets do not match the number of control rows");
  return n;
}

inline void check_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw Error(ErrorCategory::numeric,
                  std::string("non-finite ") + what + " at flat index " + std::to_string(i));
}

}  // namespace detail

inline ForwardResult forward(const ModelParams& p, const WindowView& w, const ExecOptions& opts = {},
                             ForwardCache* cache = nullptr) {
  const ModelShape& s = p.shape;
  const std::size_t n = detail::steps_of(p, w);
  const std::size_t m = s.state;
  const std::size_t workers = opts.time_parallel ? std::max<std::size_t>(1, opts.workers) : 1;

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.spectrum = eigenvalues(p.eig);
  c.f0_tape.assign(p.f0.tape_size(), 0.0);
  const std::size_t fu_tape = p.fu.tape_size();
  c.fu_tapes.assign(n * fu_tape, 0.0);

  std::vector<cplx> x0(m);
  mlp_forward(p.f0, w.history, x0, c.f0_tape);

  std::vector<cplx> increments(n * m);
  parallel_for(n, workers, [&](std::size_t t) {
    mlp_forward(p.fu, w.controls.subspan(t * s.controls, s.controls),
                std::span<cplx>(increments.data() + t * m, m),
                std::span<double>(c.fu_tapes.data() + t * fu_tape, fu_tape));
  });

  const ScanSequence seq = ScanSequence::time_invariant(c.spectrum.lambdas, increments);
  ForwardResult r;
  r.trajectory = opts.time_parallel
                     ? parallel_scan(x0, seq, ScanOptions{workers, opts.scan_cutoff, nullptr})
                     : serial_recurrence(x0, seq);

  r.outputs.assign(n * s.targets, 0.0);
  parallel_for(n, workers, [&](std::size_t t) {
    const auto x = r.trajectory.state(t);
    for (std::size_t i = 0; i < s.targets; ++i) {
      const cplx* row = p.readout.data() + i * m;
      double y = 0.0;
      for (std::size_t j = 0; j < m; ++j) y += row[j].real() * x[j].real() - row[j].imag() * x[j].imag();
      r.outputs[t * s.targets + i] = y;
    }
  });
  detail::check_finite(r.outputs, "model output");
  return r;
}

/// Summed (not averaged) loss terms so that batches can be combined exactly.
struct LossTerms {
  double inference_sum = 0.0;
  std::size_t inference_count = 0;
  double smooth_sum = 0.0;
  std::size_t smooth_count = 0;

  void add(const LossTerms& o) {
    inference_sum += o.inference_sum;
    inference_count += o.inference_count;
    smooth_sum += o.smooth_sum;
    smooth_count += o.smooth_count;
  }
  double inference() const {
    return inference_count ? inference_sum / static_cast<double>(inference_count) : 0.0;
  }
  double smooth() const {
    return smooth_count ? smooth_sum / static_cast<double>(smooth_count) : 0.0;
  }
};

struct LossBreakdown {
  double total = 0.0;
  double inference = 0.0;
  double smooth = 0.0;
  double scale = 0.0;  // detached inference / smooth ratio, 0 when the smooth term is skipped
  double q = 0.0;
};

/// Below this the smooth term is dropped for the batch.
inline constexpr double kSmoothEpsilon = 1e-12;

/// total = inference + q * (inference / smooth) * smooth, with the ratio
/// treated as a constant by the backward pass.
inline LossBreakdown combine_loss(double inference, double smooth, double q) {
  if (!(q >= 0.0)) throw Error(ErrorCategory::config, "loss: q must be >= 0");
  LossBreakdown b;
  b.inference = inference;
  b.smooth = smooth;
  b.q = q;
  b.scale = smooth < kSmoothEpsilon ? 0.0 : inference / smooth;
  b.total = b.inference + b.q * b.scale * b.smooth;
  return b;
}

/// Loss terms of one window: SmoothL1 of outputs against targets, and SmoothL1
/// of per-component |x_t - x_{t-1}| against zero for t = 1..N.
inline LossTerms window_loss_terms(std::span<const double> outputs, std::span<const double> targets,
                                   const StateTrajectory& traj, double beta = 1.0) {
  require_shape(outputs.size() == targets.size(), "loss: outputs and targets differ in size");
  LossTerms t;
  for (std::size_t i = 0; i < outputs.size(); ++i)
    t.inference_sum += smooth_l1_term(outputs[i] - targets[i], beta);
  t.inference_count = outputs.size();
  for (std::size_t k = 0; k < traj.length; ++k) {
    const auto x = traj.state(k);
    const auto prev = traj.previous(k);
    for (std::size_t j = 0; j < traj.width; ++j)
      t.smooth_sum += smooth_l1_term(std::abs(x[j] - prev[j]), beta);
  }
  t.smooth_count = traj.length * traj.width;
  return t;
}

inline LossBreakdown loss(std::span<const double> outputs, std::span<const double> targets,
                          const StateTrajectory& traj, double q, double beta = 1.0) {
  const LossTerms t = window_loss_terms(outputs, targets, traj, beta);
  return combine_loss(t.inference(), t.smooth(), q);
}

/// Multipliers applied to the summed loss terms when differentiating.
struct LossWeights {
  double inference = 0.0;
  double smooth = 0.0;
};

/// Accumulates d(weights.inference * inference_sum + weights.smooth *
/// smooth_sum)/d(params) for one window into `grads`.
inline void window_backward(const ModelParams& p, const WindowView& w, const ForwardResult& fwd,
                            const ForwardCache& cache, const LossWeights& weights, double beta,
                            ModelParams& grads, const ExecOptions& opts = {}) {
  const ModelShape& s = p.shape;
  const std::size_t n = fwd.trajectory.length;
  const std::size_t m = s.state;
  const std::size_t nt = s.targets;
  require_shape(w.targets.size() == n * nt, "backward: targets missing or mis-sized");
  const std::size_t workers = opts.time_parallel ? std::max<std::size_t>(1, opts.workers) : 1;
  const std::size_t chunks = (n + detail::kTimeChunk - 1) / detail::kTimeChunk;
  const StateTrajectory& traj = fwd.trajectory;
  const bool use_smooth = weights.smooth != 0.0;

  // dL/dx_t from the readout and the smooth term, and readout gradients.
  std::vector<cplx> state_grads(n * m, cplx(0.0, 0.0));
  std::vector<cplx> x0_direct(m, cplx(0.0, 0.0));
  std::vector<std::vector<cplx>> readout_parts(chunks, std::vector<cplx>(nt * m, cplx(0.0, 0.0)));
  parallel_for(chunks, workers, [&](std::size_t ch) {
    const std::size_t t_end = std::min(n, (ch + 1) * detail::kTimeChunk);
    std::vector<cplx>& part = readout_parts[ch];
    for (std::size_t t = ch * detail::kTimeChunk; t < t_end; ++t) {
      const auto x = traj.state(t);
      cplx* g = state_grads.data() + t * m;
      for (std::size_t i = 0; i < nt; ++i) {
        const double dy =
            weights.inference * smooth_l1_slope(fwd.outputs[t * nt + i] - w.targets[t * nt + i], beta);
        if (dy == 0.0) continue;
        const cplx* row = p.readout.data() + i * m;
        cplx* prow = part.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
          g[j] += dy * std::conj(row[j]);
          prow[j] += dy * std::conj(x[j]);
        }
      }
    }
  });
  for (const auto& part : readout_parts)
    for (std::size_t k = 0; k < part.size(); ++k) grads.readout[k] += part[k];

  if (use_smooth) {
    // d/d(delta) of smooth_l1(|delta|): delta/beta in the quadratic branch,
    // delta/|delta| in the linear one. Both are 0 at delta = 0.
    for (std::size_t t = 0; t < n; ++t) {
      const auto x = traj.state(t);
      const auto prev = traj.previous(t);
      cplx* g = state_grads.data() + t * m;
      cplx* g_prev = t == 0 ? x0_direct.data() : state_grads.data() + (t - 1) * m;
      for (std::size_t j = 0; j < m; ++j) {
        const cplx d = x[j] - prev[j];
        const double r = std::abs(d);
        const cplx gd = weights.smooth * (r < beta ? d / beta : d / r);
        g[j] += gd;
        g_prev[j] -= gd;
      }
    }
  }

  const ScanSequence seq = ScanSequence::time_invariant(cache.spectrum.lambdas, std::vector<cplx>(n * m));
  const AdjointResult adj =
      adjoint_scan(seq, traj, state_grads,
                   ScanOptions{workers, opts.time_parallel ? opts.scan_cutoff : n + 1, nullptr});

  // Eigen parameters: G_lambda = sum_t g_t conj(x_{t-1}), then chain through
  // lambda = exp(-v + i theta).
  std::vector<cplx> g_lambda(m, cplx(0.0, 0.0));
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < m; ++j) g_lambda[j] += adj.grad_decays[t * m + j];
  for (std::size_t j = 0; j < m; ++j) {
    const cplx lambda = cache.spectrum.lambdas[j];
    const cplx d_nu = -decay_rate_grad(p.eig.nu_bar[j]) * lambda;
    const cplx d_theta = cplx(0.0, phase_grad(p.eig.theta_bar[j])) * lambda;
    grads.eig.nu_bar[j] += (std::conj(g_lambda[j]) * d_nu).real();
    grads.eig.theta_bar[j] += (std::conj(g_lambda[j]) * d_theta).real();
  }

  std::vector<cplx> g_x0 = adj.grad_x0;
  for (std::size_t j = 0; j < m; ++j) g_x0[j] += x0_direct[j];
  mlp_backward(p.f0, w.history, cache.f0_tape, g_x0, grads.f0);

  const std::size_t fu_tape = p.fu.tape_size();
  std::vector<MlpParams> fu_parts(chunks, make_mlp(s.fu_shape()));
  parallel_for(chunks, workers, [&](std::size_t ch) {
    const std::size_t t_end = std::min(n, (ch + 1) * detail::kTimeChunk);
    for (std::size_t t = ch * detail::kTimeChunk; t < t_end; ++t)
      mlp_backward(p.fu, w.controls.subspan(t * s.controls, s.controls),
                   std::span<const double>(cache.fu_tapes.data() + t * fu_tape, fu_tape),
                   std::span<const cplx>(adj.grad_increments.data() + t * m, m), fu_parts[ch]);
  });
  for (const MlpParams& part : fu_parts) accumulate(grads.fu, part);
}

struct BatchOptions {
  std::size_t workers = 1;
  // false: windows are spread over workers, each evaluated serially in time.
  // true: windows run one after another, each parallel in time.
  bool time_parallel = false;
  std::size_t scan_cutoff = 64;
};

namespace detail {

// Windows per data-parallel work unit; fixed so that reductions are ordered
// identically for every worker count.
inline constexpr std::size_t kWindowChunk = 8;

inline ExecOptions window_exec(const BatchOptions& o) {
  return ExecOptions{o.time_parallel, o.time_parallel ? o.workers : 1, o.scan_cutoff};
}

inline std::size_t batch_workers(const BatchOptions& o) { return o.time_parallel ? 1 : o.workers; }

}  // namespace detail

inline LossTerms batch_loss_terms(const ModelParams& p, std::span<const WindowView> windows,
                                  double beta, const BatchOptions& opts = {}) {
  std::vector<LossTerms> per(windows.size());
  parallel_for(windows.size(), detail::batch_workers(opts), [&](std::size_t k) {
    const ForwardResult f = forward(p, windows[k], detail::window_exec(opts));
    per[k] = window_loss_terms(f.outputs, windows[k].targets, f.trajectory, beta);
  });
  LossTerms total;
  for (const LossTerms& t : per) total.add(t);
  return total;
}

/// Gradient of weights.inference * sum(inference terms) + weights.smooth *
/// sum(smooth terms) over a batch of windows.
inline ModelParams weighted_gradient(const ModelParams& p, std::span<const WindowView> windows,
                                     const LossWeights& weights, double beta,
                                     const BatchOptions& opts = {}) {
  const std::size_t chunks = (windows.size() + detail::kWindowChunk - 1) / detail::kWindowChunk;
  std::vector<ModelParams> parts(chunks);
  parallel_for(chunks, detail::batch_workers(opts), [&](std::size_t ch) {
    parts[ch] = zeros_like(p);
    const std::size_t end = std::min(windows.size(), (ch + 1) * detail::kWindowChunk);
    for (std::size_t k = ch * detail::kWindowChunk; k < end; ++k) {
      ForwardCache cache;
      const ForwardResult f = forward(p, windows[k], detail::window_exec(opts), &cache);
      window_backward(p, windows[k], f, cache, weights, beta, parts[ch], detail::window_exec(opts));
    }
  });
  ModelParams grads = zeros_like(p);
  for (const ModelParams& part : parts) accumulate(grads, part);
  return grads;
}

struct BatchGradient {
  LossBreakdown loss;
  ModelParams grads;
};

/// Loss and gradient of the regularized objective over a batch. Both loss
/// terms are batch means; the scale ratio is formed from them and then held
/// constant, so the gradient is grad(inference) + q * scale * grad(smooth).
inline BatchGradient batch_gradient(const ModelParams& p, std::span<const WindowView> windows,
                                    double q, double beta = 1.0, const BatchOptions& opts = {}) {
  require_shape(!windows.empty(), "batch_gradient: empty batch");
  const LossTerms terms = batch_loss_terms(p, windows, beta, opts);
  BatchGradient r;
  r.loss = combine_loss(terms.inference(), terms.smooth(), q);
  LossWeights weights;
  weights.inference = 1.0 / static_cast<double>(terms.inference_count);
  if (r.loss.q != 0.0 && r.loss.scale != 0.0)
    weights.smooth = r.loss.q * r.loss.scale / static_cast<double>(terms.smooth_count);
  r.grads = weighted_gradient(p, windows, weights, beta, opts);
  return r;
}

}  // namespace cndm
