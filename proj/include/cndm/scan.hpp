#pragma once

// Linear recurrence x_t = a_t * x_{t-1} + b_t over complex diagonal decays,
// evaluated serially, with a work-efficient two-sweep parallel scan, and in
// reverse for gradients.
//
// An element (a, b) is the affine map x -> a * x + b. Composition
//   combine((a1, b1), (a2, b2)) = (a2 * a1, a2 * b1 + b2)
// (first e1, then e2) is associative with identity (1, 0).

#include <algorithm>
#include <bit>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cndm/common.hpp"
#include "cndm/parallel.hpp"

namespace cndm {

struct ScanElement {
  std::vector<cplx> decay;
  std::vector<cplx> increment;

  std::size_t width() const { return decay.size(); }

  static ScanElement identity(std::size_t m) {
    return {std::vector<cplx>(m, cplx(1.0, 0.0)), std::vector<cplx>(m, cplx(0.0, 0.0))};
  }
};

inline ScanElement combine(const ScanElement& e1, const ScanElement& e2) {
  require_shape(e1.decay.size() == e1.increment.size() &&
                    e2.decay.size() == e2.increment.size() &&
                    e1.decay.size() == e2.decay.size(),
                "combine: element widths differ");
  const std::size_t m = e1.width();
  ScanElement out;
  out.decay.resize(m);
  out.increment.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    out.decay[j] = e2.decay[j] * e1.decay[j];
    out.increment[j] = e2.decay[j] * e1.increment[j] + e2.increment[j];
  }
  return out;
}

/// A sequence of N elements of width m stored row-major (row t = element t).
class ScanSequence {
 public:
  ScanSequence() = default;
  ScanSequence(std::size_t length, std::size_t width)
      : length_(length),
        width_(width),
        decay_(length * width, cplx(1.0, 0.0)),
        increment_(length * width, cplx(0.0, 0.0)) {}

  /// Sequence with the same decay vector at every step.
  static ScanSequence time_invariant(std::span<const cplx> decay,
                                     std::span<const cplx> increments) {
    require_shape(!decay.empty() && increments.size() % decay.size() == 0,
                  "time_invariant: increments are not a whole number of rows");
    ScanSequence s(increments.size() / decay.size(), decay.size());
    for (std::size_t t = 0; t < s.length_; ++t)
      std::copy(decay.begin(), decay.end(), s.decay_.begin() + static_cast<std::ptrdiff_t>(t * s.width_));
    std::copy(increments.begin(), increments.end(), s.increment_.begin());
    return s;
  }

  static ScanSequence from_elements(std::span<const ScanElement> elements) {
    require_shape(!elements.empty(), "scan sequence: no elements");
    const std::size_t m = elements.front().width();
    ScanSequence s(elements.size(), m);
    for (std::size_t t = 0; t < elements.size(); ++t) {
      require_shape(elements[t].decay.size() == m && elements[t].increment.size() == m,
                    "scan sequence: element " + std::to_string(t) + " has the wrong width");
      std::copy(elements[t].decay.begin(), elements[t].decay.end(), s.decay(t).begin());
      std::copy(elements[t].increment.begin(), elements[t].increment.end(), s.increment(t).begin());
    }
    return s;
  }

  std::size_t length() const { return length_; }
  std::size_t width() const { return width_; }

  std::span<cplx> decay(std::size_t t) { return {decay_.data() + t * width_, width_}; }
  std::span<const cplx> decay(std::size_t t) const { return {decay_.data() + t * width_, width_}; }
  std::span<cplx> increment(std::size_t t) { return {increment_.data() + t * width_, width_}; }
  std::span<const cplx> increment(std::size_t t) const {
    return {increment_.data() + t * width_, width_};
  }
  std::span<cplx> increments() { return increment_; }
  std::span<const cplx> increments() const { return increment_; }

 private:
  std::size_t length_ = 0;
  std::size_t width_ = 0;
  std::vector<cplx> decay_;
  std::vector<cplx> increment_;
};

/// initial is x_0; state(t) for t in [0, N) is x_{t+1}, the state after
/// applying element t.
struct StateTrajectory {
  std::vector<cplx> initial;
  std::vector<cplx> states;
  std::size_t length = 0;
  std::size_t width = 0;

  std::span<const cplx> state(std::size_t t) const { return {states.data() + t * width, width}; }
  std::span<cplx> state(std::size_t t) { return {states.data() + t * width, width}; }
  /// The state before element t (x_0 for t = 0).
  std::span<const cplx> previous(std::size_t t) const {
    return t == 0 ? std::span<const cplx>(initial) : state(t - 1);
  }
};

struct ScanStats {
  std::size_t phases = 0;    // sequential steps; combines within a phase are independent
  std::size_t combines = 0;  // element combines, summed over all phases
};

struct ScanOptions {
  std::size_t workers = 1;
  std::size_t serial_cutoff = 64;  // N below this runs the serial loop
  ScanStats* stats = nullptr;
};

namespace detail {

inline void check_initial(std::span<const cplx> x0, const ScanSequence& seq) {
  require_shape(x0.size() == seq.width(),
                "scan: initial state width " + std::to_string(x0.size()) +
                    " does not match element width " + std::to_string(seq.width()));
  require_shape(seq.length() >= 1, "scan: sequence is empty");
}

}  // namespace detail

/// Left-to-right loop. This is the reference every other path is checked
/// against.
inline StateTrajectory serial_recurrence(std::span<const cplx> x0, const ScanSequence& seq) {
  detail::check_initial(x0, seq);
  const std::size_t n = seq.length();
  const std::size_t m = seq.width();
  StateTrajectory traj{std::vector<cplx>(x0.begin(), x0.end()),
                       std::vector<cplx>(n * m), n, m};
  const cplx* prev = x0.data();
  for (std::size_t t = 0; t < n; ++t) {
    const auto a = seq.decay(t);
    const auto b = seq.increment(t);
    cplx* out = traj.states.data() + t * m;
    for (std::size_t j = 0; j < m; ++j) out[j] = a[j] * prev[j] + b[j];
    prev = out;
  }
  return traj;
}

/// Two-sweep (up-sweep / down-sweep) exclusive scan over a binary tree padded
/// to P = bit_ceil(N) leaves, followed by one elementwise step that turns
/// exclusive prefixes into states.
///
/// The initial state is the leading element (1, x0). It is placed at the root
/// before the down-sweep, so every exclusive prefix is already composed with
/// it and the top level of the up-sweep (the grand total) is never needed.
/// That gives (log2 P - 1) + log2 P + 1 = 2 ceil(log2 N) phases for N >= 2.
///
/// Each level touches disjoint tree slots and the tree shape depends only on
/// N, so the output is bitwise identical for every worker count.
inline StateTrajectory tree_scan(std::span<const cplx> x0, const ScanSequence& seq,
                                 std::size_t workers, ScanStats* stats = nullptr) {
  detail::check_initial(x0, seq);
  if (workers == 0) throw Error(ErrorCategory::config, "scan: workers must be >= 1");
  const std::size_t n = seq.length();
  const std::size_t m = seq.width();
  const std::size_t leaves = std::bit_ceil(n);

  std::vector<cplx> tree_a(leaves * m, cplx(1.0, 0.0));
  std::vector<cplx> tree_b(leaves * m, cplx(0.0, 0.0));
  for (std::size_t t = 0; t < n; ++t) {
    std::copy(seq.decay(t).begin(), seq.decay(t).end(), tree_a.begin() + static_cast<std::ptrdiff_t>(t * m));
    std::copy(seq.increment(t).begin(), seq.increment(t).end(),
              tree_b.begin() + static_cast<std::ptrdiff_t>(t * m));
  }

  // Tiny levels are not worth a fork/join.
  const auto level_workers = [&](std::size_t nodes) {
    return nodes * m >= 256 ? workers : std::size_t{1};
  };
  ScanStats local;

  // Up-sweep: node i (right child) absorbs node j (left sibling subtree).
  for (std::size_t stride = 2; stride < leaves; stride *= 2) {
    const std::size_t nodes = leaves / stride;
    parallel_for(nodes, level_workers(nodes), [&](std::size_t k) {
      const std::size_t i = (k * stride + stride - 1) * m;
      const std::size_t j = (k * stride + stride / 2 - 1) * m;
      for (std::size_t c = 0; c < m; ++c) {
        tree_b[i + c] = tree_a[i + c] * tree_b[j + c] + tree_b[i + c];
        tree_a[i + c] = tree_a[i + c] * tree_a[j + c];
      }
    });
    ++local.phases;
    local.combines += nodes;
  }

  // Seed the root with the leading element (1, x0).
  {
    const std::size_t root = (leaves - 1) * m;
    for (std::size_t c = 0; c < m; ++c) {
      tree_a[root + c] = cplx(1.0, 0.0);
      tree_b[root + c] = x0[c];
    }
  }

  // Down-sweep: left child takes the parent's prefix, right child gets the
  // parent's prefix composed with the old left subtree total.
  for (std::size_t stride = leaves; stride >= 2; stride /= 2) {
    const std::size_t nodes = leaves / stride;
    parallel_for(nodes, level_workers(nodes), [&](std::size_t k) {
      const std::size_t i = (k * stride + stride - 1) * m;
      const std::size_t j = (k * stride + stride / 2 - 1) * m;
      for (std::size_t c = 0; c < m; ++c) {
        const cplx left_a = tree_a[j + c];
        const cplx left_b = tree_b[j + c];
        const cplx parent_a = tree_a[i + c];
        const cplx parent_b = tree_b[i + c];
        tree_a[j + c] = parent_a;
        tree_b[j + c] = parent_b;
        tree_a[i + c] = left_a * parent_a;
        tree_b[i + c] = left_a * parent_b + left_b;
      }
    });
    ++local.phases;
    local.combines += nodes;
  }

  // Leaf t now holds (x0 then elements 0..t-1); its increment is x_t. One more
  // elementwise step applies element t itself.
  StateTrajectory traj{std::vector<cplx>(x0.begin(), x0.end()), std::vector<cplx>(n * m), n, m};
  parallel_for(n, level_workers(n), [&](std::size_t t) {
    const auto a = seq.decay(t);
    const auto b = seq.increment(t);
    const cplx* prefix = tree_b.data() + t * m;
    cplx* out = traj.states.data() + t * m;
    for (std::size_t c = 0; c < m; ++c) out[c] = a[c] * prefix[c] + b[c];
  });
  ++local.phases;
  local.combines += n;

  if (stats) *stats = local;
  return traj;
}

/// Parallel scan entry point; short sequences take the serial loop.
inline StateTrajectory parallel_scan(std::span<const cplx> x0, const ScanSequence& seq,
                                     const ScanOptions& opts = {}) {
  if (opts.workers == 0) throw Error(ErrorCategory::config, "scan: workers must be >= 1");
  if (seq.length() < opts.serial_cutoff) {
    if (opts.stats) *opts.stats = ScanStats{seq.length(), seq.length()};
    return serial_recurrence(x0, seq);
  }
  return tree_scan(x0, seq, opts.workers, opts.stats);
}

/// Gradients of a real loss through the recurrence. Complex gradients use the
/// real-pair convention: G = dL/dRe(z) + i dL/dIm(z).
struct AdjointResult {
  std::vector<cplx> grad_x0;          // m
  std::vector<cplx> grad_increments;  // N * m, row t matches element t
  std::vector<cplx> grad_decays;      // N * m
};

/// output_grads row t is dL/d(state t) (the direct dependence only). The
/// adjoint g_t = d_t + conj(a_{t+1}) g_{t+1} is itself a linear recurrence
/// and runs through the same scan, over the reversed index.
inline AdjointResult adjoint_scan(const ScanSequence& seq, const StateTrajectory& traj,
                                  std::span<const cplx> output_grads,
                                  const ScanOptions& opts = {}) {
  const std::size_t n = seq.length();
  const std::size_t m = seq.width();
  require_shape(traj.length == n && traj.width == m, "adjoint_scan: trajectory shape mismatch");
  require_shape(output_grads.size() == n * m, "adjoint_scan: output gradient shape mismatch");
  require_shape(n >= 1, "adjoint_scan: sequence is empty");

  ScanSequence reversed(n, m);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = n - 1 - k;
    auto a = reversed.decay(k);
    auto b = reversed.increment(k);
    for (std::size_t c = 0; c < m; ++c) {
      // k = 0 multiplies the zero initial adjoint, so its decay is arbitrary.
      a[c] = k == 0 ? cplx(0.0, 0.0) : std::conj(seq.decay(t + 1)[c]);
      b[c] = output_grads[t * m + c];
    }
  }
  const std::vector<cplx> zero(m, cplx(0.0, 0.0));
  const StateTrajectory adj = parallel_scan(zero, reversed, opts);

  AdjointResult r;
  r.grad_increments.resize(n * m);
  r.grad_decays.resize(n * m);
  r.grad_x0.resize(m);
  for (std::size_t t = 0; t < n; ++t) {
    const auto g = adj.state(n - 1 - t);
    const auto prev = traj.previous(t);
    for (std::size_t c = 0; c < m; ++c) {
      r.grad_increments[t * m + c] = g[c];
      r.grad_decays[t * m + c] = g[c] * std::conj(prev[c]);
    }
  }
  const auto g0 = adj.state(n - 1);
  for (std::size_t c = 0; c < m; ++c) r.grad_x0[c] = std::conj(seq.decay(0)[c]) * g0[c];
  return r;
}

}  // namespace cndm
