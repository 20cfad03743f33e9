#pragma once

// Synthetic datasets in the same profile layout as the motor recordings.
//
// synth_generate: a known complex-diagonal linear system driven by smooth
// random inputs, observed with Gaussian noise. It is in the model class, so a
// trained model can be checked against the generating spectrum.
//
// synth_pmsm: a four-node lumped thermal network with speed/torque dependent
// losses and drive-cycle inputs. Nonlinear and not in the model class; used
// where the motor recordings are not available.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cndm/common.hpp"
#include "cndm/data.hpp"
#include "cndm/random.hpp"
#include "cndm/spectral.hpp"

namespace cndm {

/// Nominal magnitudes used by the linear generator to turn raw controls into
/// O(1) features.
inline constexpr std::array<double, kNumControls> kSynthFeatureScale = {
    100.0, 100.0, 130.0, 130.0, 250.0, 250.0, 250.0, 6000.0, 184.0, 354.0};

struct LinearTruth {
  Spectrum spectrum;
  std::vector<cplx> input;    // m x kNumControls, acts on raw / kSynthFeatureScale
  std::vector<cplx> bias;     // m
  std::vector<cplx> readout;  // kNumTargets x m; outputs are temperatures / 100 C

  std::size_t state_size() const { return spectrum.size(); }

  void features(std::span<const double> raw_controls, std::span<double> f) const {
    for (std::size_t k = 0; k < kNumControls; ++k) f[k] = raw_controls[k] / kSynthFeatureScale[k];
  }

  void step(std::span<cplx> x, std::span<const double> raw_controls) const {
    std::array<double, kNumControls> f{};
    features(raw_controls, f);
    const std::size_t m = state_size();
    for (std::size_t j = 0; j < m; ++j) {
      cplx drive = bias[j];
      for (std::size_t k = 0; k < kNumControls; ++k) drive += input[j * kNumControls + k] * f[k];
      x[j] = spectrum.lambdas[j] * x[j] + drive;
    }
  }

  /// Temperatures in C.
  void observe(std::span<const cplx> x, std::span<double> out) const {
    const std::size_t m = state_size();
    for (std::size_t i = 0; i < kNumTargets; ++i) {
      double y = 0.0;
      for (std::size_t j = 0; j < m; ++j) y += (readout[i * m + j] * x[j]).real();
      out[i] = 100.0 * y;
    }
  }
};

struct SynthDataset {
  std::vector<Profile> profiles;  // raw units, ids from synth_profile_ids
  LinearTruth truth;
  std::vector<std::vector<cplx>> states;  // per profile, rows x m: state after each row
  double noise_sigma = 0.0;               // in normalized (temperature / 100 C) units
};

/// Profile ids for synthetic sets: the designated validation and test ids
/// first, then 1, 2, 3, ...
inline std::vector<long> synth_profile_ids(std::size_t n) {
  std::vector<long> ids;
  for (long id : {58L, 65L, 72L})
    if (ids.size() < n) ids.push_back(id);
  for (long id = 1; ids.size() < n; ++id)
    if (id != 58 && id != 65 && id != 72) ids.push_back(id);
  return ids;
}

namespace detail {

/// Smooth bounded signal in [-1, 1]: normalized sum of random sinusoids.
struct SmoothSignal {
  std::array<double, 4> freq{};
  std::array<double, 4> phase{};
  std::array<double, 4> amp{};

  static SmoothSignal random(Rng& rng, double min_period, double max_period) {
    SmoothSignal s;
    double total = 0.0;
    for (std::size_t k = 0; k < s.freq.size(); ++k) {
      const double period = min_period * std::pow(max_period / min_period, uniform01(rng));
      s.freq[k] = 2.0 * kPi / period;
      s.phase[k] = uniform(rng, 0.0, 2.0 * kPi);
      s.amp[k] = uniform(rng, 0.2, 1.0);
      total += s.amp[k];
    }
    for (double& a : s.amp) a /= total;
    return s;
  }

  double operator()(double t) const {
    double v = 0.0;
    for (std::size_t k = 0; k < freq.size(); ++k) v += amp[k] * std::sin(freq[k] * t + phase[k]);
    return v;
  }
};

/// Solves the square system a x = b in place (partial pivoting).
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    if (std::abs(a[piv * n + c]) < 1e-300) throw Error(ErrorCategory::numeric, "singular system");
    for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r * n + k] * x[k];
    x[r] = s / a[r * n + r];
  }
  return x;
}

}  // namespace detail

/// Random linear system with the given spectrum. Input gains are scaled by
/// (1 - |lambda|) so every mode has O(1) steady-state gain, and the bias puts
/// the outputs at a plausible operating temperature.
inline LinearTruth make_linear_truth(const Spectrum& spectrum, std::uint64_t seed) {
  for (const cplx& l : spectrum.lambdas)
    if (!(std::abs(l) < 1.0)) throw Error(ErrorCategory::config, "synthetic spectrum must satisfy |lambda| < 1");
  const std::size_t m = spectrum.size();
  require_shape(m >= 1, "synthetic spectrum is empty");
  Rng rng(derive_seed(seed, 11));
  LinearTruth t;
  t.spectrum = spectrum;
  t.readout.resize(kNumTargets * m);
  const double c_bound = 1.0 / std::sqrt(static_cast<double>(m));
  for (cplx& c : t.readout) c = cplx(uniform(rng, -c_bound, c_bound), uniform(rng, -c_bound, c_bound));
  t.input.resize(m * kNumControls);
  for (std::size_t j = 0; j < m; ++j) {
    const double gain = 1.0 - std::abs(spectrum.lambdas[j]);
    for (std::size_t k = 0; k < kNumControls; ++k)
      t.input[j * kNumControls + k] = gain * cplx(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5));
  }
  // Minimum-norm steady state s with Re(C s) = offsets, then bias = (1 - lambda) s.
  std::array<double, kNumTargets> offsets{};
  for (double& o : offsets) o = uniform(rng, 0.4, 0.8);
  const std::size_t cols = 2 * m;
  std::vector<double> a(kNumTargets * cols);
  for (std::size_t i = 0; i < kNumTargets; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      a[i * cols + j] = t.readout[i * m + j].real();
      a[i * cols + m + j] = -t.readout[i * m + j].imag();
    }
  std::vector<double> gram(kNumTargets * kNumTargets, 0.0);
  for (std::size_t r = 0; r < kNumTargets; ++r)
    for (std::size_t c = 0; c < kNumTargets; ++c)
      for (std::size_t k = 0; k < cols; ++k) gram[r * kNumTargets + c] += a[r * cols + k] * a[c * cols + k];
  const std::vector<double> y = detail::solve_dense(gram, std::vector<double>(offsets.begin(), offsets.end()));
  t.bias.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < kNumTargets; ++i) {
      re += a[i * cols + j] * y[i];
      im += a[i * cols + m + j] * y[i];
    }
    t.bias[j] = (cplx(1.0, 0.0) - spectrum.lambdas[j]) * cplx(re, im);
  }
  return t;
}

/// Raw control trajectory of one synthetic profile: smooth inputs in the
/// physical ranges of the motor recordings.
inline std::vector<double> synth_controls(Rng& rng, std::size_t rows) {
  struct Channel {
    double center, amplitude;
  };
  const std::array<Channel, kNumMeasuredControls> channels = {{
      {25.0, 5.0},      // ambient
      {45.0, 25.0},     // coolant
      {0.0, 120.0},     // u_d
      {0.0, 120.0},     // u_q
      {0.0, 230.0},     // i_d
      {0.0, 230.0},     // i_q
      {10.0, 240.0},    // torque
      {3000.0, 2900.0}  // motor_speed
  }};
  std::vector<double> raw(rows * kNumMeasuredControls);
  for (std::size_t c = 0; c < kNumMeasuredControls; ++c) {
    const detail::SmoothSignal sig = detail::SmoothSignal::random(rng, 20.0, 400.0);
    const double t0 = uniform(rng, 0.0, 1e4);
    for (std::size_t r = 0; r < rows; ++r)
      raw[r * kNumMeasuredControls + c] = channels[c].center + channels[c].amplitude * sig(t0 + static_cast<double>(r));
  }
  return raw;
}

/// Profiles of `length` rows from the given linear system. The state starts at
/// the bias steady state and runs a burn-in before recording. Noise is added
/// to the recorded temperatures only (sigma in temperature / 100 C units).
inline SynthDataset synth_generate(const LinearTruth& truth, std::uint64_t seed, std::size_t n_profiles,
                                   std::size_t length, double noise_sigma = 0.001,
                                   std::size_t burn_in = 500) {
  require_shape(n_profiles >= 1 && length >= 1, "synth_generate: need at least one row and profile");
  const std::size_t m = truth.state_size();
  SynthDataset ds;
  ds.truth = truth;
  ds.noise_sigma = noise_sigma;
  const std::vector<long> ids = synth_profile_ids(n_profiles);
  for (std::size_t pi = 0; pi < n_profiles; ++pi) {
    Rng rng(derive_seed(seed, 1000 + pi));
    const std::vector<double> raw = synth_controls(rng, burn_in + length);
    std::vector<cplx> x(m);
    for (std::size_t j = 0; j < m; ++j) x[j] = truth.bias[j] / (cplx(1.0, 0.0) - truth.spectrum.lambdas[j]);
    std::array<double, kNumControls> row{};
    std::vector<double> measured(length * kNumMeasuredControls);
    std::vector<double> targets(length * kNumTargets);
    std::vector<cplx> states(length * m);
    for (std::size_t r = 0; r < burn_in + length; ++r) {
      std::copy_n(raw.begin() + static_cast<std::ptrdiff_t>(r * kNumMeasuredControls), kNumMeasuredControls,
                  row.begin());
      detail::derive_magnitudes(row);
      truth.step(x, row);
      if (r < burn_in) continue;
      const std::size_t k = r - burn_in;
      std::copy_n(row.begin(), kNumMeasuredControls, measured.begin() + static_cast<std::ptrdiff_t>(k * kNumMeasuredControls));
      std::span<double> y(targets.data() + k * kNumTargets, kNumTargets);
      truth.observe(x, y);
      if (noise_sigma > 0.0)
        for (double& v : y) v += 100.0 * noise_sigma * normal01(rng);
      std::copy(x.begin(), x.end(), states.begin() + static_cast<std::ptrdiff_t>(k * m));
    }
    ds.profiles.push_back(make_profile(ids[pi], measured, targets));
    ds.states.push_back(std::move(states));
  }
  return ds;
}

inline SynthDataset synth_generate(const Spectrum& spectrum, std::uint64_t seed, std::size_t n_profiles,
                                   std::size_t length, double noise_sigma = 0.001) {
  return synth_generate(make_linear_truth(spectrum, seed), seed, n_profiles, length, noise_sigma);
}

/// Predictor that runs the generating system from its true state at the end of
/// the window history. Needs the dataset's profile order (ids) and the
/// normalization used to produce the window's controls.
inline Predictor truth_predictor(const SynthDataset& ds, const NormStats& stats) {
  return [&ds, stats](const WindowView& w, const Profile& p, std::size_t start) {
    std::size_t idx = ds.profiles.size();
    for (std::size_t i = 0; i < ds.profiles.size(); ++i)
      if (ds.profiles[i].id == p.id) idx = i;
    if (idx == ds.profiles.size()) throw Error(ErrorCategory::data, "truth predictor: unknown profile");
    const std::size_t m = ds.truth.state_size();
    const std::size_t h = w.history.size() / kNumTargets;
    const std::size_t n = w.controls.size() / kNumControls;
    std::vector<cplx> x(ds.states[idx].begin() + static_cast<std::ptrdiff_t>((start + h - 1) * m),
                        ds.states[idx].begin() + static_cast<std::ptrdiff_t>((start + h) * m));
    std::vector<double> out(n * kNumTargets);
    std::array<double, kNumControls> raw{};
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t k = 0; k < kNumControls; ++k) raw[k] = w.controls[t * kNumControls + k] * stats.control_divisors[k];
      ds.truth.step(x, raw);
      std::span<double> y(out.data() + t * kNumTargets, kNumTargets);
      ds.truth.observe(x, y);
      for (double& v : y) v /= stats.temperature_divisor;
    }
    return out;
  };
}

struct PmsmSimConfig {
  std::size_t n_profiles = 12;
  std::size_t min_rows = 4000;  // at 2 Hz
  std::size_t max_rows = 8000;
  std::uint64_t seed = 0;
  double measurement_noise_K = 0.05;
};

/// Four-node thermal network (magnet, stator tooth, winding, yoke) at 2 Hz
/// with copper losses growing with winding temperature and speed-dependent
/// iron and rotor losses. Voltages and currents follow a simplified dq model.
inline std::vector<Profile> synth_pmsm(const PmsmSimConfig& cfg) {
  require_shape(cfg.n_profiles >= 1 && cfg.min_rows >= 1 && cfg.max_rows >= cfg.min_rows,
                "synth_pmsm: bad profile sizes");
  const std::vector<long> ids = synth_profile_ids(cfg.n_profiles);
  constexpr double dt = 0.5;  // s
  constexpr double pole_pairs = 4.0, flux = 0.04, ls = 1e-4, rs20 = 0.015, kt = 1.0;
  // Capacities (J/K) and conductances (W/K).
  constexpr double c_pm = 15000.0, c_st = 8000.0, c_sw = 6000.0, c_sy = 20000.0;
  constexpr double g_sw_st = 40.0, g_sw_sy = 20.0, g_st_sy = 60.0, g_pm_st = 3.0, g_pm_amb = 1.0;
  constexpr double g_sy_cool = 30.0, g_sy_amb = 2.0;

  std::vector<Profile> out;
  for (std::size_t pi = 0; pi < cfg.n_profiles; ++pi) {
    Rng rng(derive_seed(cfg.seed, 5000 + pi));
    const std::size_t rows =
        cfg.min_rows + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(cfg.max_rows - cfg.min_rows + 1));
    std::vector<double> measured(rows * kNumMeasuredControls);
    std::vector<double> targets(rows * kNumTargets);

    double amb = uniform(rng, 20.0, 28.0), cool = uniform(rng, 20.0, 60.0);
    double speed = 0.0, torque = 0.0;
    double sp_speed = 0.0, sp_torque = 0.0, sp_cool = cool;
    std::size_t hold = 0;
    double t_pm = cool, t_st = cool, t_sw = cool, t_sy = cool;
    for (std::size_t r = 0; r < rows; ++r) {
      if (hold == 0) {
        hold = 60 + static_cast<std::size_t>(uniform01(rng) * 1200.0);
        sp_speed = uniform01(rng) < 0.1 ? 0.0 : uniform(rng, 0.0, 6000.0);
        sp_torque = uniform01(rng) < 0.1 ? 0.0 : uniform(rng, -240.0, 260.0);
        if (uniform01(rng) < 0.2) sp_cool = uniform(rng, 20.0, 70.0);
      }
      --hold;
      speed += (sp_speed - speed) / 20.0;
      torque += (sp_torque - torque) / 6.0;
      cool += (sp_cool - cool) / 400.0;
      amb += 0.002 * normal01(rng) + (24.0 - amb) / 20000.0;

      const double omega = speed * 2.0 * kPi / 60.0 * pole_pairs;
      const double i_q = torque / kt;
      const double i_d = -std::clamp((speed - 3000.0) / 3000.0, 0.0, 1.0) * 180.0;
      const double rs = rs20 * (1.0 + 0.0039 * (t_sw - 20.0));
      const double u_d = rs * i_d - omega * ls * i_q;
      const double u_q = rs * i_q + omega * (ls * i_d + flux);
      const double i2 = i_d * i_d + i_q * i_q;

      const double p_cu = 1.5 * rs * i2;
      const double f = speed / 1000.0;
      const double p_fe = 8.0 * std::pow(f, 1.5) * (1.0 + 0.5 * i2 / 62500.0);
      const double p_rotor = 3.0 * f * f + 20.0 * i2 / 62500.0 * f;

      const double q_sw = p_cu - g_sw_st * (t_sw - t_st) - g_sw_sy * (t_sw - t_sy);
      const double q_st = 0.6 * p_fe + g_sw_st * (t_sw - t_st) - g_st_sy * (t_st - t_sy) + g_pm_st * (t_pm - t_st);
      const double q_sy = 0.4 * p_fe + g_sw_sy * (t_sw - t_sy) + g_st_sy * (t_st - t_sy) -
                          g_sy_cool * (t_sy - cool) - g_sy_amb * (t_sy - amb);
      const double q_pm = p_rotor - g_pm_st * (t_pm - t_st) - g_pm_amb * (t_pm - amb);
      t_sw += dt * q_sw / c_sw;
      t_st += dt * q_st / c_st;
      t_sy += dt * q_sy / c_sy;
      t_pm += dt * q_pm / c_pm;

      double* m = measured.data() + r * kNumMeasuredControls;
      m[0] = amb;
      m[1] = cool;
      m[2] = u_d;
      m[3] = u_q;
      m[4] = i_d;
      m[5] = i_q;
      m[6] = torque;
      m[7] = speed;
      double* y = targets.data() + r * kNumTargets;
      y[0] = t_pm + cfg.measurement_noise_K * normal01(rng);
      y[1] = t_st + cfg.measurement_noise_K * normal01(rng);
      y[2] = t_sw + cfg.measurement_noise_K * normal01(rng);
      y[3] = t_sy + cfg.measurement_noise_K * normal01(rng);
    }
    out.push_back(make_profile(ids[pi], measured, targets));
  }
  return out;
}

}  // namespace cndm
