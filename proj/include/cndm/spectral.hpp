#pragma once

// Stability-constrained parameterization of the diagonal state matrix.
//
// Each unique eigenvalue is lambda = exp(-exp(nu_bar) + i * exp(theta_bar)).
// Its modulus exp(-exp(nu_bar)) lies in (0, 1) for every finite nu_bar, so no
// optimizer step can leave the stable region. Conjugate partners are never
// stored; the model reads out Re(C x), which accounts for them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cndm/common.hpp"
#include "cndm/random.hpp"

namespace cndm {

struct EigenParams {
  std::vector<double> nu_bar;     // log of the decay rate v, |lambda| = exp(-v)
  std::vector<double> theta_bar;  // log of the phase in radians

  std::size_t size() const { return nu_bar.size(); }
};

struct Spectrum {
  std::vector<cplx> lambdas;

  std::size_t size() const { return lambdas.size(); }
};

struct InitConfig {
  double r_min = 0.9;
  double r_max = 1.0;
  double phi = 0.1 * kPi;
  std::size_t m = 16;
  std::uint64_t seed = 0;
};

/// Phase floor applied before the logarithm at initialization.
inline constexpr double kInitMinPhase = 1e-8;

// Floating point bounds on v = exp(nu_bar) and theta = exp(theta_bar). Without
// them exp(-exp(-1e3)) rounds to exactly 1 and exp(-exp(1e3)) to exactly 0.
// Outside the bounds the map is flat (zero gradient).
inline constexpr double kMinDecayRate = 1e-12;  // |lambda| <= 1 - 1e-12
inline constexpr double kMaxDecayRate = 50.0;   // |lambda| >= ~1.9e-22
inline constexpr double kMinPhase = 1e-30;
inline constexpr double kMaxPhase = kPi;

inline void validate(const InitConfig& cfg) {
  if (!(cfg.r_min >= 0.0) || !(cfg.r_min < cfg.r_max) || !(cfg.r_max <= 1.0))
    throw Error(ErrorCategory::config,
                "ring init requires 0 <= r_min < r_max <= 1 (got r_min=" +
                    format_double(cfg.r_min) + ", r_max=" + format_double(cfg.r_max) + ")");
  if (!(cfg.phi > 0.0) || !(cfg.phi <= kPi))
    throw Error(ErrorCategory::config,
                "ring init requires 0 < phi <= pi (got " + format_double(cfg.phi) + ")");
  if (cfg.m == 0) throw Error(ErrorCategory::config, "ring init requires m >= 1");
}

/// Maps one pair of uniforms to (nu_bar, theta_bar). Split out from the
/// sampler so boundary values of u1/u2 can be exercised directly.
inline void ring_params_from_uniforms(const InitConfig& cfg, double u1, double u2,
                                      double& nu_bar, double& theta_bar) {
  double r2 = u1 * (cfg.r_max * cfg.r_max - cfg.r_min * cfg.r_min) + cfg.r_min * cfg.r_min;
  // r2 may round up to exactly 1 when r_max = 1, or be 0 when r_min = 0.
  r2 = std::clamp(r2, 1e-300, std::nextafter(1.0, 0.0));
  const double v = -0.5 * std::log(r2);
  const double theta = std::max(cfg.phi * u2, kInitMinPhase);
  nu_bar = std::log(v);
  theta_bar = std::log(theta);
}

/// Samples eigenvalues uniformly on the annulus r_min <= |lambda| <= r_max with
/// phase in (0, phi].
inline EigenParams sample_ring_init(const InitConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  EigenParams p;
  p.nu_bar.resize(cfg.m);
  p.theta_bar.resize(cfg.m);
  for (std::size_t j = 0; j < cfg.m; ++j) {
    const double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    ring_params_from_uniforms(cfg, u1, u2, p.nu_bar[j], p.theta_bar[j]);
  }
  return p;
}

inline double decay_rate(double nu_bar) {
  return std::clamp(std::exp(nu_bar), kMinDecayRate, kMaxDecayRate);
}

inline double phase_of(double theta_bar) {
  return std::clamp(std::exp(theta_bar), kMinPhase, kMaxPhase);
}

/// Derivatives of (v, theta) with respect to (nu_bar, theta_bar); zero where
/// the bounds are active.
inline double decay_rate_grad(double nu_bar) {
  const double e = std::exp(nu_bar);
  return (e > kMinDecayRate && e < kMaxDecayRate) ? e : 0.0;
}

inline double phase_grad(double theta_bar) {
  const double e = std::exp(theta_bar);
  return (e > kMinPhase && e < kMaxPhase) ? e : 0.0;
}

inline cplx eigenvalue(double nu_bar, double theta_bar) {
  return std::polar(std::exp(-decay_rate(nu_bar)), phase_of(theta_bar));
}

inline Spectrum eigenvalues(const EigenParams& params) {
  require_shape(params.nu_bar.size() == params.theta_bar.size(),
                "eigen params: nu_bar and theta_bar lengths differ");
  Spectrum s;
  s.lambdas.resize(params.size());
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (std::isnan(params.nu_bar[j]) || std::isnan(params.theta_bar[j]))
      throw Error(ErrorCategory::numeric,
                  "eigen params: NaN at index " + std::to_string(j));
    s.lambdas[j] = eigenvalue(params.nu_bar[j], params.theta_bar[j]);
  }
  return s;
}

inline double spectral_radius(const Spectrum& s) {
  if (s.lambdas.empty()) throw Error(ErrorCategory::shape, "spectral radius of an empty spectrum");
  double r = 0.0;
  for (const cplx& l : s.lambdas) r = std::max(r, std::abs(l));
  return r;
}

struct EigenRow {
  std::size_t index;
  double magnitude;
  double phase;
};

/// Rows sorted by magnitude, largest first; ties keep index order.
inline std::vector<EigenRow> eigen_report(const Spectrum& s) {
  std::vector<EigenRow> rows;
  rows.reserve(s.size());
  for (std::size_t j = 0; j < s.size(); ++j)
    rows.push_back({j, std::abs(s.lambdas[j]), std::arg(s.lambdas[j])});
  std::stable_sort(rows.begin(), rows.end(),
                   [](const EigenRow& a, const EigenRow& b) { return a.magnitude > b.magnitude; });
  return rows;
}

inline void write_eigen_csv(std::ostream& os, std::span<const EigenRow> rows) {
  os << "index,magnitude,phase_rad\n";
  for (const EigenRow& r : rows)
    os << r.index << ',' << format_g17(r.magnitude) << ',' << format_g17(r.phase) << '\n';
}

}  // namespace cndm
