#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cndm/common.hpp"
#include "cndm/config.hpp"
#include "cndm/model.hpp"

namespace cndm {

inline std::size_t warmup_steps(std::size_t total_steps, double warmup_fraction) {
  return static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
}

/// Linear warmup from init_lr to peak_lr, then cosine decay to end_lr.
inline double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  if (total_steps == 0) throw Error(ErrorCategory::config, "lr_at: total_steps must be >= 1");
  if (step > total_steps) throw Error(ErrorCategory::config, "lr_at: step beyond total_steps");
  const std::size_t warm = warmup_steps(total_steps, cfg.warmup_fraction);
  if (step <= warm) {
    if (warm == 0) return cfg.peak_lr;
    return cfg.init_lr + (cfg.peak_lr - cfg.init_lr) * static_cast<double>(step) / static_cast<double>(warm);
  }
  const double progress =
      static_cast<double>(step - warm) / static_cast<double>(total_steps - warm);
  return cfg.end_lr + 0.5 * (cfg.peak_lr - cfg.end_lr) * (1.0 + std::cos(kPi * progress));
}

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::vector<double> first;
  std::vector<double> second;
  std::uint64_t step = 0;

  explicit OptimizerState(std::size_t n = 0) : first(n, 0.0), second(n, 0.0) {}
};

/// Adam with bias correction on flat parameter/gradient vectors.
inline void adam_step(OptimizerState& state, std::span<double> params, std::span<const double> grads,
                      double lr, const AdamSettings& s = {}) {
  require_shape(params.size() == grads.size() && state.first.size() == params.size(),
                "optimizer: parameter, gradient and state sizes differ");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw Error(ErrorCategory::numeric, "optimizer: non-finite gradient at flat index " + std::to_string(i));
  ++state.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.first[i] = s.beta1 * state.first[i] + (1.0 - s.beta1) * grads[i];
    state.second[i] = s.beta2 * state.second[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    const double m_hat = state.first[i] / c1;
    const double v_hat = state.second[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

/// Model-level step; reports the offending tensor when a gradient is not
/// finite.
inline void optimizer_step(OptimizerState& state, ModelParams& params, const ModelParams& grads,
                           double lr, const AdamSettings& s = {}) {
  visit_tensors(grads, [](const std::string& name, std::span<const double> g) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        throw Error(ErrorCategory::numeric,
                    "optimizer: non-finite gradient in " + name + "[" + std::to_string(i) + "]");
  });
  std::vector<double> flat = flatten(params);
  if (state.first.empty()) state = OptimizerState(flat.size());
  adam_step(state, flat, flatten(grads), lr, s);
  unflatten(flat, params);
}

}  // namespace cndm
