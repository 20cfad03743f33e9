#pragma once

// Training loop: per-epoch seeded shuffles of the stride-1 training windows,
// Adam with linear warmup and cosine decay indexed by optimizer step, and
// validation RMSE once per epoch.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cndm/checkpoint.hpp"
#include "cndm/common.hpp"
#include "cndm/config.hpp"
#include "cndm/data.hpp"
#include "cndm/model.hpp"
#include "cndm/optim.hpp"
#include "cndm/parallel.hpp"
#include "cndm/random.hpp"

namespace cndm {

struct EpochLog {
  std::size_t epoch = 0;  // 0 is the untrained model
  std::size_t step = 0;   // optimizer steps taken so far
  double lr = 0.0;        // last learning rate used
  double loss_total = 0.0;
  double loss_inf = 0.0;
  double loss_smth = 0.0;
  double val_rmse_K = 0.0;
  double wall_s = 0.0;
};

inline const char* kTrainLogHeader = "epoch,step,lr,loss_total,loss_inf,loss_smth,val_rmse_K,wall_s";

inline void write_log_row(std::ostream& os, const EpochLog& e) {
  os << e.epoch << ',' << e.step << ',' << format_g17(e.lr) << ',' << format_g17(e.loss_total) << ','
     << format_g17(e.loss_inf) << ',' << format_g17(e.loss_smth) << ',' << format_g17(e.val_rmse_K) << ','
     << format_g17(e.wall_s) << '\n';
}

struct TrainResult {
  Checkpoint best;   // lowest validation RMSE, including the untrained model
  Checkpoint final;  // after the last epoch
  std::vector<EpochLog> log;
  std::size_t total_steps = 0;
  std::size_t train_windows = 0;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
};

inline std::size_t resolved_workers(const TrainConfig& cfg) {
  return cfg.workers == 0 ? hardware_workers() : cfg.workers;
}

/// Validation RMSE in Kelvin with true-history seeding; NaN without
/// validation profiles.
inline double validation_rmse(const ModelParams& params, const DatasetSplit& data, const TrainConfig& cfg) {
  if (data.val.empty()) return std::numeric_limits<double>::quiet_NaN();
  EvalOptions eo;
  eo.h = cfg.prediction_length;
  eo.n = cfg.estimation_length;
  eo.workers = resolved_workers(cfg);
  return evaluate(data.val, model_predictor(params), data.stats, eo).overall.rmse_K;
}

inline TrainResult train(const TrainConfig& cfg, const DatasetSplit& data, const TrainHooks& hooks = {}) {
  validate(cfg);
  validate(data.stats);
  const auto started = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  const std::size_t h = cfg.prediction_length;
  const std::size_t n = cfg.estimation_length;
  const std::vector<WindowRef> windows = make_windows(data.train, h, n, 1);
  if (windows.empty()) throw Error(ErrorCategory::data, "training split yields no windows of length h + N");

  BatchOptions bo;
  bo.workers = resolved_workers(cfg);
  bo.time_parallel = cfg.time_parallel;
  const std::size_t batches = (windows.size() + cfg.batch_size - 1) / cfg.batch_size;

  TrainResult result;
  result.train_windows = windows.size();
  result.total_steps = cfg.epochs * batches;

  ModelParams params = init_model(cfg.model_shape(), cfg.ring(), cfg.seed);
  const auto snapshot = [&](std::size_t epoch, double val_rmse, const EpochLog& e) {
    Checkpoint ck;
    ck.params = params;
    ck.config = to_key_values(cfg);
    ck.config_hash = config_fingerprint(cfg);
    ck.norm = data.stats;
    ck.seed = cfg.seed;
    ck.epoch = epoch;
    ck.metrics = {{"val_rmse_K", val_rmse}, {"loss_total", e.loss_total}, {"loss_inf", e.loss_inf},
                  {"loss_smth", e.loss_smth}};
    return ck;
  };
  const auto views = [&](std::span<const std::size_t> idx) {
    std::vector<WindowView> out;
    out.reserve(idx.size());
    for (std::size_t k : idx) {
      const WindowRef& r = windows[k];
      out.push_back(window_view(data.train[r.profile], r.start, h, n));
    }
    return out;
  };

  // Epoch 0: untrained model, loss over all training windows.
  {
    std::vector<std::size_t> all(windows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    LossTerms terms;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(windows.size(), lo + cfg.batch_size);
      const auto batch = views(std::span<const std::size_t>(all).subspan(lo, hi - lo));
      terms.add(batch_loss_terms(params, batch, cfg.smooth_l1_beta, bo));
    }
    const LossBreakdown lb = combine_loss(terms.inference(), terms.smooth(), cfg.q);
    EpochLog e;
    e.lr = result.total_steps ? lr_at(0, result.total_steps, cfg) : 0.0;
    e.loss_total = lb.total;
    e.loss_inf = lb.inference;
    e.loss_smth = lb.smooth;
    e.val_rmse_K = validation_rmse(params, data, cfg);
    e.wall_s = elapsed();
    result.log.push_back(e);
    result.best = snapshot(0, e.val_rmse_K, e);
    if (hooks.on_epoch) hooks.on_epoch(e);
  }
  double best_rmse = result.log.back().val_rmse_K;

  OptimizerState opt(parameter_count(params));
  const AdamSettings adam{cfg.beta1, cfg.beta2, cfg.adam_eps};
  std::size_t step = 0;
  std::vector<std::size_t> order(windows.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, 1000 + epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double sum_total = 0.0, sum_inf = 0.0, sum_smth = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(windows.size(), lo + cfg.batch_size);
      const auto batch = views(std::span<const std::size_t>(order).subspan(lo, hi - lo));
      BatchGradient bg;
      try {
        bg = batch_gradient(params, batch, cfg.q, cfg.smooth_l1_beta, bo);
        if (!std::isfinite(bg.loss.total))
          throw Error(ErrorCategory::numeric, "non-finite loss " + format_double(bg.loss.total));
        lr = lr_at(step + 1, result.total_steps, cfg);
        optimizer_step(opt, params, bg.grads, lr, adam);
      } catch (const Error& err) {
        throw Error(err.category(), "epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " +
                                        err.what());
      }
      ++step;
      const double rho = spectral_radius(eigenvalues(params.eig));
      if (!(rho < 1.0))
        throw Error(ErrorCategory::numeric, "spectral radius " + format_double(rho) + " after step " +
                                                std::to_string(step));
      sum_total += bg.loss.total;
      sum_inf += bg.loss.inference;
      sum_smth += bg.loss.smooth;
    }
    EpochLog e;
    e.epoch = epoch;
    e.step = step;
    e.lr = lr;
    e.loss_total = sum_total / static_cast<double>(batches);
    e.loss_inf = sum_inf / static_cast<double>(batches);
    e.loss_smth = sum_smth / static_cast<double>(batches);
    e.val_rmse_K = validation_rmse(params, data, cfg);
    e.wall_s = elapsed();
    result.log.push_back(e);
    if (e.val_rmse_K < best_rmse || std::isnan(best_rmse)) {
      best_rmse = e.val_rmse_K;
      result.best = snapshot(epoch, e.val_rmse_K, e);
    }
    if (hooks.on_epoch) hooks.on_epoch(e);
  }
  result.final = snapshot(cfg.epochs, result.log.back().val_rmse_K, result.log.back());
  return result;
}

/// Means of every run of `w` consecutive values (v.size() - w + 1 entries).
inline std::vector<double> moving_average(std::span<const double> v, std::size_t w) {
  if (w == 0 || v.size() < w) return {};
  std::vector<double> out;
  for (std::size_t i = 0; i + w <= v.size(); ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < w; ++k) sum += v[i + k];
    out.push_back(sum / static_cast<double>(w));
  }
  return out;
}

}  // namespace cndm
