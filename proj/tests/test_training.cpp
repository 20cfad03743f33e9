#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cndm/optim.hpp"
#include "cndm/synth.hpp"
#include "cndm/train.hpp"

using namespace cndm;

TEST(Schedule, Endpoints) {
  const TrainConfig cfg;
  const std::size_t total = 1000;
  EXPECT_DOUBLE_EQ(lr_at(0, total, cfg), 1e-7);
  EXPECT_DOUBLE_EQ(lr_at(warmup_steps(total, cfg.warmup_fraction), total, cfg), 2e-4);
  EXPECT_DOUBLE_EQ(lr_at(total, total, cfg), 1e-7);
  EXPECT_THROW(lr_at(0, 0, cfg), Error);
  EXPECT_THROW(lr_at(1001, total, cfg), Error);
}

TEST(Schedule, WarmupBoundaryIsCeil) {
  const TrainConfig cfg;
  EXPECT_EQ(warmup_steps(1000, 0.1), 100u);
  EXPECT_EQ(warmup_steps(1001, 0.1), 101u);
  EXPECT_EQ(warmup_steps(5, 0.1), 1u);
  EXPECT_DOUBLE_EQ(lr_at(1, 5, cfg), 2e-4);
}

TEST(Schedule, ShapeProperties) {
  TrainConfig cfg;
  for (std::size_t total : {1u, 2u, 7u, 100u, 12345u}) {
    const std::size_t warm = warmup_steps(total, cfg.warmup_fraction);
    double peak = 0.0;
    std::size_t arg = 0;
    for (std::size_t s = 0; s <= total; ++s) {
      const double lr = lr_at(s, total, cfg);
      EXPECT_GE(lr, cfg.end_lr - 1e-18);
      EXPECT_LE(lr, cfg.peak_lr + 1e-18);
      if (lr > peak) {
        peak = lr;
        arg = s;
      }
      if (s > 0 && s <= warm) {
        EXPECT_GT(lr, lr_at(s - 1, total, cfg));
      }
      if (s > warm) {
        EXPECT_LE(lr, lr_at(s - 1, total, cfg));
      }
    }
    EXPECT_EQ(arg, warm) << total;
    // Continuity at the boundary: the first cosine step is close to the peak.
    if (total > 100 && warm < total) EXPECT_NEAR(lr_at(warm + 1, total, cfg), cfg.peak_lr, 1e-3 * cfg.peak_lr);
  }
}

TEST(Adam, ZeroGradientLeavesParametersButCountsStep) {
  OptimizerState s(3);
  std::vector<double> p = {1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  adam_step(s, p, g, 1e-3);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, ConstantGradientStepApproachesLr) {
  // m_hat -> g and v_hat -> g^2, so each update tends to lr * g / (|g| + eps).
  OptimizerState s(1);
  std::vector<double> p = {0.0};
  const std::vector<double> g = {0.37};
  double last = 0.0;
  for (int i = 0; i < 5000; ++i) {
    const double before = p[0];
    adam_step(s, p, g, 1e-3);
    last = before - p[0];
  }
  EXPECT_NEAR(last, 1e-3 * 0.37 / (0.37 + 1e-8), 1e-12);
}

TEST(Adam, NonFiniteGradientIsRejected) {
  ModelParams p = init_model(ModelShape{}, InitConfig{}, 0);
  ModelParams g = zeros_like(p);
  g.fu.hidden[1].bias[3] = std::nan("");
  OptimizerState s;
  try {
    optimizer_step(s, p, g, 1e-3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::numeric);
    EXPECT_NE(std::string(e.what()).find("fu.hidden1.bias[3]"), std::string::npos);
  }
}

namespace {

DatasetSplit small_synthetic(std::uint64_t seed, TrainConfig& cfg) {
  InitConfig ring{0.8, 0.98, 0.1 * kPi, 4, seed};
  const SynthDataset ds = synth_generate(eigenvalues(sample_ring_init(ring)), seed, 5, 160, 0.001);
  cfg.downsample = 1;
  cfg.estimation_length = 32;
  cfg.prediction_length = 4;
  cfg.state_size = 4;
  cfg.hidden_size = 8;
  cfg.batch_size = 64;
  cfg.peak_lr = 5e-3;
  cfg.workers = 1;
  cfg.seed = seed;
  return prepare_dataset(ds.profiles, cfg);
}

std::string log_without_wall(const TrainResult& r) {
  std::ostringstream os;
  for (EpochLog e : r.log) {
    e.wall_s = 0.0;
    write_log_row(os, e);
  }
  return os.str();
}

}  // namespace

TEST(Train, ZeroEpochsReturnsInitialization) {
  TrainConfig cfg;
  const DatasetSplit data = small_synthetic(1, cfg);
  cfg.epochs = 0;
  const TrainResult r = train(cfg, data);
  const ModelParams init = init_model(cfg.model_shape(), cfg.ring(), cfg.seed);
  EXPECT_EQ(flatten(r.final.params), flatten(init));
  EXPECT_EQ(flatten(r.best.params), flatten(init));
  EXPECT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.total_steps, 0u);
}

TEST(Train, ImprovesAndIsDeterministicAcrossWorkers) {
  TrainConfig cfg;
  const DatasetSplit data = small_synthetic(2, cfg);
  cfg.epochs = 6;
  const TrainResult a = train(cfg, data);
  const std::string hash = config_fingerprint(cfg);
  cfg.workers = 3;
  const TrainResult b = train(cfg, data);
  EXPECT_EQ(flatten(a.final.params), flatten(b.final.params));
  EXPECT_EQ(log_without_wall(a), log_without_wall(b));
  EXPECT_LT(a.log.back().val_rmse_K, a.log.front().val_rmse_K);
  EXPECT_LT(a.log.back().loss_total, a.log.front().loss_total);
  EXPECT_EQ(a.final.config_hash, hash);
  for (const EpochLog& e : a.log) EXPECT_TRUE(std::isfinite(e.loss_total));
  EXPECT_LE(a.best.metrics.front().second, a.log.back().val_rmse_K);
}

TEST(Train, EmptyTrainingWindowsAreAnError) {
  TrainConfig cfg;
  DatasetSplit data = small_synthetic(3, cfg);
  cfg.estimation_length = 1000;
  cfg.epochs = 1;
  try {
    train(cfg, data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::data);
  }
}

TEST(Train, MovingAverage) {
  const std::vector<double> v = {5, 4, 3, 2, 1, 0};
  const auto m = moving_average(v, 5);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_DOUBLE_EQ(m[0], 3.0);
  EXPECT_DOUBLE_EQ(m[1], 2.0);
  EXPECT_TRUE(moving_average(v, 7).empty());
}
