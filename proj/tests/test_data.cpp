#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cndm/data.hpp"
#include "cndm/synth.hpp"

using namespace cndm;

namespace {

const char* kHeader = "u_q,coolant,stator_winding,u_d,stator_tooth,motor_speed,i_d,i_q,pm,stator_yoke,ambient,torque,profile_id";

std::string row(double uq, double ud, long id, double temp = 50.0) {
  std::ostringstream os;
  os << uq << ",20," << temp << "," << ud << ",40,1000,-3,4,60,30,22,10," << id << "\n";
  return os.str();
}

Profile ramp_profile(long id, std::size_t rows) {
  std::vector<double> c(rows * kNumMeasuredControls), t(rows * kNumTargets);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < kNumMeasuredControls; ++k) c[r * kNumMeasuredControls + k] = static_cast<double>(r + k);
    for (std::size_t k = 0; k < kNumTargets; ++k) t[r * kNumTargets + k] = 20.0 + static_cast<double>(r);
  }
  return make_profile(id, c, t);
}

}  // namespace

TEST(Data, IngestDerivesMagnitudesAndGroups) {
  std::stringstream ss;
  ss << kHeader << "\n" << row(4, 3, 7) << row(4, 3, 2) << row(8, 6, 7);
  const IngestResult r = ingest_csv(ss);
  ASSERT_EQ(r.profiles.size(), 2u);
  EXPECT_EQ(r.profiles[0].id, 2);
  EXPECT_EQ(r.profiles[1].id, 7);
  EXPECT_EQ(r.profiles[1].rows, 2u);
  EXPECT_DOUBLE_EQ(r.profiles[0].control_row(0)[8], 5.0);  // u_s
  EXPECT_DOUBLE_EQ(r.profiles[0].control_row(0)[9], 5.0);  // i_s from (-3, 4)
  EXPECT_DOUBLE_EQ(r.profiles[1].control_row(1)[8], 10.0);
  EXPECT_DOUBLE_EQ(r.profiles[1].target_row(0)[2], 50.0);  // stator_winding
  EXPECT_EQ(r.total_rows, 3u);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Data, IngestErrors) {
  {
    std::stringstream ss("u_q,coolant\n1,2\n");
    try {
      ingest_csv(ss);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.category(), ErrorCategory::data);
      EXPECT_NE(std::string(e.what()).find("profile_id"), std::string::npos);
    }
  }
  {
    std::stringstream ss;
    ss << kHeader << "\n" << "x,20,50,3,40,1000,-3,4,60,30,22,10,1\n";
    EXPECT_THROW(ingest_csv(ss), Error);
  }
  {
    std::stringstream ss;
    ss << kHeader << "\n";
    EXPECT_THROW(ingest_csv(ss), Error);
  }
  {
    std::stringstream ss;
    ss << kHeader << "\n1,2,3\n";
    EXPECT_THROW(ingest_csv(ss), Error);
  }
}

TEST(Data, ImplausibleTemperaturesAreReported) {
  std::stringstream ss;
  ss << kHeader << "\n" << row(1, 1, 3, 400.0);
  const IngestResult r = ingest_csv(ss);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_DOUBLE_EQ(r.profiles[0].target_row(0)[2], 400.0);  // reported, not altered
}

TEST(Data, ColumnMapRenames) {
  ColumnMap map = ColumnMap::defaults();
  map.names["pm"] = "magnet";
  std::string header = kHeader;
  header.replace(header.find(",pm,"), 4, ",magnet,");
  std::stringstream ss;
  ss << header << "\n" << row(1, 1, 1);
  EXPECT_EQ(ingest_csv(ss, map).profiles[0].target_row(0)[0], 60.0);
}

TEST(Data, DownsampleExamples) {
  Profile p = ramp_profile(1, 17);
  const Profile d = downsample(p, 8);
  EXPECT_EQ(d.rows, 2u);
  EXPECT_DOUBLE_EQ(d.control_row(0)[0], 3.5);
  EXPECT_DOUBLE_EQ(d.target_row(1)[0], 20.0 + 11.5);
  // u_s is averaged, not recomputed from averaged u_d/u_q.
  double mean_us = 0.0;
  for (std::size_t r = 0; r < 8; ++r) mean_us += p.control_row(r)[8] / 8.0;
  EXPECT_NEAR(d.control_row(0)[8], mean_us, 1e-12);
  const Profile same = downsample(p, 1);
  EXPECT_EQ(same.controls, p.controls);
  EXPECT_THROW(downsample(ramp_profile(1, 5), 8), Error);
  EXPECT_THROW(downsample(p, 0), Error);
}

TEST(Data, DownsampleMeanOfOneToEight) {
  std::vector<double> c(8 * kNumMeasuredControls, 0.0), t(8 * kNumTargets, 0.0);
  for (std::size_t r = 0; r < 8; ++r) t[r * kNumTargets] = static_cast<double>(r + 1);
  const Profile d = downsample(make_profile(1, c, t), 8);
  EXPECT_DOUBLE_EQ(d.target_row(0)[0], 4.5);
}

TEST(Data, NormalizationRoundTripAndDivisors) {
  Profile p = ramp_profile(1, 10);
  p.controls[3 * kNumControls + 6] = -240.0;  // torque
  p.controls[4 * kNumControls + 6] = 260.0;
  std::vector<std::string> warnings;
  const std::vector<Profile> ps = {p};
  const NormStats s = fit_norm_stats(ps, &warnings);
  EXPECT_DOUBLE_EQ(s.control_divisors[6], 260.0);
  EXPECT_DOUBLE_EQ(s.control_divisors[0], 100.0);  // ambient is a temperature
  const Profile n = normalize(p, s);
  EXPECT_DOUBLE_EQ(denormalize_temperature(1.2, s), 120.0);
  for (std::size_t i = 0; i < p.targets.size(); ++i)
    EXPECT_NEAR(denormalize_temperature(n.targets[i], s), p.targets[i], 1e-12);
  NormStats bad = s;
  bad.control_divisors[2] = 0.0;
  EXPECT_THROW(normalize(p, bad), Error);
}

TEST(Data, ZeroColumnGetsUnitDivisorAndWarning) {
  std::vector<double> c(4 * kNumMeasuredControls, 1.0), t(4 * kNumTargets, 30.0);
  for (std::size_t r = 0; r < 4; ++r) c[r * kNumMeasuredControls + 7] = 0.0;
  const std::vector<Profile> ps = {make_profile(1, c, t)};
  std::vector<std::string> warnings;
  const NormStats s = fit_norm_stats(ps, &warnings);
  EXPECT_DOUBLE_EQ(s.control_divisors[7], 1.0);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Data, SplitsAndWindows) {
  std::vector<Profile> ps = {ramp_profile(58, 300), ramp_profile(65, 300), ramp_profile(72, 300),
                             ramp_profile(4, 300)};
  DatasetSplit s = make_splits(ps, {58}, {65, 72});
  ASSERT_EQ(s.train.size(), 1u);
  EXPECT_EQ(s.train[0].id, 4);
  EXPECT_EQ(s.val[0].id, 58);
  EXPECT_EQ(s.test.size(), 2u);
  EXPECT_THROW(make_splits(ps, {99}, {65}), Error);

  EXPECT_EQ(window_count(300, 8, 128, 1), 300u - 136u + 1u);
  EXPECT_EQ(window_count(100, 8, 128, 1), 0u);
  std::vector<std::string> warnings;
  const std::vector<Profile> mixed = {ramp_profile(1, 140), ramp_profile(2, 100)};
  const auto refs = make_windows(mixed, 8, 128, 1, &warnings);
  EXPECT_EQ(refs.size(), 5u);
  EXPECT_EQ(warnings.size(), 1u);
  for (const WindowRef& r : refs) EXPECT_LE(r.start + 136, mixed[r.profile].rows);
  const WindowView w = window_view(mixed[0], 2, 8, 128);
  EXPECT_EQ(w.history[0], mixed[0].target_row(2)[0]);
  EXPECT_EQ(w.controls[0], mixed[0].control_row(10)[0]);
  EXPECT_THROW(window_view(mixed[0], 5, 8, 128), Error);
}

TEST(Data, PrepareFitsOnTrainingOnly) {
  std::vector<Profile> ps = {ramp_profile(58, 64), ramp_profile(65, 64), ramp_profile(72, 64), ramp_profile(4, 64)};
  for (std::size_t r = 0; r < 64; ++r) ps[1].controls[r * kNumControls + 6] = 1000.0;  // test-only outlier
  TrainConfig cfg;
  cfg.downsample = 1;
  const DatasetSplit s = prepare_dataset(ps, cfg);
  EXPECT_LT(s.stats.control_divisors[6], 1000.0);
  NormStats fixed = s.stats;
  fixed.control_divisors[6] = 5.0;
  const DatasetSplit t = prepare_dataset(ps, cfg, &fixed);
  EXPECT_EQ(t.stats.control_divisors[6], 5.0);
}

TEST(Data, EvaluateMetricsExamples) {
  std::vector<Profile> ps = {normalize(ramp_profile(1, 50), NormStats{})};
  const NormStats stats;
  EvalOptions eo{2, 8, false, 1};
  const Predictor exact = [](const WindowView& w, const Profile&, std::size_t) {
    return std::vector<double>(w.targets.begin(), w.targets.end());
  };
  const EvalResult e = evaluate(ps, exact, stats, eo);
  EXPECT_EQ(e.overall.rmse_K, 0.0);
  EXPECT_EQ(e.overall.linf_K, 0.0);
  EXPECT_EQ(e.n_windows, (50u - 10u) / 8u + 1u);
  const Predictor plus_one = [](const WindowView& w, const Profile&, std::size_t) {
    std::vector<double> out(w.targets.begin(), w.targets.end());
    for (double& v : out) v += 0.01;  // +1 K
    return out;
  };
  const EvalResult o = evaluate(ps, plus_one, stats, eo);
  EXPECT_NEAR(o.overall.mse_K2, 1.0, 1e-9);
  EXPECT_NEAR(o.overall.rmse_K, 1.0, 1e-9);
  EXPECT_NEAR(o.overall.linf_K, 1.0, 1e-9);
  EXPECT_EQ(o.predictions.size(), e.n_windows * 8 * kNumTargets);
}

TEST(Data, EvaluateIsOrderInvariant) {
  std::vector<Profile> ps = {normalize(ramp_profile(1, 300), NormStats{}), normalize(ramp_profile(2, 200), NormStats{})};
  const Predictor noisy = [](const WindowView& w, const Profile& p, std::size_t start) {
    std::vector<double> out(w.targets.begin(), w.targets.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += 1e-3 * std::sin(static_cast<double>(p.id * 1000 + start + i));
    return out;
  };
  const EvalResult a = evaluate(ps, noisy, NormStats{}, EvalOptions{4, 16, false, 1});
  const EvalResult b = evaluate(ps, noisy, NormStats{}, EvalOptions{4, 16, false, 3});
  EXPECT_EQ(a.overall.mse_K2, b.overall.mse_K2);
  EXPECT_EQ(a.overall.linf_K, b.overall.linf_K);
}

TEST(Data, ChainedEvaluationFeedsPredictions) {
  std::vector<Profile> ps = {normalize(ramp_profile(1, 40), NormStats{})};
  std::vector<double> seen_first_history;
  const Predictor constant = [&](const WindowView& w, const Profile&, std::size_t start) {
    if (start == 8) seen_first_history.assign(w.history.begin(), w.history.end());
    return std::vector<double>(w.targets.size(), 0.123);
  };
  evaluate(ps, constant, NormStats{}, EvalOptions{2, 8, true, 1});
  ASSERT_EQ(seen_first_history.size(), 2 * kNumTargets);
  for (double v : seen_first_history) EXPECT_EQ(v, 0.123);
}

TEST(Data, WriteAndReingestRoundTrip) {
  const std::vector<Profile> ps = {ramp_profile(3, 5), ramp_profile(9, 4)};
  std::stringstream ss;
  write_dataset_csv(ss, ps);
  const IngestResult r = ingest_csv(ss);
  ASSERT_EQ(r.profiles.size(), 2u);
  EXPECT_EQ(r.profiles[0].controls, ps[0].controls);
  EXPECT_EQ(r.profiles[1].targets, ps[1].targets);
}

TEST(Synth, ZeroNoiseTruthPredictorIsExact) {
  InitConfig ring{0.85, 0.99, 0.1 * kPi, 6, 4};
  const SynthDataset ds = synth_generate(eigenvalues(sample_ring_init(ring)), 4, 4, 300, 0.0);
  TrainConfig cfg;
  cfg.downsample = 1;
  cfg.val_profiles = "58";
  cfg.test_profiles = "65,72";
  const DatasetSplit split = prepare_dataset(ds.profiles, cfg);
  const EvalResult r = evaluate(split.test, truth_predictor(ds, split.stats), split.stats, EvalOptions{8, 128, false, 1});
  EXPECT_GT(r.n_windows, 0u);
  EXPECT_LT(r.overall.rmse_K, 1e-9);
}

TEST(Synth, ZeroInputDecaysGeometrically) {
  InitConfig ring{0.5, 0.9, 0.3 * kPi, 3, 2};
  LinearTruth t = make_linear_truth(eigenvalues(sample_ring_init(ring)), 2);
  std::fill(t.bias.begin(), t.bias.end(), cplx(0, 0));
  std::fill(t.input.begin(), t.input.end(), cplx(0, 0));
  std::vector<cplx> x = {cplx(1, 0), cplx(0, 1), cplx(1, 1)};
  const std::vector<cplx> x0 = x;
  const std::vector<double> zero(kNumControls, 0.0);
  for (int k = 1; k <= 10; ++k) {
    t.step(x, zero);
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_NEAR(std::abs(x[j] - std::pow(t.spectrum.lambdas[j], static_cast<double>(k)) * x0[j]), 0.0, 1e-14);
  }
}

TEST(Synth, OutputsArePlausibleAndNoiseHasRightScale) {
  InitConfig ring{0.9, 0.99, 0.1 * kPi, 16, 9};
  const Spectrum spec = eigenvalues(sample_ring_init(ring));
  const SynthDataset clean = synth_generate(spec, 9, 3, 2000, 0.0);
  const SynthDataset noisy = synth_generate(spec, 9, 3, 2000, 0.001);
  double sq = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t i = 0; i < clean.profiles[p].targets.size(); ++i) {
      const double v = clean.profiles[p].targets[i];
      EXPECT_GT(v, kMinPlausibleC);
      EXPECT_LT(v, kMaxPlausibleC);
      const double d = noisy.profiles[p].targets[i] - v;
      sq += d * d;
      ++n;
    }
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n)), 0.1, 0.005);  // 0.001 * 100 C
}

TEST(Synth, UnstableSpectrumRejected) {
  Spectrum s;
  s.lambdas = {cplx(0.5, 0), cplx(1.0, 0)};
  EXPECT_THROW(make_linear_truth(s, 0), Error);
}

TEST(Synth, ProfileIdsStartWithDesignatedSplits) {
  EXPECT_EQ(synth_profile_ids(5), (std::vector<long>{58, 65, 72, 1, 2}));
  EXPECT_EQ(synth_profile_ids(2), (std::vector<long>{58, 65}));
}

TEST(Synth, PmsmTemperaturesArePlausible) {
  PmsmSimConfig cfg;
  cfg.n_profiles = 4;
  cfg.min_rows = 3000;
  cfg.max_rows = 4000;
  const auto ps = synth_pmsm(cfg);
  ASSERT_EQ(ps.size(), 4u);
  for (const Profile& p : ps) {
    for (std::size_t r = 0; r < p.rows; ++r) {
      for (double v : p.target_row(r)) {
        EXPECT_GT(v, kMinPlausibleC);
        EXPECT_LT(v, kMaxPlausibleC);
      }
      EXPECT_LE(std::abs(p.control_row(r)[6]), 260.0);
      EXPECT_GE(p.control_row(r)[7], -1e-9);
      EXPECT_LE(p.control_row(r)[7], 6000.0);
    }
  }
}
