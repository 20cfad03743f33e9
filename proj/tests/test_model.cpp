#include <gtest/gtest.h>

#include <cmath>

#include "cndm/model.hpp"
#include "model_oracle.hpp"

using namespace cndm;

TEST(Model, DefaultParameterCount) {
  const ModelParams p = init_model(ModelShape{}, InitConfig{}, 0);
  // f0: 32x32+32 + 32x32+32 + 2(16x32+16); fu: 10x32+32 + ...; readout 2(4x16); eig 2x16.
  EXPECT_EQ(parameter_count(p), 3168u + 2464u + 128u + 32u);
  EXPECT_EQ(flatten(p).size(), parameter_count(p));
}

TEST(Model, FlattenRoundTrip) {
  ModelParams p = init_model(ModelShape{}, InitConfig{}, 4);
  const std::vector<double> flat = flatten(p);
  ModelParams q = zero_model(p.shape);
  unflatten(flat, q);
  EXPECT_EQ(flatten(q), flat);
  EXPECT_THROW(unflatten(std::vector<double>(3), q), Error);
}

TEST(Model, TensorNamesAreStable) {
  const ModelParams p = zero_model(ModelShape{});
  std::vector<std::string> names;
  visit_tensors(p, [&](const std::string& n, auto) { names.push_back(n); });
  const std::vector<std::string> expected = {
      "eig.nu_bar", "eig.theta_bar", "f0.hidden0.weight", "f0.hidden0.bias", "f0.hidden1.weight",
      "f0.hidden1.bias", "f0.out.weight", "f0.out.bias", "fu.hidden0.weight", "fu.hidden0.bias",
      "fu.hidden1.weight", "fu.hidden1.bias", "fu.out.weight", "fu.out.bias", "readout"};
  EXPECT_EQ(names, expected);
}

TEST(Model, ForwardMatchesHandRecurrence) {
  const auto prob = testutil::tiny_problem(1);
  const ModelParams& p = prob.params;
  const WindowView& w = prob.views[0];
  const ForwardResult f = forward(p, w);
  std::vector<cplx> x = mlp_forward(p.f0, w.history);
  const Spectrum s = eigenvalues(p.eig);
  for (std::size_t t = 0; t < 4; ++t) {
    const auto u = mlp_forward(p.fu, w.controls.subspan(t * 10, 10));
    for (std::size_t j = 0; j < 2; ++j) x[j] = s.lambdas[j] * x[j] + u[j];
    for (std::size_t i = 0; i < 4; ++i) {
      double y = 0.0;
      for (std::size_t j = 0; j < 2; ++j) y += (p.readout[i * 2 + j] * x[j]).real();
      EXPECT_NEAR(f.outputs[t * 4 + i], y, 1e-14);
    }
  }
}

TEST(Model, ShapeErrorsNameTheProblem) {
  const auto prob = testutil::tiny_problem(2);
  WindowView w = prob.views[0];
  w.history = w.history.subspan(1);
  try {
    forward(prob.params, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::shape);
    EXPECT_NE(std::string(e.what()).find("history"), std::string::npos);
  }
}

TEST(Model, TimeParallelForwardAgreesWithSerial) {
  const auto prob = testutil::tiny_problem(3, 1, 300, 2, 8, 8);
  const ForwardResult a = forward(prob.params, prob.views[0]);
  const ForwardResult b = forward(prob.params, prob.views[0], ExecOptions{true, 3, 1});
  for (std::size_t i = 0; i < a.outputs.size(); ++i) EXPECT_NEAR(a.outputs[i], b.outputs[i], 1e-12);
}

TEST(Model, LossAlgebra) {
  const LossBreakdown b = combine_loss(2.0, 4.0, 0.1);
  EXPECT_EQ(b.total, 2.2);
  EXPECT_EQ(b.scale, 0.5);
  EXPECT_EQ(combine_loss(2.0, 4.0, 0.0).total, 2.0);
  // Smooth term below the epsilon is skipped.
  const LossBreakdown z = combine_loss(2.0, 0.0, 0.1);
  EXPECT_EQ(z.total, 2.0);
  EXPECT_EQ(z.scale, 0.0);
  EXPECT_THROW(combine_loss(1.0, 1.0, -0.1), Error);
}

TEST(Model, ZeroQGradientIsPureInferenceGradient) {
  const auto prob = testutil::tiny_problem(4, 3);
  const BatchGradient bg = batch_gradient(prob.params, prob.views, 0.0);
  const LossTerms t = batch_loss_terms(prob.params, prob.views, 1.0);
  const ModelParams inf = weighted_gradient(prob.params, prob.views,
                                            LossWeights{1.0 / static_cast<double>(t.inference_count), 0.0}, 1.0);
  EXPECT_EQ(flatten(bg.grads), flatten(inf));
}

TEST(Model, ScaleIsDetached) {
  const auto prob = testutil::tiny_problem(5, 3);
  const double q = 0.1;
  const BatchGradient bg = batch_gradient(prob.params, prob.views, q);
  const LossTerms t = batch_loss_terms(prob.params, prob.views, 1.0);
  const auto gi = flatten(weighted_gradient(prob.params, prob.views,
                                            LossWeights{1.0 / static_cast<double>(t.inference_count), 0.0}, 1.0));
  const auto gs = flatten(weighted_gradient(prob.params, prob.views,
                                            LossWeights{0.0, 1.0 / static_cast<double>(t.smooth_count)}, 1.0));
  const auto g = flatten(bg.grads);
  const double scale = t.inference() / t.smooth();
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], gi[i] + q * scale * gs[i], 1e-13);
}

TEST(Model, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (double q : {0.0, 0.1}) {
      const auto r = testutil::check_model_gradient(testutil::tiny_problem(seed), q);
      EXPECT_LT(r.max_rel_error, 1e-5) << "seed " << seed << " q " << q << " worst " << r.worst_tensor;
    }
  }
}

TEST(Model, BatchGradientIndependentOfWorkers) {
  const auto prob = testutil::tiny_problem(6, 19, 40, 2, 4, 6);
  const auto a = batch_gradient(prob.params, prob.views, 0.1, 1.0, BatchOptions{1, false, 64});
  const auto b = batch_gradient(prob.params, prob.views, 0.1, 1.0, BatchOptions{3, false, 64});
  EXPECT_EQ(flatten(a.grads), flatten(b.grads));
  EXPECT_EQ(a.loss.total, b.loss.total);
  const auto c = batch_gradient(prob.params, prob.views, 0.1, 1.0, BatchOptions{1, true, 1});
  const auto d = batch_gradient(prob.params, prob.views, 0.1, 1.0, BatchOptions{4, true, 1});
  EXPECT_EQ(flatten(c.grads), flatten(d.grads));
  const auto ga = flatten(a.grads), gc = flatten(c.grads);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(ga[i], gc[i], 1e-10 * (1.0 + std::abs(ga[i])));
}

TEST(Model, SmoothTermOfConstantTrajectoryIsZero) {
  StateTrajectory traj{{cplx(1, 1)}, {cplx(1, 1), cplx(1, 1)}, 2, 1};
  const std::vector<double> y = {0.0, 0.0};
  const LossTerms t = window_loss_terms(y, y, traj);
  EXPECT_EQ(t.smooth_sum, 0.0);
  EXPECT_EQ(t.smooth_count, 2u);
}
