#include <gtest/gtest.h>

#include <cmath>

#include "cndm/scan.hpp"
#include "cndm/spectral.hpp"
#include "stats_util.hpp"

using namespace cndm;

namespace {

cplx rand_c(Rng& rng, double s = 1.0) { return {uniform(rng, -s, s), uniform(rng, -s, s)}; }

ScanSequence random_sequence(Rng& rng, std::size_t n, std::size_t m) {
  ScanSequence seq(n, m);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < m; ++j) {
      seq.decay(t)[j] = std::polar(uniform(rng, 0.0, 1.0), uniform(rng, -kPi, kPi));
      seq.increment(t)[j] = rand_c(rng);
    }
  return seq;
}

std::vector<cplx> random_vec(Rng& rng, std::size_t m) {
  std::vector<cplx> v(m);
  for (cplx& c : v) c = rand_c(rng);
  return v;
}

std::vector<cplx> flat_decays(const ScanSequence& s) {
  std::vector<cplx> a;
  for (std::size_t t = 0; t < s.length(); ++t) a.insert(a.end(), s.decay(t).begin(), s.decay(t).end());
  return a;
}

std::size_t ceil_log2(std::size_t n) {
  std::size_t k = 0;
  while ((std::size_t{1} << k) < n) ++k;
  return k;
}

}  // namespace

TEST(Scan, CombineExample) {
  // (0.5, 1) then (0.5, 1): x -> 0.25 x + 1.5.
  ScanElement e{{cplx(0.5, 0)}, {cplx(1, 0)}};
  const ScanElement c = combine(e, e);
  EXPECT_EQ(c.decay[0], cplx(0.25, 0));
  EXPECT_EQ(c.increment[0], cplx(1.5, 0));
}

TEST(Scan, IdentityIsNeutral) {
  Rng rng(1);
  ScanElement e{random_vec(rng, 5), random_vec(rng, 5)};
  const ScanElement id = ScanElement::identity(5);
  const ScanElement l = combine(id, e), r = combine(e, id);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(l.decay[j], e.decay[j]);
    EXPECT_EQ(l.increment[j], e.increment[j]);
    EXPECT_EQ(r.decay[j], e.decay[j]);
    EXPECT_EQ(r.increment[j], e.increment[j]);
  }
}

TEST(Scan, CombineIsAssociative) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng() % 8;
    ScanElement a{random_vec(rng, m), random_vec(rng, m)};
    ScanElement b{random_vec(rng, m), random_vec(rng, m)};
    ScanElement c{random_vec(rng, m), random_vec(rng, m)};
    const ScanElement l = combine(combine(a, b), c), r = combine(a, combine(b, c));
    for (std::size_t j = 0; j < m; ++j) {
      EXPECT_NEAR(std::abs(l.decay[j] - r.decay[j]), 0.0, 1e-14);
      EXPECT_NEAR(std::abs(l.increment[j] - r.increment[j]), 0.0, 1e-14);
    }
  }
}

TEST(Scan, CombineRejectsMismatchedWidths) {
  EXPECT_THROW(combine(ScanElement::identity(2), ScanElement::identity(3)), Error);
}

TEST(Scan, SerialMatchesNaiveRecurrence) {
  Rng rng(3);
  const ScanSequence seq = random_sequence(rng, 37, 4);
  const auto x0 = random_vec(rng, 4);
  const StateTrajectory traj = serial_recurrence(x0, seq);
  std::vector<cplx> b(seq.increments().begin(), seq.increments().end());
  const auto naive = testutil::naive_recurrence(x0, flat_decays(seq), b);
  for (std::size_t i = 0; i < naive.size(); ++i) EXPECT_EQ(traj.states[i], naive[i]);
}

TEST(Scan, TreeMatchesSerialOnAwkwardLengths) {
  Rng rng(4);
  for (std::size_t n : {1u, 2u, 3u, 5u, 7u, 8u, 9u, 63u, 64u, 65u, 127u, 129u, 500u, 1024u}) {
    for (std::size_t m : {1u, 3u, 16u}) {
      const ScanSequence seq = random_sequence(rng, n, m);
      const auto x0 = random_vec(rng, m);
      const StateTrajectory s = serial_recurrence(x0, seq);
      const StateTrajectory p = tree_scan(x0, seq, 1, nullptr);
      for (std::size_t i = 0; i < s.states.size(); ++i) {
        const double err = std::abs(s.states[i] - p.states[i]);
        EXPECT_LE(err, 1e-12 + 1e-10 * std::abs(s.states[i])) << "n=" << n << " m=" << m;
      }
    }
  }
}

TEST(Scan, ZeroInputDecaysGeometrically) {
  const std::vector<cplx> lambda = {std::polar(0.9, 0.1), std::polar(0.5, 2.0)};
  const ScanSequence seq = ScanSequence::time_invariant(lambda, std::vector<cplx>(2 * 20));
  const std::vector<cplx> x0 = {cplx(1, 0), cplx(0, 2)};
  const StateTrajectory t = parallel_scan(x0, seq, ScanOptions{1, 1, nullptr});
  for (std::size_t k = 0; k < 20; ++k)
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_NEAR(std::abs(t.state(k)[j] - std::pow(lambda[j], static_cast<double>(k + 1)) * x0[j]), 0.0, 1e-14);
}

TEST(Scan, SingleStepSequence) {
  ScanSequence seq(1, 1);
  seq.decay(0)[0] = cplx(0.5, 0);
  seq.increment(0)[0] = cplx(1, 0);
  const std::vector<cplx> x0 = {cplx(2, 0)};
  ScanStats stats;
  const StateTrajectory t = parallel_scan(x0, seq, ScanOptions{4, 1, &stats});
  EXPECT_EQ(t.state(0)[0], cplx(2, 0));
  EXPECT_EQ(stats.phases, 1u);
}

TEST(Scan, DepthBound) {
  Rng rng(6);
  for (std::size_t n = 2; n <= 1100; n += (n < 40 ? 1 : 37)) {
    const ScanSequence seq = random_sequence(rng, n, 2);
    ScanStats stats;
    (void)parallel_scan(random_vec(rng, 2), seq, ScanOptions{1, 1, &stats});
    EXPECT_LE(stats.phases, 2 * ceil_log2(n)) << n;
    // Work stays linear: up- and down-sweep over at most 2n leaves, plus n.
    EXPECT_LE(stats.combines, 5 * n) << n;
  }
}

TEST(Scan, ResultsIndependentOfWorkerCount) {
  Rng rng(7);
  const ScanSequence seq = random_sequence(rng, 777, 32);
  const auto x0 = random_vec(rng, 32);
  const StateTrajectory a = parallel_scan(x0, seq, ScanOptions{1, 1, nullptr});
  for (std::size_t w : {2u, 3u, 8u}) {
    const StateTrajectory b = parallel_scan(x0, seq, ScanOptions{w, 1, nullptr});
    EXPECT_EQ(a.states, b.states) << w;
  }
}

TEST(Scan, ShapeErrors) {
  ScanSequence seq(4, 3);
  EXPECT_THROW(serial_recurrence(std::vector<cplx>(2), seq), Error);
  EXPECT_THROW(parallel_scan(std::vector<cplx>(3), seq, ScanOptions{0, 1, nullptr}), Error);
  EXPECT_THROW(serial_recurrence(std::vector<cplx>(3), ScanSequence(0, 3)), Error);
}

namespace {

// L = sum_t sum_j Re(c_tj x_tj) + 0.5 |x_tj|^2, so dL/dx = conj(c) + x in the
// real-pair convention.
double adjoint_loss(const std::vector<cplx>& x0, const ScanSequence& seq, const std::vector<cplx>& c) {
  const StateTrajectory t = serial_recurrence(x0, seq);
  double l = 0.0;
  for (std::size_t i = 0; i < t.states.size(); ++i) l += (c[i] * t.states[i]).real() + 0.5 * std::norm(t.states[i]);
  return l;
}

}  // namespace

TEST(Scan, AdjointMatchesFiniteDifferences) {
  Rng rng(8);
  for (bool tree : {false, true}) {
    for (std::size_t n : {1u, 2u, 5u, 16u}) {
      const std::size_t m = 3;
      ScanSequence seq = random_sequence(rng, n, m);
      std::vector<cplx> x0 = random_vec(rng, m);
      const std::vector<cplx> c = random_vec(rng, n * m);
      const StateTrajectory traj = serial_recurrence(x0, seq);
      std::vector<cplx> dl(n * m);
      for (std::size_t i = 0; i < dl.size(); ++i) dl[i] = std::conj(c[i]) + traj.states[i];
      const AdjointResult adj = adjoint_scan(seq, traj, dl, ScanOptions{2, tree ? 1 : n + 1, nullptr});

      const auto check = [&](cplx& z, cplx analytic) {
        const cplx saved = z;
        const double gr = testutil::richardson([&](double d) { z = saved + cplx(d, 0); return adjoint_loss(x0, seq, c); }, 0.0, 1e-3);
        const double gi = testutil::richardson([&](double d) { z = saved + cplx(0, d); return adjoint_loss(x0, seq, c); }, 0.0, 1e-3);
        z = saved;
        EXPECT_NEAR(analytic.real(), gr, 1e-8 * (1.0 + std::abs(gr)));
        EXPECT_NEAR(analytic.imag(), gi, 1e-8 * (1.0 + std::abs(gi)));
      };
      for (std::size_t j = 0; j < m; ++j) check(x0[j], adj.grad_x0[j]);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < m; ++j) {
          check(seq.increment(t)[j], adj.grad_increments[t * m + j]);
          check(seq.decay(t)[j], adj.grad_decays[t * m + j]);
        }
    }
  }
}
