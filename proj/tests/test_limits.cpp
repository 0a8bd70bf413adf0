#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fdnet/limits.hpp"

using namespace fdnet;

namespace {

std::shared_ptr<const WeightsMatrix> cycle3() {
  return std::make_shared<const WeightsMatrix>(row_normalize(Graph(3, {{0, 1}, {1, 2}, {0, 2}})));
}

std::shared_ptr<const WeightsMatrix> er(Index n, double d, std::uint64_t seed) {
  return std::make_shared<const WeightsMatrix>(row_normalize(gen_er(n, d, seed)));
}

Eigen::MatrixXd random_matrix(Eigen::Index n, unsigned seed, bool ties) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = u(gen);
      if (ties) v = std::floor(v * 4.0) / 4.0;  // includes exact zeros
      s(j, i) = v;
    }
  return s;
}

SPlusMatrix splus_of(const std::shared_ptr<const WeightsMatrix>& w, double lambda) {
  return compute_splus(SarSpec(w, LinkFunction::identity(), lambda, NoiseModel::gaussian(1.0)));
}

}  // namespace

TEST(MinSum, FenwickMatchesNaive) {
  for (unsigned seed = 1; seed <= 6; ++seed) {
    for (bool ties : {false, true}) {
      const Eigen::MatrixXd s = random_matrix(37 + seed * 5, seed, ties);
      for (double m : {1.5, 2.0}) {
        const auto fast = min_sum_statistics(s, m);
        const auto slow = min_sum_statistics_naive(s, m);
        EXPECT_NEAR(fast.literal, slow.literal, 1e-12 * slow.literal);
        EXPECT_NEAR(fast.order_free, slow.order_free, 1e-12 * slow.order_free);
        EXPECT_LE(fast.literal, fast.order_free);
      }
    }
  }
}

TEST(MinSum, ThreadCountDoesNotChangeBits) {
  const Eigen::MatrixXd s = random_matrix(150, 9, false);
  const auto a = min_sum_statistics(s, 2.0, 1);
  const auto b = min_sum_statistics(s, 2.0, 4);
  EXPECT_EQ(a.literal, b.literal);
  EXPECT_EQ(a.order_free, b.order_free);
}

TEST(MinSum, IdentityHandExample) {
  const auto r = min_sum_statistics(Eigen::MatrixXd::Identity(2, 2), 2.0);
  EXPECT_DOUBLE_EQ(r.literal, 0.5);
  EXPECT_DOUBLE_EQ(r.order_free, 0.5);
}

TEST(MinSum, OrderFreePermutationInvariant) {
  const Eigen::MatrixXd s = splus_of(er(60, 3, 5), 0.4).values;
  std::vector<int> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937 gen(3);
  std::shuffle(perm.begin(), perm.end(), gen);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(60);
  for (int k = 0; k < 60; ++k) p.indices()(k) = perm[static_cast<std::size_t>(k)];
  const Eigen::MatrixXd t = p * s * p.transpose();
  const auto a = min_sum_statistics(s, 2.0);
  const auto b = min_sum_statistics(t, 2.0);
  EXPECT_NEAR(a.order_free, b.order_free, 1e-12 * a.order_free);
}

TEST(Conditions, LambdaZero) {
  const ConditionReport r = clt_conditions_sar(splus_of(er(50, 3, 1), 0.0), 4.0);
  EXPECT_DOUBLE_EQ(r.influence, 1.0);
  EXPECT_NEAR(r.minsum, 1.0 / 50.0, 1e-15);
  EXPECT_NEAR(r.minsum_order_free, 1.0 / 50.0, 1e-15);
}

TEST(Conditions, CycleColumnSums) {
  const ConditionReport r = clt_conditions_sar(splus_of(cycle3(), 0.5), 4.0);
  EXPECT_NEAR(r.influence, 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.m, 2.0);
  EXPECT_THROW(clt_conditions_sar(splus_of(cycle3(), 0.5), 2.0), ParameterError);
}

TEST(Conditions, ExponentRule) {
  EXPECT_DOUBLE_EQ(clt_exponent(3.0), 1.5);
  EXPECT_DOUBLE_EQ(clt_exponent(4.0), 2.0);
  EXPECT_DOUBLE_EQ(clt_exponent(10.0), 2.0);
}

TEST(Conditions, DeltaIdentity) {
  const auto d = DeltaMatrix::deterministic(Eigen::MatrixXd::Identity(20, 20), 3.0, DeltaMode::exact);
  const ConditionReport r = clt_conditions_delta(d);
  EXPECT_DOUBLE_EQ(r.influence, 1.0);
  EXPECT_NEAR(r.minsum_order_free, std::pow(20.0, 1.0 - 1.5), 1e-14);
  EXPECT_FALSE(r.flagged("influence-diverging"));
}

TEST(Conditions, DegenerateColumnFlagged) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(30, 30);
  v.col(0).setConstant(0.5);
  const ConditionReport r = clt_conditions_delta(DeltaMatrix::deterministic(v, 4.0, DeltaMode::exact));
  EXPECT_DOUBLE_EQ(r.influence, 15.0);
  EXPECT_TRUE(r.flagged("influence-diverging"));
}

TEST(Conditions, DeltaBoundScalesSplus) {
  const SarSpec spec(er(40, 3, 2), LinkFunction::identity(), 0.3, NoiseModel::gaussian(1.0));
  const double c = 2.0 * *spec.noise().norm(4.0);
  const ConditionReport s = clt_conditions_sar(compute_splus(spec), 4.0);
  const ConditionReport d = clt_conditions_delta(delta_sar_bound(spec, 4.0));
  EXPECT_NEAR(d.influence, c * s.influence, 1e-12 * d.influence);
  EXPECT_NEAR(d.minsum, c * c * s.minsum, 1e-12 * d.minsum);
}

TEST(Conditions, NondecreasingInLambda) {
  const auto w = er(80, 3, 12);
  double e15 = 0.0, e16 = 0.0;
  for (double lambda : {0.2, 0.3, 0.4, 0.8}) {
    const ConditionReport r = clt_conditions_sar(splus_of(w, lambda), 4.0);
    EXPECT_GE(r.influence, e15);
    EXPECT_GE(r.minsum, e16);
    e15 = r.influence;
    e16 = r.minsum;
  }
}

TEST(OrderedDecay, ConstructedPowerLaw) {
  const Index n = 60;
  Eigen::MatrixXd v(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < n; ++k) {
      const Index rank = (k - i + n) % n + 1;
      v(i, k) = std::pow(static_cast<double>(rank), -3.0);
    }
  const DecayDiagnostic d = ordered_decay_diagnostic(DeltaMatrix::deterministic(v, 4.0, DeltaMode::exact), 4.0);
  EXPECT_NEAR(d.alpha_min, 3.0, 1e-9);
  EXPECT_DOUBLE_EQ(d.threshold, 2.0);
  EXPECT_TRUE(d.skipped_rows.empty());
}

TEST(OrderedDecay, IdentityTailsVanish) {
  const auto d = ordered_decay_diagnostic(
      DeltaMatrix::deterministic(Eigen::MatrixXd::Identity(20, 20), 4.0, DeltaMode::exact), 4.0);
  EXPECT_EQ(d.skipped_rows.size(), 20u);
  EXPECT_EQ(d.tail_sup, 0.0);
  EXPECT_TRUE(d.pass);
}

namespace {

DecayDiagnostic tree_decay(Index n) {
  std::vector<Edge> edges;
  for (Index c = 1; c < n; ++c) edges.push_back({(c - 1) / 2, c});
  const auto w = std::make_shared<const WeightsMatrix>(row_normalize(Graph(n, edges)));
  const SarSpec spec(w, LinkFunction::identity(), 0.3, NoiseModel::gaussian(1.0));
  return ordered_decay_diagnostic(delta_sar_bound(spec, 4.0), 4.0);
}

}  // namespace

// Binary tree: shells grow like 2^d while S+ decays like 0.1^d, so sorted rows
// follow a power law in rank with exponent near log(10)/log(2). The tail sums
// shrink with n but stay above the bare n^{-1/m} level at these sizes, so the
// verdict is a fail.
TEST(OrderedDecay, GeodesicTreeDecaysButMissesFiniteLevel) {
  const DecayDiagnostic small = tree_decay(255);
  const DecayDiagnostic large = tree_decay(1023);
  EXPECT_GT(small.alpha_min, small.threshold);
  EXPECT_GT(large.alpha_min, large.threshold);
  EXPECT_GT(large.kappa, small.kappa);
  EXPECT_LT(large.tail_sup, small.tail_sup);
  EXPECT_GT(small.tail_sup, small.tail_limit);
  EXPECT_FALSE(small.pass);
}

TEST(OrderedDecay, RejectsSmallOrder) {
  const auto d = DeltaMatrix::deterministic(Eigen::MatrixXd::Identity(20, 20), 2.0, DeltaMode::exact);
  EXPECT_THROW(ordered_decay_diagnostic(d, 2.0), ParameterError);
  const auto tiny = DeltaMatrix::deterministic(Eigen::MatrixXd::Identity(5, 5), 4.0, DeltaMode::exact);
  EXPECT_THROW(ordered_decay_diagnostic(tiny, 4.0), ParameterError);
}

TEST(GeodesicBound, CycleAndLambdaZero) {
  const auto w = cycle3();
  const Graph g(3, {{0, 1}, {1, 2}, {0, 2}});
  const BoundCheck c = verify_splus_geodesic_bound(splus_of(w, 0.5), geodesic_distances(g), 1.0, 0.5);
  // diagonal 1.2 against 2, off-diagonal 0.4 against 1
  EXPECT_NEAR(c.max_ratio, 0.6, 1e-12);
  EXPECT_EQ(c.violations, 0u);
  const BoundCheck z = verify_splus_geodesic_bound(splus_of(w, 0.0), geodesic_distances(g), 1.0, 0.0);
  EXPECT_NEAR(z.max_ratio, 1.0, 1e-15);
}

TEST(GeodesicBound, RandomGraphs) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Graph g = gen_er(60, 3, seed);
    const auto w = std::make_shared<const WeightsMatrix>(row_normalize(g));
    const DistanceMatrix dist = geodesic_distances(g);
    for (double lambda : {0.2, 0.8}) {
      const BoundCheck c = verify_splus_geodesic_bound(splus_of(w, lambda), dist, 1.0, lambda);
      EXPECT_EQ(c.violations, 0u);
      EXPECT_LE(c.max_ratio, 1.0 + 1e-9);
    }
  }
}

TEST(GeodesicBound, DetectsViolation) {
  const Graph g(3, {{0, 1}, {1, 2}, {0, 2}});
  SPlusMatrix sp = splus_of(cycle3(), 0.5);
  sp.values(0, 1) = 5.0;
  EXPECT_THROW(verify_splus_geodesic_bound(sp, geodesic_distances(g), 1.0, 0.5), PropertyViolation);
}

TEST(EuclideanDecay, PathCutoffFinite) {
  Lattice lat = gen_lattice({1, 30, CutoffScheme{1.5, 1.0}});
  const auto w = std::make_shared<const WeightsMatrix>(std::move(lat.weights));
  const ImpliedConstant c =
      verify_splus_euclidean_decay(splus_of(w, 0.4), lat.distances, CutoffScheme{1.5, 1.0}, 1);
  EXPECT_TRUE(std::isfinite(c.constant));
  EXPECT_GE(c.constant, 1.0);
  const ImpliedConstant z =
      verify_splus_euclidean_decay(splus_of(w, 0.0), lat.distances, CutoffScheme{1.5, 1.0}, 1);
  EXPECT_DOUBLE_EQ(z.constant, 1.0);
  EXPECT_EQ(z.at_distance, 0.0);
}

TEST(EuclideanDecay, PowerProbeStable) {
  const DecayProbe p = euclidean_decay_probe(2, {10, 15, 20}, PowerDecayScheme{1.0, 3.0}, 0.4,
                                             LinkFunction::identity());
  ASSERT_EQ(p.constants.size(), 3u);
  EXPECT_TRUE(p.stable);
}

TEST(MomentInequality, Constants) {
  EXPECT_DOUBLE_EQ(rosenthal_constant(2.0), 1.0);
  EXPECT_DOUBLE_EQ(rosenthal_constant(5.0), 2.0);
  EXPECT_DOUBLE_EQ(rosenthal_constant(1.5), 2.0);
  EXPECT_THROW(rosenthal_constant(1.0), ParameterError);
}

TEST(MomentInequality, IidClosedForm) {
  const Index n = 50;
  const SarSpec spec(er(n, 3, 1), LinkFunction::identity(), 0.0, NoiseModel::gaussian(1.0));
  const MomentCheck c = moment_inequality_check(spec, 2.0, 4000, 9);
  EXPECT_NEAR(c.rhs, 2.0 / std::sqrt(static_cast<double>(n)), 1e-12);
  EXPECT_NEAR(c.lhs, 1.0 / std::sqrt(static_cast<double>(n)), 4.0 * c.lhs_std_error);
  EXPECT_TRUE(c.holds);
}

TEST(MomentInequality, NonlinearInstances) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const SarSpec spec(er(100, 3, seed), LinkFunction::tobit(), 0.4, NoiseModel::student_t(6.0, 1.0));
    const MomentCheck c = moment_inequality_check(spec, 4.0, 2000, seed);
    EXPECT_TRUE(c.holds) << c.lhs << " vs " << c.rhs;
  }
}

TEST(Concentration, ExponentRule) {
  const SarSpec g(er(40, 3, 1), LinkFunction::identity(), 0.0, NoiseModel::gaussian(1.0));
  EXPECT_DOUBLE_EQ(concentration_params(g, 0.5).alpha, 1.0);
  const SarSpec u(er(40, 3, 1), LinkFunction::identity(), 0.0, NoiseModel::uniform(-1.0, 1.0));
  EXPECT_DOUBLE_EQ(concentration_params(u, 0.0).alpha, 2.0);
  EXPECT_THROW(concentration_params(g, 0.5, {}), ParameterError);
}

TEST(Concentration, LambdaZeroGamma) {
  // S+ = I: the probe is 2 p^{-nu} ||eps||_p.
  const SarSpec spec(er(40, 3, 1), LinkFunction::identity(), 0.0, NoiseModel::gaussian(1.0));
  const TailBoundParams t = concentration_params(spec, 0.5);
  double want = 0.0;
  for (double p : {2.0, 4.0, 6.0, 8.0, 12.0, 16.0}) {
    const double norm = std::pow(std::pow(2.0, p / 2.0) * std::tgamma((p + 1.0) / 2.0) / std::sqrt(M_PI), 1.0 / p);
    want = std::max(want, 2.0 * norm / std::sqrt(p));
  }
  EXPECT_NEAR(t.gamma0, want, 1e-12);
  EXPECT_NEAR(t.t0, 1.0 / (std::exp(1.0) * want), 1e-12);
  EXPECT_NEAR(t.rate, 0.5 * t.t0, 1e-15);
}

TEST(Concentration, GammaGrowsWithGrid) {
  const SarSpec spec(er(40, 3, 1), LinkFunction::identity(), 0.3, NoiseModel::uniform(-1.0, 1.0));
  const double small = concentration_params(spec, 0.0, {2, 4}).gamma0;
  const double large = concentration_params(spec, 0.0, {2, 4, 8, 16}).gamma0;
  EXPECT_GE(large, small);
}
