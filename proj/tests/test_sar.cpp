#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "fdnet/sar.hpp"

using namespace fdnet;

namespace {

std::shared_ptr<const WeightsMatrix> cycle3() {
  return std::make_shared<const WeightsMatrix>(row_normalize(Graph(3, {{0, 1}, {1, 2}, {0, 2}})));
}

std::shared_ptr<const WeightsMatrix> er(Index n, double d, std::uint64_t seed) {
  return std::make_shared<const WeightsMatrix>(row_normalize(gen_er(n, d, seed)));
}

}  // namespace

TEST(Link, BuiltinsAndCustom) {
  EXPECT_EQ(LinkFunction::tobit()(-2.0), 0.0);
  EXPECT_EQ(LinkFunction::tobit()(2.0), 2.0);
  EXPECT_EQ(LinkFunction::identity().lipschitz(), 1.0);
  const auto tanh_link = LinkFunction::custom([](double x) { return std::tanh(x); }, 1.0, "tanh");
  EXPECT_NEAR(tanh_link(0.5), std::tanh(0.5), 0.0);
  EXPECT_THROW(LinkFunction::custom([](double x) { return 3.0 * x; }, 1.0), ParameterError);
}

TEST(Noise, MomentOracles) {
  const auto g = NoiseModel::gaussian(2.0);
  EXPECT_NEAR(*g.norm(2.0), 2.0, 1e-14);
  EXPECT_NEAR(*g.coupled_norm(2.0), 2.0 * std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(*g.norm(4.0), 2.0 * std::pow(3.0, 0.25), 1e-13);
  const auto u = NoiseModel::uniform(-1.0, 1.0);
  EXPECT_NEAR(*u.norm(2.0), std::sqrt(1.0 / 3.0), 1e-14);
  // Triangular on [-2,2]: E X^2 = 4/6.
  EXPECT_NEAR(*u.coupled_norm(2.0), std::sqrt(4.0 / 6.0), 1e-14);
  const auto t = NoiseModel::student_t(6.0, 1.0);
  EXPECT_NEAR(*t.norm(2.0), std::sqrt(6.0 / 4.0), 1e-12);
  // E(T - T*)^4 = 2 E T^4 + 6 (E T^2)^2 with E T^4 = 3 nu^2/((nu-2)(nu-4)).
  const double et4 = 3.0 * 36.0 / (4.0 * 2.0);
  EXPECT_NEAR(*t.coupled_norm(4.0), std::pow(2.0 * et4 + 6.0 * 1.5 * 1.5, 0.25), 1e-12);
  EXPECT_FALSE(t.coupled_norm(3.0).has_value());
  EXPECT_THROW(NoiseModel::student_t(4.0, 1.0), ParameterError);
}

TEST(Noise, EmpiricalMomentsAgreeWithOracles) {
  for (const auto& noise : {NoiseModel::gaussian(1.5), NoiseModel::uniform(-0.5, 2.0), NoiseModel::student_t(9.0, 0.7)}) {
    Stream s(21);
    stats::Moments second;
    for (int k = 0; k < 200000; ++k) {
      const double e = noise.draw(s);
      second.add(e * e);
    }
    EXPECT_NEAR(second.mean, std::pow(*noise.norm(2.0), 2), 4.0 * second.std_error()) << noise.describe();
  }
}

TEST(SarSpec, ZetaEnforced) {
  EXPECT_THROW(SarSpec(cycle3(), LinkFunction::identity(), 1.0, NoiseModel::gaussian(1.0)), ParameterError);
  const SarSpec ok(cycle3(), LinkFunction::identity(), -0.9, NoiseModel::gaussian(1.0));
  EXPECT_DOUBLE_EQ(ok.zeta(), 0.9);
}

TEST(SolveSar, NoNetworkTerm) {
  Eigen::VectorXd c(3);
  c << 1.0, -2.0, 0.5;
  const SarSpec spec(cycle3(), LinkFunction::identity(), 0.0, c, NoiseModel::gaussian(1.0));
  Eigen::VectorXd eps(3);
  eps << 0.1, 0.2, 0.3;
  EXPECT_LE((solve_sar(spec, eps) - (c + eps)).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(SolveSar, TobitAllNegativeIsZero) {
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(3, -1.0);
  const SarSpec spec(cycle3(), LinkFunction::tobit(), 0.7, c, NoiseModel::gaussian(1.0));
  Eigen::VectorXd eps(3);
  eps << -0.1, -3.0, -0.5;
  EXPECT_EQ(solve_sar(spec, eps), Eigen::VectorXd::Zero(3));
}

TEST(SolveSar, ThreeCycleCirculantInverse) {
  // (I - W/2) = circ(1, -1/4, -1/4); its inverse is circ(1.2, 0.4, 0.4).
  Eigen::Matrix3d m;
  m << 1, -0.25, -0.25, -0.25, 1, -0.25, -0.25, -0.25, 1;
  const Eigen::Matrix3d inv = m.inverse();
  EXPECT_NEAR(inv(0, 0), 1.2, 1e-15);
  EXPECT_NEAR(inv(1, 0), 0.4, 1e-15);
  const SarSpec spec(cycle3(), LinkFunction::identity(), 0.5, NoiseModel::gaussian(1.0));
  const Eigen::VectorXd y = solve_sar(spec, Eigen::Vector3d(1, 0, 0));
  EXPECT_NEAR(y(0), 1.2, 1e-14);
  EXPECT_NEAR(y(1), 0.4, 1e-14);
  EXPECT_NEAR(y(2), 0.4, 1e-14);
}

TEST(SolveSar, FixedPointAgreesWithDirect) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const SarSpec spec(er(150, 4.0, s), LinkFunction::identity(), 0.8, NoiseModel::gaussian(1.0));
    const SarSolver solver(spec);
    const Eigen::VectorXd eps = draw_noise(spec.noise(), 150, Stream(s));
    const auto fp = solver.solve_fixed_point(eps, true);
    EXPECT_LE((fp.outcome - solver.solve_direct(eps)).lpNorm<Eigen::Infinity>(), 1e-8);
    for (std::size_t k = 1; k < fp.step_norms.size(); ++k) {
      EXPECT_LE(fp.step_norms[k], spec.zeta() * fp.step_norms[k - 1] * (1 + 1e-9) + 1e-15);
    }
  }
}

TEST(SolveSar, PerturbationBoundedBySplus) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const SarSpec spec(er(60, 3.0, s), LinkFunction::tobit(), -0.6, NoiseModel::gaussian(1.0));
    const SPlusMatrix sp = compute_splus(spec);
    const SarSolver solver(spec);
    Stream st(100 + s);
    for (int k = 0; k < 5; ++k) {
      const Eigen::VectorXd e1 = draw_noise(spec.noise(), 60, st.child(2 * k));
      const Eigen::VectorXd e2 = draw_noise(spec.noise(), 60, st.child(2 * k + 1));
      const Eigen::VectorXd lhs = (solver.solve(e1) - solver.solve(e2)).cwiseAbs();
      const Eigen::VectorXd rhs = sp.values * (e1 - e2).cwiseAbs();
      EXPECT_TRUE((lhs.array() <= rhs.array() + 1e-8).all());
    }
  }
}

TEST(Splus, LambdaZeroIsScaledIdentity) {
  const SarSpec spec(cycle3(), LinkFunction::custom([](double x) { return 0.5 * x; }, 0.5), 0.0,
                     NoiseModel::gaussian(1.0));
  EXPECT_LE((compute_splus(spec).values - 0.5 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Splus, ThreeCycleOracle) {
  const SarSpec spec(cycle3(), LinkFunction::identity(), 0.5, NoiseModel::gaussian(1.0));
  for (auto method : {SplusMethod::direct, SplusMethod::neumann}) {
    const SPlusMatrix sp = compute_splus(spec, method);
    for (Index j = 0; j < 3; ++j)
      for (Index i = 0; i < 3; ++i)
        EXPECT_NEAR(sp.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)), j == i ? 1.2 : 0.4, 1e-10);
    EXPECT_NEAR(sp.values.colwise().sum().maxCoeff(), 2.0, 1e-10);
  }
  // Negative lambda uses |lambda|.
  const SarSpec neg(cycle3(), LinkFunction::identity(), -0.5, NoiseModel::gaussian(1.0));
  EXPECT_NEAR(compute_splus(neg).values(0, 0), 1.2, 1e-12);
}

TEST(Splus, NormBoundAndNonnegative) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const SarSpec spec(er(100, 3.0, s), LinkFunction::identity(), 0.4, NoiseModel::gaussian(1.0));
    const SPlusMatrix sp = compute_splus(spec);
    EXPECT_GE(sp.values.minCoeff(), 0.0);
    EXPECT_LE(sp.values.rowwise().sum().maxCoeff(), 1.0 / (1.0 - spec.zeta()) + 1e-12);
    for (Eigen::Index k = 0; k < 100; ++k) EXPECT_GE(sp.values(k, k), 1.0);
  }
}

TEST(Simulate, DeterministicAndMatchesSingleSolve) {
  const SarSpec spec(er(50, 3.0, 1), LinkFunction::tobit(), 0.3, NoiseModel::gaussian(1.0));
  const Eigen::MatrixXd a = simulate_replications(spec, 8, 77, 1);
  const Eigen::MatrixXd b = simulate_replications(spec, 8, 77, 4);
  EXPECT_EQ(a, b);
  const Eigen::VectorXd one = solve_sar(spec, draw_noise(spec.noise(), 50, replication_stream(77, 3)));
  EXPECT_EQ(a.col(3), one);
}

TEST(Simulate, MeanMatchesLinearSolve) {
  const auto w = er(30, 3.0, 5);
  const Eigen::VectorXd c = Eigen::VectorXd::LinSpaced(30, -1.0, 1.0);
  const SarSpec spec(w, LinkFunction::identity(), 0.4, c, NoiseModel::gaussian(1.0));
  const std::size_t r = 100000;
  const Eigen::MatrixXd y = simulate_replications(spec, r, 9, 0);
  const Eigen::MatrixXd a = (Eigen::MatrixXd::Identity(30, 30) - 0.4 * w->dense()).inverse();
  const Eigen::VectorXd mean = a * c;
  const Eigen::VectorXd sd = a.rowwise().norm();
  const Eigen::VectorXd sample_mean = y.rowwise().mean();
  for (Eigen::Index j = 0; j < 30; ++j) {
    EXPECT_NEAR(sample_mean(j), mean(j), 4.0 * sd(j) / std::sqrt(static_cast<double>(r)));
  }
}
