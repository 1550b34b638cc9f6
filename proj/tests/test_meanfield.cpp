#include "evogame/meanfield.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

namespace evogame {
namespace {

FieldParams params_for(PayoffMatrix a, double c, double lambda = 0.0) {
  return FieldParams(std::move(a), StepFunctionParams{c}, lambda);
}

ParticleEnsemble cloud(StreamRng& rng, const Vec& center, double radius, int m) {
  std::vector<SimplexPoint> pts;
  const int d = static_cast<int>(center.size());
  for (int k = 0; k < m; ++k) {
    Vec dir = oracle::random_simplex(rng, d).array() - 1.0 / d;
    Vec p = center + radius * rng.uniform01() * dir / std::max(dir.norm(), 1e-12);
    pts.push_back(SimplexPoint(p / p.sum()));
  }
  return ParticleEnsemble::uniform(std::move(pts));
}

TEST(FieldF, Examples) {
  const auto params = params_for(two_strategy_matrix(1), 0.1);
  const SimplexPoint half{0.5, 0.5};
  const Vec f = field_F(half, half, params);
  EXPECT_NEAR(f[0], 0.05, 1e-16);
  EXPECT_NEAR(f[1], -0.05, 1e-16);

  const auto rps = params_for(cyclic_matrix(3), 0.01);
  EXPECT_EQ(field_F(SimplexPoint{0, 0.4, 0.6}, SimplexPoint{0.2, 0.3, 0.5}, rps),
            Vec::Zero(3));
  const auto q = SimplexPoint::barycenter(3);
  EXPECT_LE(field_F(q, q, rps).cwiseAbs().maxCoeff(), 1e-17);
  EXPECT_THROW(field_F(half, q, rps), Error);
}

TEST(FieldF, TangentToSimplexAndZeroOnBoundary) {
  StreamRng rng(6, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 2 + static_cast<int>(rng.uniform_index(6));
    const auto params = params_for(PayoffMatrix::validate(oracle::random_antisymmetric(rng, d)),
                                   0.001 + 0.5 * rng.uniform01());
    Vec p = oracle::random_simplex(rng, d);
    const Vec pbar = oracle::random_simplex(rng, d);
    EXPECT_NEAR(field_F(p, pbar, params).sum(), 0.0, 1e-14);
    p[rng.uniform_index(d)] = 0.0;
    p /= p.sum();
    EXPECT_EQ(field_F(p, pbar, params).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(FieldParams, Validation) {
  auto p = params_for(cyclic_matrix(3), 0.1, 0.5);
  EXPECT_NO_THROW(p.validate());
  EXPECT_NEAR(p.noise_cov(0, 0), 2.0 / 36, 1e-16);
  p.noise_cov(0, 1) += 0.1;
  EXPECT_THROW(p.validate(), Error);
  p = params_for(cyclic_matrix(3), 0.1, 0.5);
  p.noise_cov = -p.noise_cov;
  EXPECT_THROW(p.validate(), Error);
  EXPECT_THROW(params_for(cyclic_matrix(3), 0.1, -1.0).validate(), Error);
  EXPECT_THROW(params_for(cyclic_matrix(3), 1.5).validate(), Error);
}

TEST(IntegrateTransport, NashEnsembleIsStationary) {
  const auto params = params_for(cyclic_matrix(5), 0.001);
  const auto ens = ParticleEnsemble::dirac(SimplexPoint::barycenter(5));
  const auto out = integrate_transport(ens, params, 5.0, 0.1);
  ASSERT_EQ(out.size(), 51u);
  for (const auto& snap : out) {
    EXPECT_LE((snap.points[0].coords() - ens.points[0].coords()).cwiseAbs().maxCoeff(), 1e-16);
  }
}

TEST(IntegrateTransport, SingleParticleFollowsScaledReplicator) {
  const double c = 0.01;
  const auto a = cyclic_matrix(3);
  const SimplexPoint p0{0.4, 0.33, 0.27};
  ASSERT_GE(p0.coords().prod(), c);
  const auto out = integrate_transport(ParticleEnsemble::dirac(p0), params_for(a, c), 20.0, 0.01);
  const auto ref = integrate_rk4(p0, a, 20.0, 0.01, 2 * c);
  ASSERT_EQ(out.size(), ref.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    ASSERT_GE(out[k].points[0].coords().prod(), c);
    EXPECT_LE((out[k].points[0].coords() - ref.states[k].coords()).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(IntegrateTransport, MeanFollowsScaledReplicatorOnPlateau) {
  const double c = 0.01;
  const auto a = cyclic_matrix(3);
  StreamRng rng(12, 0);
  Vec center(3);
  center << 0.36, 0.33, 0.31;
  const auto ens = cloud(rng, center, 0.04, 200);
  const double t_end = 200.0;
  const double dt = 0.05;
  TransportOptions opts;
  double lowest = 1.0;
  opts.observer = [&](double, const RowMat& x) {
    for (Eigen::Index k = 0; k < x.rows(); ++k) lowest = std::min(lowest, x.row(k).prod());
  };
  const auto out = integrate_transport(ens, params_for(a, c), t_end, dt, opts);
  ASSERT_GE(lowest, c);
  const auto ref = integrate_rk4(mean_strategy(ens), a, t_end, dt / 4, 2 * c);
  double worst = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    worst = std::max(worst,
                     (mean_strategy(out[k]).coords() - ref.states[4 * k].coords()).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 10 * std::pow(dt, 4) * t_end);
}

TEST(IntegrateTransport, FrozenMeanIsFirstOrderInTheCoupling) {
  const auto a = cyclic_matrix(3);
  StreamRng rng(2, 0);
  const auto ens = cloud(rng, Vec::Constant(3, 1.0 / 3), 0.2, 20);
  const auto params = params_for(a, 0.2);
  const auto ref = integrate_transport(ens, params, 20.0, 0.005).back();
  TransportOptions frozen;
  frozen.frozen_mean = true;
  auto err = [&](double dt, const TransportOptions& o) {
    return sliced_w1(integrate_transport(ens, params, 20.0, dt, o).back(), ref, 16, 1);
  };
  const double coupled_ratio = err(0.2, {}) / err(0.1, {});
  const double frozen_ratio = err(0.2, frozen) / err(0.1, frozen);
  EXPECT_GT(coupled_ratio, 10.0);
  EXPECT_LT(frozen_ratio, 6.0);
}

TEST(IntegrateTransport, RecordsAndRejects) {
  const auto params = params_for(cyclic_matrix(3), 0.1);
  const auto ens = ParticleEnsemble::dirac(SimplexPoint{0.5, 0.3, 0.2});
  TransportOptions opts;
  opts.record_every = 4;
  const auto out = integrate_transport(ens, params, 1.0, 0.1, opts);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_DOUBLE_EQ(out.back().time, 1.0);
  EXPECT_NEAR(out[1].time, 0.4, 1e-15);
  EXPECT_THROW(integrate_transport(ens, params_for(cyclic_matrix(3), 0.1, 0.2), 1.0, 0.1), Error);
  EXPECT_THROW(integrate_transport(ParticleEnsemble{}, params, 1.0, 0.1), Error);
}

TEST(TwoStrategyRhs, Examples) {
  EXPECT_NEAR(two_strategy_rhs(0.5, 0.5, 0.1), 0.05, 1e-17);
  EXPECT_EQ(two_strategy_rhs(0.0, 0.4, 0.1), 0.0);
  EXPECT_EQ(two_strategy_rhs(1.0, 0.4, 0.1), 0.0);
}

TEST(TwoStrategyRhs, BoundedBelowBySquaredGap) {
  StreamRng rng(9, 0);
  for (int k = 0; k < 100000; ++k) {
    const double x = rng.uniform01();
    const double m = rng.uniform01();
    const double c = rng.uniform01();
    const double h = std::min(x * (1 - x), c);
    EXPECT_GE(two_strategy_rhs(x, m, c), h * (x - m) * (x - m) - 1e-16);
  }
}

TEST(TwoStrategyRhs, AgreesWithGenericField) {
  StreamRng rng(10, 0);
  for (int k = 0; k < 1000; ++k) {
    const double b = 2 * rng.uniform01() - 1;
    const double c = 0.5 * rng.uniform01() + 0.01;
    const double x = rng.uniform01();
    const double m = rng.uniform01();
    const Vec f = field_F(Vec{{x, 1 - x}}, Vec{{m, 1 - m}}, params_for(two_strategy_matrix(b), c));
    EXPECT_NEAR(f[0], b * two_strategy_rhs(x, m, c), 1e-16);
  }
}

TEST(IntegrateTwoStrategies, MatchesGenericSolverAndIsMonotone) {
  StreamRng rng(11, 0);
  std::vector<double> x0(50);
  for (auto& x : x0) x = rng.uniform01();
  x0[0] = 0.0;
  x0[1] = 1.0;
  const std::vector<double> w(50, 1.0 / 50);
  const auto scalar = integrate_two_strategies(x0, w, 1.0, 0.1, 30.0, 0.1);

  std::vector<SimplexPoint> pts;
  for (double x : x0) pts.push_back(SimplexPoint{x, 1 - x});
  const auto generic =
      integrate_transport(ParticleEnsemble::uniform(pts), params_for(two_strategy_matrix(1), 0.1), 30.0, 0.1);
  ASSERT_EQ(scalar.size(), generic.size());
  for (std::size_t s = 0; s < scalar.size(); ++s) {
    for (int k = 0; k < 50; ++k) {
      EXPECT_NEAR(scalar[s].points[k][0], generic[s].points[k][0], 1e-13);
      if (s > 0) EXPECT_GE(scalar[s].points[k][0], scalar[s - 1].points[k][0]);
    }
  }
  EXPECT_EQ(scalar.back().points[0][0], 0.0);
  EXPECT_EQ(scalar.back().points[1][0], 1.0);
}

TEST(IntegrateTwoStrategies, NegativeRateReversesDirection) {
  const auto out = integrate_two_strategies({0.4, 0.6}, {0.5, 0.5}, -1.0, 0.1, 10.0, 0.1);
  EXPECT_LT(out.back().points[0][0], 0.4);
  EXPECT_LT(out.back().points[1][0], 0.6);
  EXPECT_THROW(integrate_two_strategies({0.4}, {1.0}, 2.0, 0.1, 1.0, 0.1), Error);
  EXPECT_THROW(integrate_two_strategies({1.4}, {1.0}, 1.0, 0.1, 1.0, 0.1), Error);
}

TEST(DiffusionStep, VanishingNoiseIsAnEulerStep) {
  StreamRng rng(13, 0);
  const auto ens = cloud(rng, Vec::Constant(3, 1.0 / 3), 0.2, 30);
  const auto params = params_for(cyclic_matrix(3), 0.05, 1e-30);
  const auto res = diffusion_step(ens, params, 0.1, 7, 0);
  const Vec mean = mean_strategy(ens).coords();
  for (int k = 0; k < ens.size(); ++k) {
    const Vec euler = ens.points[k].coords() + 0.1 * field_F(ens.points[k].coords(), mean, params);
    EXPECT_LE((res.ensemble.points[k].coords() - euler).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_THROW(diffusion_step(ens, params_for(cyclic_matrix(3), 0.05), 0.1, 7, 0), Error);
}

TEST(DiffusionStep, MeanIsStationaryWithoutGame) {
  const auto zero = PayoffMatrix::validate(Mat::Zero(3, 3));
  const auto params = params_for(zero, 0.01, 1.0);
  constexpr int kParticles = 200;
  auto ens = ParticleEnsemble::uniform(
      std::vector<SimplexPoint>(kParticles, SimplexPoint::barycenter(3)));
  constexpr int kSteps = 10000;
  const double dt = 0.01;
  int truncations = 0;
  for (int s = 0; s < kSteps; ++s) {
    auto res = diffusion_step(ens, params, dt, 21, static_cast<std::uint64_t>(s));
    truncations += res.truncations;
    ens = std::move(res.ensemble);
  }
  EXPECT_EQ(truncations, 0);
  const double sd = std::sqrt(kSteps * dt * 2.0 / 36) * 0.01 / std::sqrt(kParticles);
  const Vec shift = mean_strategy(ens).coords() - Vec::Constant(3, 1.0 / 3);
  EXPECT_LE(shift.cwiseAbs().maxCoeff(), 4 * sd);
}

TEST(DiffusionStep, VarianceGrowsAtTheAnalyticRate) {
  const auto zero = PayoffMatrix::validate(Mat::Zero(2, 2));
  const double c = 0.1;
  const double lambda = 1.0;
  const auto params = params_for(zero, c, lambda);
  constexpr int kParticles = 20000;
  auto ens = ParticleEnsemble::uniform(std::vector<SimplexPoint>(kParticles, SimplexPoint{0.5, 0.5}));
  const double dt = 0.01;
  for (int s = 0; s < 100; ++s) ens = diffusion_step(ens, params, dt, 5, s).ensemble;
  double var = 0.0;
  for (const auto& p : ens.points) var += (p[0] - 0.5) * (p[0] - 0.5);
  var /= kParticles;
  const double expected = lambda * c * c * (1.0 / 12) * 1.0;
  EXPECT_NEAR(var, expected, 5 * expected * std::sqrt(2.0 / kParticles));
}

TEST(DiffusionStep, DeterministicPerSeed) {
  StreamRng rng(14, 0);
  const auto ens = cloud(rng, Vec::Constant(3, 1.0 / 3), 0.3, 50);
  const auto params = params_for(cyclic_matrix(3), 0.05, 0.5);
  const auto a = diffusion_step(ens, params, 0.1, 3, 9);
  const auto b = diffusion_step(ens, params, 0.1, 3, 9);
  const auto c = diffusion_step(ens, params, 0.1, 3, 10);
  EXPECT_EQ(a.ensemble.points, b.ensemble.points);
  EXPECT_NE(a.ensemble.points, c.ensemble.points);
  for (const auto& p : a.ensemble.points) EXPECT_TRUE(in_simplex(p.coords()));
}

TEST(DiffusionStep, ExitsAreRedrawnOrTruncated) {
  std::vector<SimplexPoint> pts(500, SimplexPoint{0.12, 0.88});
  const auto params = params_for(PayoffMatrix::validate(Mat::Zero(2, 2)), 0.4, 50.0);
  const auto res = diffusion_step(ParticleEnsemble::uniform(pts), params, 0.5, 1, 0);
  EXPECT_GT(res.rejections, 0);
  for (const auto& p : res.ensemble.points) {
    EXPECT_GE(p[0], 0.0);
    EXPECT_LE(p[0], 1.0);
  }
}

TEST(CovarianceSqrt, SquaresBack) {
  for (int d : {2, 3, 6}) {
    const Mat q = uniform_simplex_covariance(d);
    const Mat root = covariance_sqrt(q);
    EXPECT_LE((root * root - q).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((root - root.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE(root.rowwise().sum().cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(WeakResidual, MassIsConserved) {
  StreamRng rng(15, 0);
  const auto params = params_for(cyclic_matrix(3), 0.1);
  const auto snaps = integrate_transport(cloud(rng, Vec::Constant(3, 1.0 / 3), 0.3, 40), params, 5.0, 0.1);
  EXPECT_LE(weak_residual(snaps, params, QuadraticTestFunction::constant_one(3)), 1e-14);
}

TEST(WeakResidual, SecondOrderInTheSnapshotSpacing) {
  StreamRng rng(16, 0);
  std::vector<SimplexPoint> pts;
  for (int k = 0; k < 60; ++k) {
    const double x = 0.05 + 0.9 * rng.uniform01();
    pts.push_back(SimplexPoint{x, 1 - x});
  }
  const auto ens = ParticleEnsemble::uniform(pts);
  const auto params = params_for(two_strategy_matrix(1), 0.1);
  const auto phi = QuadraticTestFunction::coordinate(2, 0);
  // The kinks of h blur single halvings, so fit the order over three.
  auto residual = [&](double dt) {
    return weak_residual(integrate_transport(ens, params, 20.0, dt), params, phi);
  };
  EXPECT_GT(std::log2(residual(0.4) / residual(0.05)) / 3.0, 1.8);
}

TEST(WeakResidual, QuadraticDecayOnThePlateau) {
  StreamRng rng(19, 0);
  const auto ens = cloud(rng, Vec{{0.36, 0.33, 0.31}}, 0.04, 50);
  const auto params = params_for(cyclic_matrix(3), 0.01);
  const auto phi = QuadraticTestFunction::coordinate(3, 0);
  double prev = 0.0;
  for (double dt : {2.0, 1.0, 0.5}) {
    const double res = weak_residual(integrate_transport(ens, params, 100.0, dt), params, phi);
    if (prev > 0.0) {
      EXPECT_GT(prev / res, 3.5);
      EXPECT_LT(prev / res, 4.5);
    }
    prev = res;
  }
}

TEST(WeakResidual, VanishesAtEquilibrium) {
  const auto params = params_for(cyclic_matrix(5), 0.001);
  const auto snaps =
      integrate_transport(ParticleEnsemble::dirac(SimplexPoint::barycenter(5)), params, 3.0, 0.5);
  StreamRng rng(3, 0);
  QuadraticTestFunction quad{0.3, Vec::Random(5), oracle::random_antisymmetric(rng, 5) + Mat::Identity(5, 5)};
  for (const auto& phi : {QuadraticTestFunction::coordinate(5, 2), quad}) {
    EXPECT_LE(weak_residual(snaps, params, phi), 1e-12);
  }
  EXPECT_THROW(weak_residual({snaps[0], snaps[1]}, params, quad), Error);
}

TEST(StabilityFactor, IdenticalEnsemblesAreDegenerate) {
  const auto ens = ParticleEnsemble::dirac(SimplexPoint{0.5, 0.3, 0.2});
  try {
    stability_factor(ens, ens, params_for(cyclic_matrix(3), 0.1), 1.0, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDegenerateInitialDistance);
  }
}

TEST(StabilityFactor, BoundedForSmallShift) {
  StreamRng rng(18, 0);
  const auto a = cloud(rng, Vec{{0.5, 0.3, 0.2}}, 0.15, 100);
  ParticleEnsemble b = a;
  const Vec center = Vec::Constant(3, 1.0 / 3);
  for (auto& p : b.points) {
    const Vec toward = center - p.coords();
    p = SimplexPoint::trusted(p.coords() + 1e-3 * toward / toward.norm());
  }
  const double factor = stability_factor(a, b, params_for(cyclic_matrix(3), 0.1), 1.0, 0.01);
  EXPECT_GT(factor, 0.0);
  EXPECT_LT(factor, 10.0);
}

TEST(StabilityFactor, NearOneAroundEquilibrium) {
  Vec u(3);
  u << 1, -1, 0;
  u /= u.norm();
  const Vec q = Vec::Constant(3, 1.0 / 3);
  auto pair = [&](double eps) {
    return ParticleEnsemble::uniform({SimplexPoint::trusted(q + eps * u), SimplexPoint::trusted(q - eps * u)});
  };
  const double factor =
      stability_factor(pair(1e-3), pair(2e-3), params_for(cyclic_matrix(3), 0.02), 1.0, 0.01);
  EXPECT_NEAR(factor, 1.0, 0.2);
}

TEST(MinSupportProduct, IgnoresZeroWeightAtoms) {
  ParticleEnsemble e;
  e.points = {SimplexPoint{0, 1}, SimplexPoint{0.5, 0.5}};
  e.weights = {0.0, 1.0};
  EXPECT_DOUBLE_EQ(min_support_product(e), 0.25);
}

}  // namespace
}  // namespace evogame
