#pragma once

// Particle (characteristics) solver for the nonlocal mean-field transport
// equation, its two-strategy specialization and an Euler-Maruyama variant
// for the diffusive limit.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "evogame/ensemble.hpp"
#include "evogame/error.hpp"
#include "evogame/game.hpp"
#include "evogame/metrics.hpp"
#include "evogame/replicator.hpp"
#include "evogame/rng.hpp"
#include "evogame/simplex.hpp"

namespace evogame {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FieldParams {
  FieldParams(PayoffMatrix game, StepFunctionParams step_params, double diffusion = 0.0)
      : a(std::move(game)), step(step_params), lambda(diffusion) {
    noise_cov = lambda > 0.0 ? uniform_simplex_covariance(a.dim()) : Mat::Zero(a.dim(), a.dim());
  }

  PayoffMatrix a;
  StepFunctionParams step;
  double lambda = 0.0;
  Mat noise_cov;

  void validate() const {
    a.require_antisymmetric();
    step.validate();
    if (!(lambda >= 0.0)) throw Error(Errc::kConfigInvalid, "lambda must be >= 0");
    const auto d = a.dim();
    if (noise_cov.rows() != d || noise_cov.cols() != d) {
      throw Error(Errc::kDimensionMismatch, "noise covariance shape");
    }
    if ((noise_cov - noise_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
        noise_cov.rowwise().sum().cwiseAbs().maxCoeff() > 1e-12) {
      throw Error(Errc::kConfigInvalid, "Q must be symmetric with zero row sums");
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(noise_cov);
    if (eig.eigenvalues().minCoeff() < -1e-12) {
      throw Error(Errc::kConfigInvalid, "Q must be positive semidefinite");
    }
  }
};

// F_i = h(p) (p_i (A pbar)_i + pbar_i (A p)_i)
inline Vec field_F(const Vec& p, const Vec& pbar, const FieldParams& params) {
  const Mat& a = params.a.entries();
  const double h = h_eval(p, params.step);
  return h * (p.array() * (a * pbar).array() + pbar.array() * (a * p).array()).matrix();
}

inline Vec field_F(const SimplexPoint& p, const SimplexPoint& pbar, const FieldParams& params) {
  if (p.dim() != params.a.dim() || pbar.dim() != params.a.dim()) {
    throw Error(Errc::kDimensionMismatch, "field_F");
  }
  return field_F(p.coords(), pbar.coords(), params);
}

namespace detail {

inline RowMat to_rows(const ParticleEnsemble& ens) {
  RowMat x(ens.size(), ens.dim());
  for (int k = 0; k < ens.size(); ++k) x.row(k) = ens.points[k].coords().transpose();
  return x;
}

inline ParticleEnsemble from_rows(const RowMat& x, const std::vector<double>& weights, double t) {
  ParticleEnsemble ens;
  ens.points.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    ens.points.push_back(SimplexPoint::trusted(x.row(k).transpose()));
  }
  ens.weights = weights;
  ens.time = t;
  return ens;
}

// Weighted mean in fixed particle order.
inline Vec weighted_mean(const RowMat& x, const Vec& w) { return x.transpose() * w; }

inline RowMat field_rows(const RowMat& x, const Vec& mean, const FieldParams& params) {
  const Mat& a = params.a.entries();
  const Eigen::RowVectorXd a_mean = (a * mean).transpose();
  const RowMat ax = x * a.transpose();
  RowMat f(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    const double h = std::min(x.row(k).prod(), params.step.c);
    f.row(k) = h * (x.row(k).array() * a_mean.array() + mean.transpose().array() * ax.row(k).array());
  }
  return f;
}

inline void clamp_rows(RowMat& x, double t) {
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    Vec row = x.row(k).transpose();
    if (!clamp_to_simplex(row, kClampBand)) {
      throw Error(Errc::kStateLeftSimplex,
                  "particle " + std::to_string(k) + " at t=" + std::to_string(t) + ": " +
                      format_vec(row));
    }
    x.row(k) = row.transpose();
  }
}

}  // namespace detail

struct TransportOptions {
  // Keep every n-th step (the final state is always kept).
  int record_every = 1;
  // Freeze the mean at the start of each step instead of recomputing it at
  // every RK4 stage. Faster, but the coupled scheme drops to first order.
  bool frozen_mean = false;
  // Called after every accepted step with (time, particle rows).
  std::function<void(double, const RowMat&)> observer;
};

// Advances all particles as one coupled system with classical RK4; the
// mean is recomputed from the stage states at every stage.
inline std::vector<ParticleEnsemble> integrate_transport(const ParticleEnsemble& ens0,
                                                         const FieldParams& params, double t_end,
                                                         double dt,
                                                         const TransportOptions& opts = {}) {
  params.validate();
  ens0.validate();
  if (params.lambda != 0.0) {
    throw Error(Errc::kConfigInvalid, "integrate_transport is the lambda = 0 solver");
  }
  if (ens0.dim() != params.a.dim()) throw Error(Errc::kDimensionMismatch, "ensemble vs game");
  if (opts.record_every < 1) throw Error(Errc::kConfigInvalid, "record_every must be >= 1");
  const StepPlan plan = plan_steps(t_end, dt);

  const Vec w = Eigen::Map<const Vec>(ens0.weights.data(), ens0.size());
  RowMat x = detail::to_rows(ens0);
  std::vector<ParticleEnsemble> out;
  out.push_back(detail::from_rows(x, ens0.weights, ens0.time));

  for (long k = 1; k <= plan.steps; ++k) {
    const double t_prev = plan.time_at(k - 1, t_end);
    const double t_next = plan.time_at(k, t_end);
    const double h = t_next - t_prev;
    const Vec m0 = detail::weighted_mean(x, w);
    auto mean_of = [&](const RowMat& stage) {
      return opts.frozen_mean ? m0 : Vec(detail::weighted_mean(stage, w));
    };
    const RowMat k1 = detail::field_rows(x, m0, params);
    const RowMat x2 = x + 0.5 * h * k1;
    const RowMat k2 = detail::field_rows(x2, mean_of(x2), params);
    const RowMat x3 = x + 0.5 * h * k2;
    const RowMat k3 = detail::field_rows(x3, mean_of(x3), params);
    const RowMat x4 = x + h * k3;
    const RowMat k4 = detail::field_rows(x4, mean_of(x4), params);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    detail::clamp_rows(x, ens0.time + t_next);
    if (opts.observer) opts.observer(ens0.time + t_next, x);
    if (k % opts.record_every == 0 || k == plan.steps) {
      out.push_back(detail::from_rows(x, ens0.weights, ens0.time + t_next));
    }
  }
  return out;
}

// Velocity of p_1 in the two-strategy game (b scales time).
inline double two_strategy_rhs(double p1, double p1bar, double c) {
  return std::min(p1 * (1.0 - p1), c) * (p1 + p1bar - 2.0 * p1 * p1bar);
}

// RK4 for the N-particle system dp_1^i/dt = b v[mu](p_1^i) with the mean
// recomputed at every stage. Returns d = 2 ensembles (p_1, 1 - p_1).
inline std::vector<ParticleEnsemble> integrate_two_strategies(const std::vector<double>& p1_init,
                                                              const std::vector<double>& weights,
                                                              double b, double c, double t_end,
                                                              double dt, int record_every = 1) {
  if (p1_init.empty()) throw Error(Errc::kEmpty, "no particles");
  if (p1_init.size() != weights.size()) throw Error(Errc::kDimensionMismatch, "weights");
  if (!(std::abs(b) <= 1.0)) throw Error(Errc::kEntryOutOfRange, "|b| must be <= 1");
  StepFunctionParams{c}.validate();
  if (record_every < 1) throw Error(Errc::kConfigInvalid, "record_every must be >= 1");
  const StepPlan plan = plan_steps(t_end, dt);
  const auto n = static_cast<Eigen::Index>(p1_init.size());
  Vec x = Eigen::Map<const Vec>(p1_init.data(), n);
  const Vec w = Eigen::Map<const Vec>(weights.data(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(x[i] >= 0.0 && x[i] <= 1.0)) throw Error(Errc::kNotInSimplex, "p_1 outside [0, 1]");
  }

  auto rhs = [&](const Vec& y) {
    const double mean = w.dot(y);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = b * two_strategy_rhs(y[i], mean, c);
    return v;
  };
  auto snapshot = [&](double t) {
    ParticleEnsemble ens;
    ens.points.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      Vec p(2);
      p << x[i], 1.0 - x[i];
      ens.points.push_back(SimplexPoint::trusted(std::move(p)));
    }
    ens.weights = weights;
    ens.time = t;
    return ens;
  };

  std::vector<ParticleEnsemble> out;
  out.push_back(snapshot(0.0));
  for (long k = 1; k <= plan.steps; ++k) {
    const double t_next = plan.time_at(k, t_end);
    const double h = t_next - plan.time_at(k - 1, t_end);
    const Vec k1 = rhs(x);
    const Vec k2 = rhs(x + 0.5 * h * k1);
    const Vec k3 = rhs(x + 0.5 * h * k2);
    const Vec k4 = rhs(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (x[i] < -kClampBand || x[i] > 1.0 + kClampBand || !std::isfinite(x[i])) {
        throw Error(Errc::kStateLeftSimplex, "p_1 = " + std::to_string(x[i]));
      }
      x[i] = std::clamp(x[i], 0.0, 1.0);
    }
    if (k % record_every == 0 || k == plan.steps) out.push_back(snapshot(t_next));
  }
  return out;
}

struct DiffusionResult {
  ParticleEnsemble ensemble;
  int rejections = 0;
  int truncations = 0;
};

inline constexpr int kMaxRedraws = 8;

// Symmetric square root of the (PSD) noise covariance.
inline Mat covariance_sqrt(const Mat& q) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(q);
  const Vec root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

// Euler-Maruyama step for the transport equation with diffusion
// (lambda/2) sum Q_ij d_ij (G^2 v), G = h. A move that would exit the
// simplex is redrawn up to 8 times, then its noise is shrunk to half the
// distance to the boundary along the last draw.
inline DiffusionResult diffusion_step(const ParticleEnsemble& ens, const FieldParams& params,
                                      double dt, std::uint64_t seed, std::uint64_t step_index) {
  if (!(params.lambda > 0.0)) {
    throw Error(Errc::kConfigInvalid, "diffusion_step needs lambda > 0");
  }
  params.validate();
  ens.validate();
  if (!(dt > 0.0)) throw Error(Errc::kConfigInvalid, "dt must be > 0");
  const int d = ens.dim();
  const Mat root = covariance_sqrt(params.noise_cov);
  const Vec mean = mean_strategy(ens).coords();
  const double amplitude = std::sqrt(params.lambda * dt);

  DiffusionResult res;
  res.ensemble.weights = ens.weights;
  res.ensemble.time = ens.time + dt;
  res.ensemble.points.reserve(ens.points.size());
  for (int k = 0; k < ens.size(); ++k) {
    const Vec& p = ens.points[k].coords();
    StreamRng rng(seed ^ splitmix64(step_index), static_cast<std::uint64_t>(k));
    const Vec base = p + dt * field_F(p, mean, params);
    if (base.minCoeff() < -kClampBand) {
      throw Error(Errc::kStateLeftSimplex, "drift step leaves the simplex; reduce dt");
    }
    const double g = h_eval(p, params.step);
    Vec noise(d);
    Vec next;
    bool accepted = false;
    for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
      Vec xi(d);
      for (int i = 0; i < d; ++i) xi[i] = rng.normal();
      noise = amplitude * g * (root * xi);
      next = base + noise;
      if (next.minCoeff() >= 0.0) {
        accepted = true;
        break;
      }
      ++res.rejections;
    }
    if (!accepted) {
      double reach = 1.0;
      for (int i = 0; i < d; ++i) {
        if (noise[i] < 0.0) reach = std::min(reach, std::max(base[i], 0.0) / -noise[i]);
      }
      next = base + 0.5 * reach * noise;
      ++res.truncations;
    }
    clamp_to_simplex(next, 1.0);
    if (std::abs(next.sum() - 1.0) > kSimplexSumTol) next /= next.sum();
    res.ensemble.points.push_back(SimplexPoint::trusted(std::move(next)));
  }
  return res;
}

// phi(p) = constant + linear . p + p^T quadratic p
struct QuadraticTestFunction {
  double constant = 0.0;
  Vec linear;
  Mat quadratic;

  static QuadraticTestFunction constant_one(int d) {
    return {1.0, Vec::Zero(d), Mat::Zero(d, d)};
  }
  static QuadraticTestFunction coordinate(int d, int i) {
    Vec l = Vec::Zero(d);
    l[i] = 1.0;
    return {0.0, l, Mat::Zero(d, d)};
  }

  double value(const Vec& p) const { return constant + linear.dot(p) + p.dot(quadratic * p); }
  Vec gradient(const Vec& p) const { return linear + (quadratic + quadratic.transpose()) * p; }
};

// |<phi, v_t> - <phi, v_0> - int_0^t <grad phi . F[v_s], v_s> ds| with the
// time integral taken by the trapezoidal rule over the snapshots.
inline double weak_residual(const std::vector<ParticleEnsemble>& snapshots,
                            const FieldParams& params, const QuadraticTestFunction& phi) {
  if (params.lambda != 0.0) throw Error(Errc::kConfigInvalid, "weak_residual needs lambda = 0");
  if (snapshots.size() < 3) throw Error(Errc::kConfigInvalid, "need at least 3 snapshots");
  auto pairing = [&](const ParticleEnsemble& ens) {
    double acc = 0.0;
    for (int k = 0; k < ens.size(); ++k) acc += ens.weights[k] * phi.value(ens.points[k].coords());
    return acc;
  };
  auto flux = [&](const ParticleEnsemble& ens) {
    const Vec mean = mean_strategy(ens).coords();
    double acc = 0.0;
    for (int k = 0; k < ens.size(); ++k) {
      const Vec& p = ens.points[k].coords();
      acc += ens.weights[k] * phi.gradient(p).dot(field_F(p, mean, params));
    }
    return acc;
  };
  double integral = 0.0;
  double prev = flux(snapshots.front());
  for (std::size_t s = 1; s < snapshots.size(); ++s) {
    const double cur = flux(snapshots[s]);
    integral += 0.5 * (snapshots[s].time - snapshots[s - 1].time) * (prev + cur);
    prev = cur;
  }
  return std::abs(pairing(snapshots.back()) - pairing(snapshots.front()) - integral);
}

inline constexpr int kDefaultProjections = 64;
inline constexpr std::uint64_t kDefaultProjectionSeed = 20240611;

// Ratio of final to initial (sliced) W1 distance between two solutions.
inline double stability_factor(const ParticleEnsemble& a0, const ParticleEnsemble& b0,
                               const FieldParams& params, double t_end, double dt,
                               int n_proj = kDefaultProjections,
                               std::uint64_t seed = kDefaultProjectionSeed) {
  if (a0.size() != b0.size()) throw Error(Errc::kDimensionMismatch, "ensemble sizes differ");
  const double initial = sliced_w1(a0, b0, n_proj, seed);
  if (!(initial > 1e-15)) {
    throw Error(Errc::kDegenerateInitialDistance, "initial distance is zero");
  }
  TransportOptions opts;
  opts.record_every = std::numeric_limits<int>::max();
  const auto a = integrate_transport(a0, params, t_end, dt, opts);
  const auto b = integrate_transport(b0, params, t_end, dt, opts);
  return sliced_w1(a.back(), b.back(), n_proj, seed) / initial;
}

// Smallest prod_i p_i over the support; the ensemble sits on the plateau
// {h = c} exactly when this is >= c.
inline double min_support_product(const ParticleEnsemble& ens) {
  double lo = INFINITY;
  for (int k = 0; k < ens.size(); ++k) {
    if (ens.weights[k] > 0.0) lo = std::min(lo, ens.points[k].coords().prod());
  }
  return lo;
}

}  // namespace evogame
