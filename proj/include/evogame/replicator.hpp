#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <optional>
#include <vector>

#include "evogame/error.hpp"
#include "evogame/game.hpp"
#include "evogame/simplex.hpp"

namespace evogame {

// Clamping band: coordinates in [-band, 0) after a step are float dust,
// anything below is a step-size failure.
inline constexpr double kClampBand = 1e-12;

struct ReplicatorTrajectory {
  std::vector<double> times;
  std::vector<SimplexPoint> states;
  // 1 for the plain replicator system, 2c for the mean strategy of a
  // transport solution on the plateau {h = c}.
  double rate_scale = 1.0;

  std::size_t size() const { return times.size(); }
};

inline Vec replicator_rhs(const Vec& p, const Mat& a, double rate_scale) {
  const Vec ap = a * p;
  const double value = p.dot(ap);
  return rate_scale * (p.array() * (ap.array() - value)).matrix();
}

inline Vec replicator_rhs(const SimplexPoint& p, const PayoffMatrix& a, double rate_scale = 1.0) {
  if (p.dim() != a.dim()) throw Error(Errc::kDimensionMismatch, "replicator_rhs");
  assert(!a.antisymmetric() || std::abs(p.coords().dot(a.entries() * p.coords())) <= 1e-12);
  return replicator_rhs(p.coords(), a.entries(), rate_scale);
}

// Number of steps and final (possibly shortened) step covering [0, t_end].
struct StepPlan {
  long steps = 0;
  double dt = 0.0;

  double time_at(long k, double t_end) const {
    return k == steps ? t_end : static_cast<double>(k) * dt;
  }
};

inline StepPlan plan_steps(double t_end, double dt) {
  if (!(dt > 0.0)) throw Error(Errc::kConfigInvalid, "dt must be > 0");
  if (!(t_end >= 0.0)) throw Error(Errc::kConfigInvalid, "t_end must be >= 0");
  const double ratio = t_end / dt;
  const long n = static_cast<long>(std::ceil(ratio - 1e-9));
  return {std::max(n, 0L), dt};
}

inline ReplicatorTrajectory integrate_rk4(const SimplexPoint& p0, const PayoffMatrix& a,
                                          double t_end, double dt, double rate_scale = 1.0) {
  a.require_antisymmetric();
  if (p0.dim() != a.dim()) throw Error(Errc::kDimensionMismatch, "integrate_rk4");
  if (!(rate_scale > 0.0)) throw Error(Errc::kConfigInvalid, "rate_scale must be > 0");
  const StepPlan plan = plan_steps(t_end, dt);
  const Mat& m = a.entries();

  ReplicatorTrajectory traj;
  traj.rate_scale = rate_scale;
  traj.times.reserve(static_cast<std::size_t>(plan.steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(plan.steps) + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(p0);

  Vec p = p0.coords();
  for (long k = 1; k <= plan.steps; ++k) {
    const double t_prev = plan.time_at(k - 1, t_end);
    const double t_next = plan.time_at(k, t_end);
    const double h = t_next - t_prev;
    const Vec k1 = replicator_rhs(p, m, rate_scale);
    const Vec k2 = replicator_rhs(p + 0.5 * h * k1, m, rate_scale);
    const Vec k3 = replicator_rhs(p + 0.5 * h * k2, m, rate_scale);
    const Vec k4 = replicator_rhs(p + h * k3, m, rate_scale);
    p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!clamp_to_simplex(p, kClampBand)) {
      throw Error(Errc::kStateLeftSimplex,
                  "t=" + std::to_string(t_next) + " state " + format_vec(p));
    }
    traj.times.push_back(t_next);
    traj.states.push_back(SimplexPoint::trusted(p));
  }
  return traj;
}

inline double rest_point_residual(const SimplexPoint& p, const PayoffMatrix& a) {
  return replicator_rhs(p, a, 1.0).cwiseAbs().maxCoeff();
}

struct TemporalMean {
  SimplexPoint mean;
  // |sum - 1| of the raw time average before renormalization.
  double residue = 0.0;
};

namespace detail {

inline Vec interpolate(const ReplicatorTrajectory& traj, std::size_t k, double t) {
  const double t0 = traj.times[k];
  const double t1 = traj.times[k + 1];
  const double w = (t - t0) / (t1 - t0);
  return (1.0 - w) * traj.states[k].coords() + w * traj.states[k + 1].coords();
}

}  // namespace detail

// Trapezoidal time average of the piecewise-linear trajectory on [t0, t1].
inline TemporalMean temporal_mean(const ReplicatorTrajectory& traj, double t0, double t1) {
  if (traj.size() < 2) throw Error(Errc::kRangeOutOfSpan, "trajectory too short");
  const double slack = 1e-12 * std::max(1.0, std::abs(traj.times.back()));
  if (!(t1 > t0) || t0 < traj.times.front() - slack || t1 > traj.times.back() + slack) {
    throw Error(Errc::kRangeOutOfSpan, "[" + std::to_string(t0) + ", " + std::to_string(t1) +
                                           "] outside trajectory span");
  }
  t0 = std::max(t0, traj.times.front());
  t1 = std::min(t1, traj.times.back());
  Vec acc = Vec::Zero(traj.states.front().dim());
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    const double lo = std::max(t0, traj.times[k]);
    const double hi = std::min(t1, traj.times[k + 1]);
    if (hi <= lo) continue;
    acc += 0.5 * (hi - lo) * (detail::interpolate(traj, k, lo) + detail::interpolate(traj, k, hi));
  }
  acc /= (t1 - t0);
  const double residue = std::abs(acc.sum() - 1.0);
  for (Eigen::Index i = 0; i < acc.size(); ++i) acc[i] = std::max(acc[i], 0.0);
  return {SimplexPoint::trusted(acc / acc.sum()), residue};
}

// Period from successive upward crossings of {p_1 = time-mean of p_1},
// located by linear interpolation between samples. Empty when fewer than
// three crossings exist or the crossing intervals spread by more than 5%.
inline std::optional<double> estimate_period(const ReplicatorTrajectory& traj) {
  if (traj.size() < 3) return std::nullopt;
  const double span = traj.times.back() - traj.times.front();
  if (!(span > 0.0)) return std::nullopt;
  double level = 0.0;
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    level += 0.5 * (traj.times[k + 1] - traj.times[k]) * (traj.states[k][0] + traj.states[k + 1][0]);
  }
  level /= span;

  std::vector<double> crossings;
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    const double x0 = traj.states[k][0];
    const double x1 = traj.states[k + 1][0];
    if (x0 < level && x1 >= level) {
      const double w = (level - x0) / (x1 - x0);
      crossings.push_back(traj.times[k] + w * (traj.times[k + 1] - traj.times[k]));
    }
  }
  if (crossings.size() < 3) return std::nullopt;
  double lo = crossings[1] - crossings[0];
  double hi = lo;
  for (std::size_t k = 1; k + 1 < crossings.size(); ++k) {
    const double gap = crossings[k + 1] - crossings[k];
    lo = std::min(lo, gap);
    hi = std::max(hi, gap);
  }
  const double period =
      (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
  if (!(period > 0.0) || (hi - lo) / period > 0.05) return std::nullopt;
  return period;
}

}  // namespace evogame
