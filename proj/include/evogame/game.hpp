#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "evogame/error.hpp"
#include "evogame/simplex.hpp"

namespace evogame {

inline constexpr double kAntisymmetryTol = 1e-12;

enum class Symmetry {
  kStrict,             // require A^T = -A
  kAllowNonSymmetric,  // bounded entries only; rejected by the dynamics
};

// Payoff matrix of the row player in a two-player game with d pure
// strategies. Entries lie in [-1, 1].
class PayoffMatrix {
 public:
  static PayoffMatrix validate(const Mat& raw, Symmetry symmetry = Symmetry::kStrict) {
    if (raw.rows() != raw.cols()) {
      throw Error(Errc::kBadDimension, "payoff matrix must be square");
    }
    if (raw.rows() < 2) {
      throw Error(Errc::kBadDimension, "need at least two pure strategies");
    }
    if (!raw.allFinite() || raw.cwiseAbs().maxCoeff() > 1.0) {
      throw Error(Errc::kEntryOutOfRange, "payoff entries must lie in [-1, 1]");
    }
    const double skew = (raw + raw.transpose()).cwiseAbs().maxCoeff();
    const bool antisymmetric = skew <= kAntisymmetryTol;
    if (!antisymmetric && symmetry == Symmetry::kStrict) {
      throw Error(Errc::kNotAntisymmetric,
                  "max |A + A^T| = " + std::to_string(skew));
    }
    PayoffMatrix m;
    m.entries_ = raw;
    m.antisymmetric_ = antisymmetric;
    return m;
  }

  int dim() const { return static_cast<int>(entries_.rows()); }
  const Mat& entries() const { return entries_; }
  double operator()(int row, int col) const { return entries_(row, col); }
  bool antisymmetric() const { return antisymmetric_; }

  void require_antisymmetric() const {
    if (!antisymmetric_) {
      throw Error(Errc::kNotAntisymmetric, "dynamics require a zero-sum symmetric game");
    }
  }

 private:
  PayoffMatrix() = default;
  Mat entries_;
  bool antisymmetric_ = false;
};

inline PayoffMatrix validate_payoff(const std::vector<std::vector<double>>& rows,
                                    Symmetry symmetry = Symmetry::kStrict) {
  const auto d = static_cast<Eigen::Index>(rows.size());
  Mat raw(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != d) {
      throw Error(Errc::kBadDimension, "payoff matrix must be square");
    }
    for (Eigen::Index j = 0; j < d; ++j) raw(i, j) = rows[i][j];
  }
  return PayoffMatrix::validate(raw, symmetry);
}

// Rock-Paper-Scissors with rows (0,-a,b), (b,0,-a), (-a,b,0).
inline PayoffMatrix rps_matrix(double a, double b, Symmetry symmetry = Symmetry::kStrict) {
  if (!(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0)) {
    throw Error(Errc::kEntryOutOfRange, "rps parameters must lie in (0, 1]");
  }
  Mat m(3, 3);
  m << 0, -a, b,
       b, 0, -a,
       -a, b, 0;
  return PayoffMatrix::validate(m, symmetry);
}

// Circulant game on an odd number of strategies: first row
// (0, a_1, ..., a_{d-1}) with a_k = (-1)^(k-1), each following row the
// cyclic right shift of the previous one.
inline PayoffMatrix cyclic_matrix(int d) {
  if (d < 3) throw Error(Errc::kBadDimension, "cyclic game needs d >= 3");
  if (d % 2 == 0) throw Error(Errc::kEvenDimension, "cyclic game needs odd d");
  Mat m(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const int k = ((j - i) % d + d) % d;
      m(i, j) = k == 0 ? 0.0 : (k % 2 == 1 ? 1.0 : -1.0);
    }
  }
  return PayoffMatrix::validate(m);
}

inline PayoffMatrix two_strategy_matrix(double b) {
  Mat m(2, 2);
  m << 0, b,
       -b, 0;
  return PayoffMatrix::validate(m);
}

struct StepFunctionParams {
  double c = 0.1;

  void validate() const {
    if (!(c > 0.0 && c < 1.0)) {
      throw Error(Errc::kConfigInvalid, "step cap c must lie in (0, 1)");
    }
  }
};

// h(p) = min(prod p_i, c); vanishes on the boundary of the simplex.
inline double h_eval(const Vec& p, const StepFunctionParams& params) {
  double prod = 1.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) prod *= p[i];
  return std::min(prod, params.c);
}

inline double h_eval(const SimplexPoint& p, const StepFunctionParams& params) {
  return h_eval(p.coords(), params);
}

// Pure strategy played under the mixed strategy p for a uniform draw
// zeta in [0,1): the unique (0-based) i with sum_{j<i} p_j <= zeta <
// sum_{j<=i} p_j. The last index absorbs any rounding residue.
inline int sample_pure(const Vec& p, double zeta) {
  const auto d = static_cast<int>(p.size());
  long double upper = 0.0L;
  for (int i = 0; i < d - 1; ++i) {
    upper += static_cast<long double>(p[i]);
    if (static_cast<long double>(zeta) < upper) return i;
  }
  return d - 1;
}

inline int sample_pure(const SimplexPoint& p, double zeta) {
  return sample_pure(p.coords(), zeta);
}

inline double payoff(const SimplexPoint& p, const SimplexPoint& q, const PayoffMatrix& a) {
  if (p.dim() != a.dim() || q.dim() != a.dim()) {
    throw Error(Errc::kDimensionMismatch, "payoff: strategy and matrix dimensions differ");
  }
  return p.coords().dot(a.entries() * q.coords());
}

struct NashSearch {
  std::optional<SimplexPoint> equilibrium;
  // Dimension of the numerical null space of A; values above one mean the
  // interior equilibrium is not unique and the returned point is only one
  // of a family.
  int null_dimension = 0;
};

inline NashSearch interior_nash(const PayoffMatrix& a, double tol = 1e-10) {
  Eigen::JacobiSVD<Mat> svd(a.entries(), Eigen::ComputeFullV);
  const Vec& sigma = svd.singularValues();
  const double scale = sigma.size() ? sigma[0] : 0.0;
  const double cutoff = tol * scale;

  NashSearch result;
  std::vector<Eigen::Index> null_cols;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    if (sigma[k] < cutoff || scale == 0.0) null_cols.push_back(k);
  }
  result.null_dimension = static_cast<int>(null_cols.size());

  if (null_cols.empty()) return result;

  // Points of the null space with unit sum: V y with s.y = 1, s = V^T 1.
  const auto d = a.dim();
  Mat basis(d, static_cast<Eigen::Index>(null_cols.size()));
  for (std::size_t k = 0; k < null_cols.size(); ++k) {
    basis.col(static_cast<Eigen::Index>(k)) = svd.matrixV().col(null_cols[k]);
  }
  const Vec s = basis.transpose() * Vec::Ones(d);
  if (s.norm() <= tol) return result;
  auto onto_slice = [&](const Vec& x) {
    Vec y = basis.transpose() * x;
    y += (1.0 - s.dot(y)) / s.squaredNorm() * s;
    return Vec(basis * y);
  };

  // Alternating projections between the slice and {v_i >= floor}; they
  // meet whenever the slice has a point with every coordinate above floor.
  const double floor = std::max(tol, 1e-9);
  Vec v = onto_slice(Vec::Constant(d, 1.0 / d));
  for (int iter = 0; iter < 20000 && !(v.minCoeff() > tol); ++iter) {
    v = onto_slice(v.cwiseMax(2.0 * floor));
  }
  if (v.minCoeff() > tol) result.equilibrium = SimplexPoint::trusted(v / v.sum());
  return result;
}

// Nash test by best response: q is an equilibrium when no pure deviation
// e_i earns more than q itself against q. For interior q and
// antisymmetric A this is equivalent to Aq = 0.
inline bool is_nash(const SimplexPoint& q, const PayoffMatrix& a, double tol = 1e-10) {
  if (q.dim() != a.dim()) {
    throw Error(Errc::kDimensionMismatch, "is_nash: dimensions differ");
  }
  if (!q.is_interior(tol)) {
    throw Error(Errc::kNotInterior, format_vec(q.coords()));
  }
  const Vec aq = a.entries() * q.coords();
  const double value = q.coords().dot(aq);
  return (aq.array() - value).maxCoeff() <= tol;
}

}  // namespace evogame
