#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <initializer_list>
#include <sstream>
#include <string>

#include "evogame/error.hpp"

namespace evogame {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kSimplexSumTol = 1e-12;

inline bool in_simplex(const Vec& p, double sum_tol = kSimplexSumTol) {
  if (p.size() < 1) return false;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !std::isfinite(p[i])) return false;
  }
  return std::abs(p.sum() - 1.0) <= sum_tol;
}

inline std::string format_vec(const Vec& v) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ')';
  return os.str();
}

// A mixed strategy: nonnegative coordinates summing to one.
class SimplexPoint {
 public:
  explicit SimplexPoint(Vec coords) : coords_(std::move(coords)) {
    if (!in_simplex(coords_)) {
      throw Error(Errc::kNotInSimplex, format_vec(coords_));
    }
  }
  SimplexPoint(std::initializer_list<double> coords)
      : SimplexPoint(Vec(Eigen::Map<const Vec>(coords.begin(),
                                               static_cast<Eigen::Index>(coords.size())))) {}

  // Skips validation; for values already known to lie in the simplex.
  static SimplexPoint trusted(Vec coords) {
    SimplexPoint p;
    p.coords_ = std::move(coords);
    return p;
  }

  static SimplexPoint vertex(int dim, int index) {
    Vec v = Vec::Zero(dim);
    v[index] = 1.0;
    return trusted(std::move(v));
  }

  static SimplexPoint barycenter(int dim) {
    return trusted(Vec::Constant(dim, 1.0 / dim));
  }

  int dim() const { return static_cast<int>(coords_.size()); }
  const Vec& coords() const { return coords_; }
  double operator[](int i) const { return coords_[i]; }

  bool is_interior(double tol) const { return coords_.minCoeff() > tol; }

  friend bool operator==(const SimplexPoint& a, const SimplexPoint& b) {
    return a.coords_.size() == b.coords_.size() && a.coords_ == b.coords_;
  }

 private:
  SimplexPoint() = default;
  Vec coords_;
};

// Clamps float dust in [-band, 0) to zero and rescales onto the simplex.
// Returns false when some coordinate is below -band (a genuine exit).
inline bool clamp_to_simplex(Eigen::Ref<Vec> p, double band, bool* touched = nullptr) {
  bool changed = false;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] < -band || !std::isfinite(p[i])) return false;
    if (p[i] < 0.0) {
      p[i] = 0.0;
      changed = true;
    }
  }
  if (changed) p /= p.sum();
  if (touched) *touched = changed;
  return true;
}

}  // namespace evogame
