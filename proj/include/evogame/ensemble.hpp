#pragma once

#include <cmath>
#include <vector>

#include "evogame/error.hpp"
#include "evogame/micro.hpp"
#include "evogame/simplex.hpp"

namespace evogame {

// Weighted particle approximation of a strategy distribution.
struct ParticleEnsemble {
  std::vector<SimplexPoint> points;
  std::vector<double> weights;
  double time = 0.0;

  int size() const { return static_cast<int>(points.size()); }
  int dim() const { return points.empty() ? 0 : points.front().dim(); }

  void validate() const {
    if (points.empty()) throw Error(Errc::kEmpty, "ensemble has no particles");
    if (points.size() != weights.size()) {
      throw Error(Errc::kDimensionMismatch, "points and weights differ in length");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (points[k].dim() != dim()) throw Error(Errc::kDimensionMismatch, "mixed dimensions");
      if (!(weights[k] >= 0.0)) throw Error(Errc::kConfigInvalid, "negative weight");
      total += weights[k];
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw Error(Errc::kConfigInvalid, "weights must sum to 1");
    }
  }

  static ParticleEnsemble uniform(std::vector<SimplexPoint> points, double time = 0.0) {
    ParticleEnsemble ens;
    const double w = points.empty() ? 0.0 : 1.0 / static_cast<double>(points.size());
    ens.weights.assign(points.size(), w);
    ens.points = std::move(points);
    ens.time = time;
    return ens;
  }

  static ParticleEnsemble from_population(const AgentPopulation& pop) {
    return uniform(pop.strategies, pop.time);
  }

  static ParticleEnsemble dirac(const SimplexPoint& at) { return uniform({at}); }
};

}  // namespace evogame
