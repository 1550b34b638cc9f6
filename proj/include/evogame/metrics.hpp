#pragma once

// Distances and summary statistics over strategy distributions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "evogame/ensemble.hpp"
#include "evogame/error.hpp"
#include "evogame/micro.hpp"
#include "evogame/rng.hpp"
#include "evogame/simplex.hpp"

namespace evogame {

struct WeightedAtom {
  double value = 0.0;
  double weight = 0.0;
};
using WeightedSamples = std::vector<WeightedAtom>;

inline SimplexPoint mean_strategy(const ParticleEnsemble& ens) {
  if (ens.points.empty()) throw Error(Errc::kEmpty, "mean of an empty ensemble");
  Vec acc = Vec::Zero(ens.dim());
  double total = 0.0;
  for (std::size_t k = 0; k < ens.points.size(); ++k) {
    acc += ens.weights[k] * ens.points[k].coords();
    total += ens.weights[k];
  }
  acc /= total;
  return SimplexPoint::trusted(acc / acc.sum());
}

inline SimplexPoint mean_strategy(const AgentPopulation& pop) {
  if (pop.strategies.empty()) throw Error(Errc::kEmpty, "mean of an empty population");
  Vec acc = Vec::Zero(pop.dim());
  for (const auto& p : pop.strategies) acc += p.coords();
  acc /= acc.sum();
  return SimplexPoint::trusted(std::move(acc));
}

// Exact one-dimensional W1 as the integral of |F_a - F_b|.
inline double w1_1d(WeightedSamples a, WeightedSamples b) {
  if (a.empty() || b.empty()) throw Error(Errc::kEmpty, "w1_1d on an empty sample set");
  auto by_value = [](const WeightedAtom& x, const WeightedAtom& y) { return x.value < y.value; };
  std::sort(a.begin(), a.end(), by_value);
  std::sort(b.begin(), b.end(), by_value);

  std::size_t i = 0;
  std::size_t j = 0;
  double cdf_a = 0.0;
  double cdf_b = 0.0;
  double x = std::min(a.front().value, b.front().value);
  double dist = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next_a = i < a.size() ? a[i].value : INFINITY;
    const double next_b = j < b.size() ? b[j].value : INFINITY;
    const double next = std::min(next_a, next_b);
    dist += std::abs(cdf_a - cdf_b) * (next - x);
    x = next;
    while (i < a.size() && a[i].value == next) cdf_a += a[i++].weight;
    while (j < b.size() && b[j].value == next) cdf_b += b[j++].weight;
  }
  return dist;
}

inline WeightedSamples project(const ParticleEnsemble& ens, const Vec& direction) {
  WeightedSamples out(ens.points.size());
  for (std::size_t k = 0; k < ens.points.size(); ++k) {
    out[k] = {ens.points[k].coords().dot(direction), ens.weights[k]};
  }
  return out;
}

// Unit directions in the simplex hyperplane {sum x_i = 0}.
inline std::vector<Vec> hyperplane_directions(int dim, int count, std::uint64_t seed) {
  StreamRng rng(seed, 0x51CEDull);
  std::vector<Vec> dirs;
  dirs.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(dirs.size()) < count) {
    Vec g(dim);
    for (int i = 0; i < dim; ++i) g[i] = rng.normal();
    g.array() -= g.mean();
    const double norm = g.norm();
    if (norm < 1e-12) continue;
    dirs.push_back(g / norm);
  }
  return dirs;
}

// Average 1-D W1 over random projections onto the simplex hyperplane.
inline double sliced_w1(const ParticleEnsemble& a, const ParticleEnsemble& b, int n_proj,
                        std::uint64_t seed) {
  if (a.dim() != b.dim()) throw Error(Errc::kDimensionMismatch, "sliced_w1");
  if (n_proj < 1) throw Error(Errc::kConfigInvalid, "sliced_w1 needs n_proj >= 1");
  double acc = 0.0;
  for (const Vec& u : hyperplane_directions(a.dim(), n_proj, seed)) {
    acc += w1_1d(project(a, u), project(b, u));
  }
  return acc / n_proj;
}

struct Histogram {
  int axis = 0;
  std::vector<double> edges;
  std::vector<double> masses;
};

// Uniform bins on [0, 1]; right-open except the last, atoms on an edge
// go to the bin on their right.
inline Histogram marginal_histogram(const ParticleEnsemble& ens, int axis, int n_bins) {
  if (n_bins < 1) throw Error(Errc::kConfigInvalid, "n_bins must be >= 1");
  if (axis < 0 || axis >= ens.dim()) throw Error(Errc::kDimensionMismatch, "histogram axis");
  Histogram hist;
  hist.axis = axis;
  hist.edges.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int k = 0; k <= n_bins; ++k) hist.edges[k] = static_cast<double>(k) / n_bins;
  hist.masses.assign(static_cast<std::size_t>(n_bins), 0.0);
  for (std::size_t k = 0; k < ens.points.size(); ++k) {
    const double x = ens.points[k][axis];
    auto bin = static_cast<int>(std::floor(x * n_bins));
    // Guard the floor against representation error right at an edge.
    if (bin + 1 <= n_bins && x >= hist.edges[bin + 1]) ++bin;
    if (bin > 0 && x < hist.edges[bin]) --bin;
    bin = std::clamp(bin, 0, n_bins - 1);
    hist.masses[bin] += ens.weights[k];
  }
  return hist;
}

inline Histogram marginal_histogram(const AgentPopulation& pop, int axis, int n_bins) {
  return marginal_histogram(ParticleEnsemble::from_population(pop), axis, n_bins);
}

// Covariance of the flat Dirichlet law on the simplex.
inline Mat uniform_simplex_covariance(int d) {
  if (d < 2) throw Error(Errc::kBadDimension, "covariance needs d >= 2");
  const double denom = static_cast<double>(d) * d * (d + 1);
  Mat q = Mat::Constant(d, d, -1.0 / denom);
  q.diagonal().setConstant((d - 1.0) / denom);
  return q;
}

// Mass of the marginal along `axis` within `eps` of `target`.
inline double mass_near(const ParticleEnsemble& ens, int axis, double target, double eps) {
  double mass = 0.0;
  for (std::size_t k = 0; k < ens.points.size(); ++k) {
    if (std::abs(ens.points[k][axis] - target) <= eps) mass += ens.weights[k];
  }
  return mass;
}

}  // namespace evogame
