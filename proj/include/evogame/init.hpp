#pragma once

// Initial strategy distributions described by small JSON objects, e.g.
//   {"kind": "atom_plus_interval", "atom": 0, "atom_mass": 0.3,
//    "lo": 0, "hi": 0.3, "count": 1000}
//   {"kind": "ball", "center": [0.363, 0.318, 0.318], "radius": 0.05, "count": 200}

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "evogame/ensemble.hpp"
#include "evogame/error.hpp"
#include "evogame/io.hpp"
#include "evogame/micro.hpp"
#include "evogame/rng.hpp"
#include "evogame/simplex.hpp"

namespace evogame {

inline constexpr std::uint64_t kInitStream = 0x1417ull;

enum class InitLayout {
  // Atoms become one particle carrying their whole mass.
  kWeighted,
  // Every particle has mass 1/count; atoms are repeated.
  kAgents,
};

namespace detail {

inline double get_number(const nlohmann::json& spec, const char* key) {
  if (!spec.contains(key) || !spec[key].is_number()) {
    throw Error(Errc::kConfigInvalid, std::string("init: missing number '") + key + "'");
  }
  return spec[key].get<double>();
}

inline int get_count(const nlohmann::json& spec, int fallback = -1) {
  if (!spec.contains("count")) {
    if (fallback > 0) return fallback;
    throw Error(Errc::kConfigInvalid, "init: missing 'count'");
  }
  if (!spec["count"].is_number_integer() || spec["count"].get<long>() < 1) {
    throw Error(Errc::kConfigInvalid, "init: 'count' must be a positive integer");
  }
  return spec["count"].get<int>();
}

inline Vec get_point(const nlohmann::json& spec, const char* key, int d) {
  if (!spec.contains(key) || !spec[key].is_array()) {
    throw Error(Errc::kConfigInvalid, std::string("init: missing array '") + key + "'");
  }
  const auto values = spec[key].get<std::vector<double>>();
  if (static_cast<int>(values.size()) != d) {
    throw Error(Errc::kDimensionMismatch, std::string("init: '") + key + "' has wrong length");
  }
  return Eigen::Map<const Vec>(values.data(), d);
}

inline SimplexPoint pair_point(double x) { return SimplexPoint{x, 1.0 - x}; }

inline void require_interval(double lo, double hi) {
  if (!(0.0 <= lo && lo <= hi && hi <= 1.0)) {
    throw Error(Errc::kConfigInvalid, "init: need 0 <= lo <= hi <= 1");
  }
}

// Uniform in the (d-1)-ball of the simplex hyperplane.
inline Vec ball_offset(StreamRng& rng, int d, double radius) {
  Vec g(d);
  double norm = 0.0;
  do {
    for (int i = 0; i < d; ++i) g[i] = rng.normal();
    g.array() -= g.mean();
    norm = g.norm();
  } while (norm < 1e-12);
  const double rho = radius * std::pow(rng.uniform01(), 1.0 / (d - 1));
  return rho * g / norm;
}

}  // namespace detail

inline std::vector<std::string> init_kinds() {
  return {"dirac", "uniform_simplex", "interval", "atom_plus_interval", "ball", "csv"};
}

inline ParticleEnsemble make_ensemble(const nlohmann::json& spec, int d, std::uint64_t seed,
                                      InitLayout layout = InitLayout::kWeighted) {
  if (!spec.is_object() || !spec.contains("kind") || !spec["kind"].is_string()) {
    throw Error(Errc::kConfigInvalid, "init: expected an object with a 'kind'");
  }
  const auto kind = spec["kind"].get<std::string>();
  StreamRng rng(seed, kInitStream);

  if (kind == "dirac") {
    const SimplexPoint at(detail::get_point(spec, "at", d));
    return ParticleEnsemble::uniform(
        std::vector<SimplexPoint>(static_cast<std::size_t>(detail::get_count(spec, 1)), at));
  }
  if (kind == "uniform_simplex") {
    std::vector<SimplexPoint> pts;
    const int n = detail::get_count(spec);
    for (int k = 0; k < n; ++k) pts.push_back(SimplexPoint::trusted(draw_uniform_simplex(rng, d)));
    return ParticleEnsemble::uniform(std::move(pts));
  }
  if (kind == "interval" || kind == "atom_plus_interval") {
    if (d != 2) throw Error(Errc::kDimensionMismatch, "init: '" + kind + "' needs d = 2");
    const double lo = detail::get_number(spec, "lo");
    const double hi = detail::get_number(spec, "hi");
    detail::require_interval(lo, hi);
    const int n = detail::get_count(spec);
    int atoms = 0;
    double atom = 0.0;
    if (kind == "atom_plus_interval") {
      atom = detail::get_number(spec, "atom");
      const double mass = detail::get_number(spec, "atom_mass");
      detail::require_interval(atom, atom);
      if (!(mass >= 0.0 && mass <= 1.0)) {
        throw Error(Errc::kConfigInvalid, "init: atom_mass must lie in [0, 1]");
      }
      atoms = static_cast<int>(std::lround(mass * n));
    }
    ParticleEnsemble ens;
    const double unit = 1.0 / n;
    if (atoms > 0) {
      if (layout == InitLayout::kWeighted) {
        ens.points.push_back(detail::pair_point(atom));
        ens.weights.push_back(atoms * unit);
      } else {
        ens.points.assign(static_cast<std::size_t>(atoms), detail::pair_point(atom));
        ens.weights.assign(static_cast<std::size_t>(atoms), unit);
      }
    }
    for (int k = atoms; k < n; ++k) {
      ens.points.push_back(detail::pair_point(lo + (hi - lo) * rng.uniform01()));
      ens.weights.push_back(unit);
    }
    double total = 0.0;
    for (double w : ens.weights) total += w;
    for (double& w : ens.weights) w /= total;
    return ens;
  }
  if (kind == "ball") {
    const Vec center = detail::get_point(spec, "center", d);
    if (!in_simplex(center)) throw Error(Errc::kNotInSimplex, "init: ball center");
    const double radius = detail::get_number(spec, "radius");
    if (!(radius >= 0.0)) throw Error(Errc::kConfigInvalid, "init: radius must be >= 0");
    const int n = detail::get_count(spec);
    const bool antithetic = spec.value("antithetic", true);
    if (antithetic && n % 2 != 0) {
      throw Error(Errc::kConfigInvalid, "init: an antithetic ball needs an even count");
    }
    std::vector<SimplexPoint> pts;
    for (int k = 0; k < (antithetic ? n / 2 : n); ++k) {
      const Vec off = detail::ball_offset(rng, d, radius);
      pts.emplace_back(Vec(center + off));
      if (antithetic) pts.emplace_back(Vec(center - off));
    }
    return ParticleEnsemble::uniform(std::move(pts));
  }
  if (kind == "csv") {
    if (!spec.contains("path") || !spec["path"].is_string()) {
      throw Error(Errc::kConfigInvalid, "init: csv needs a 'path'");
    }
    auto ens = io::read_ensemble(spec["path"].get<std::string>());
    if (ens.dim() != d) throw Error(Errc::kDimensionMismatch, "init: csv dimension");
    return ens;
  }
  throw Error(Errc::kConfigInvalid, "init: unknown kind '" + kind + "'");
}

// Agent population; the ensemble must have equal weights.
inline AgentPopulation make_population(const nlohmann::json& spec, int d, std::uint64_t seed) {
  const auto ens = make_ensemble(spec, d, seed, InitLayout::kAgents);
  for (double w : ens.weights) {
    if (std::abs(w - ens.weights.front()) > 1e-15) {
      throw Error(Errc::kConfigInvalid, "init: agents need equal weights");
    }
  }
  AgentPopulation pop;
  pop.strategies = ens.points;
  return pop;
}

}  // namespace evogame
