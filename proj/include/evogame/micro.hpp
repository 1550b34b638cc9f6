#pragma once

// Finite-N agent-based realization of the pairwise interaction process.

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "evogame/error.hpp"
#include "evogame/game.hpp"
#include "evogame/rng.hpp"
#include "evogame/simplex.hpp"

namespace evogame {

// Flat Dirichlet on the simplex: normalized unit exponentials.
template <class Rng>
Vec draw_uniform_simplex(Rng& rng, int dim) {
  Vec q(dim);
  for (int i = 0; i < dim; ++i) q[i] = rng.exponential();
  q /= q.sum();
  return q;
}

enum class NoiseScaleKind { kUseH, kCustom };
enum class EventClock { kExponential, kFixed };

// The noise amplitude G(p). Must satisfy G(p) <= min_i p_i.
struct NoiseScale {
  NoiseScaleKind kind = NoiseScaleKind::kUseH;
  std::function<double(const Vec&)> custom;
};

struct MicroConfig {
  double delta = 0.01;
  double r = 0.0;
  StepFunctionParams step{};
  NoiseScale noise_scale{};
  std::uint64_t seed = 0;
  int n_agents = 2;
  EventClock clock = EventClock::kExponential;

  void validate() const {
    if (!(delta >= 0.0 && delta < 1.0)) {
      throw Error(Errc::kConfigInvalid, "delta must lie in [0, 1)");
    }
    if (!(r >= 0.0)) throw Error(Errc::kConfigInvalid, "r must be nonnegative");
    if (!(delta + r < 1.0)) throw Error(Errc::kConfigInvalid, "delta + r must be < 1");
    if (n_agents < 2) throw Error(Errc::kConfigInvalid, "need at least two agents");
    if (noise_scale.kind == NoiseScaleKind::kCustom && !noise_scale.custom) {
      throw Error(Errc::kConfigInvalid, "custom noise scale without a function");
    }
    step.validate();
  }

  double noise_amplitude(const Vec& p) const {
    if (noise_scale.kind == NoiseScaleKind::kUseH) return h_eval(p, step);
    const double g = noise_scale.custom(p);
    if (!(g >= 0.0 && g <= p.minCoeff() + 1e-15)) {
      throw Error(Errc::kConfigInvalid, "noise scale G(p) must lie in [0, min_i p_i]");
    }
    return g;
  }
};

struct AgentPopulation {
  std::vector<SimplexPoint> strategies;
  double time = 0.0;
  std::uint64_t events = 0;
  std::uint64_t renormalizations = 0;

  int size() const { return static_cast<int>(strategies.size()); }
  int dim() const { return strategies.empty() ? 0 : strategies.front().dim(); }
};

struct InteractionEvent {
  int i = 0;
  int j = 1;
  double zeta = 0.0;
  double zeta_tilde = 0.0;
  int l = 0;
  int m = 0;
  Vec q;
  Vec q_tilde;
  double dt = 0.0;
};

struct InteractionOutcome {
  SimplexPoint first;
  SimplexPoint second;
  int renormalizations = 0;
  // Largest |sum - 1| seen before any correction.
  double max_sum_drift = 0.0;
};

namespace detail {

inline Vec finish_update(Vec next, int& renormalizations, double& max_drift) {
  const double drift = std::abs(next.sum() - 1.0);
  max_drift = std::max(max_drift, drift);
  bool clamped = false;
  if (!clamp_to_simplex(next, 1e-12, &clamped)) {
    throw Error(Errc::kStateLeftSimplex, "interaction produced " + format_vec(next));
  }
  if (clamped) {
    ++renormalizations;
  } else if (drift > kSimplexSumTol) {
    next /= next.sum();
    ++renormalizations;
  }
  return next;
}

}  // namespace detail

// One interaction: both agents shift by delta*h(.)*a_lm*(e_l - e_m) plus
// independent uniform-simplex noise r*(q - 1/d)*G(.).
inline InteractionOutcome interact_pair(const SimplexPoint& p, const SimplexPoint& p_tilde,
                                        const InteractionEvent& event, const MicroConfig& cfg,
                                        const PayoffMatrix& a) {
  if (!(cfg.delta + cfg.r < 1.0)) {
    throw Error(Errc::kConfigInvalid, "delta + r must be < 1");
  }
  const int d = p.dim();
  if (p_tilde.dim() != d || a.dim() != d) {
    throw Error(Errc::kDimensionMismatch, "interact_pair: dimensions differ");
  }
  Vec next = p.coords();
  Vec next_tilde = p_tilde.coords();

  if (event.l != event.m && cfg.delta > 0.0) {
    const double gain = a(event.l, event.m);
    const double step = cfg.delta * h_eval(p.coords(), cfg.step) * gain;
    const double step_tilde = cfg.delta * h_eval(p_tilde.coords(), cfg.step) * gain;
    next[event.l] += step;
    next[event.m] -= step;
    next_tilde[event.l] += step_tilde;
    next_tilde[event.m] -= step_tilde;
  }
  if (cfg.r > 0.0) {
    const double center = 1.0 / d;
    next += cfg.r * cfg.noise_amplitude(p.coords()) * (event.q.array() - center).matrix();
    next_tilde +=
        cfg.r * cfg.noise_amplitude(p_tilde.coords()) * (event.q_tilde.array() - center).matrix();
  }

  int renorm = 0;
  double drift = 0.0;
  Vec first = detail::finish_update(std::move(next), renorm, drift);
  Vec second = detail::finish_update(std::move(next_tilde), renorm, drift);
  return {SimplexPoint::trusted(std::move(first)), SimplexPoint::trusted(std::move(second)),
          renorm, drift};
}

// Draws the strategy choices and noise of one meeting between p and
// p_tilde (agent indices and the clock are left to the caller).
template <class Rng>
InteractionEvent sample_interaction(Rng& rng, const SimplexPoint& p, const SimplexPoint& p_tilde,
                                    const MicroConfig& cfg) {
  InteractionEvent ev;
  ev.zeta = rng.uniform01();
  ev.zeta_tilde = rng.uniform01();
  ev.l = sample_pure(p, ev.zeta);
  ev.m = sample_pure(p_tilde, ev.zeta_tilde);
  if (cfg.r > 0.0) {
    ev.q = draw_uniform_simplex(rng, p.dim());
    ev.q_tilde = draw_uniform_simplex(rng, p.dim());
  }
  return ev;
}

// Draws every random quantity of event number `index` from its own stream.
inline InteractionEvent draw_event(const AgentPopulation& pop, const MicroConfig& cfg,
                                   std::uint64_t index) {
  StreamRng rng(cfg.seed, index);
  const auto n = static_cast<std::uint64_t>(pop.size());
  const auto i = static_cast<int>(rng.uniform_index(n));
  auto j = static_cast<int>(rng.uniform_index(n - 1));
  if (j >= i) ++j;
  const double mean_dt = 2.0 / static_cast<double>(n);
  const double dt = cfg.clock == EventClock::kExponential ? rng.exponential(mean_dt) : mean_dt;
  InteractionEvent ev = sample_interaction(rng, pop.strategies[i], pop.strategies[j], cfg);
  ev.i = i;
  ev.j = j;
  ev.dt = dt;
  return ev;
}

inline void apply_event(AgentPopulation& pop, const InteractionEvent& ev, const MicroConfig& cfg,
                        const PayoffMatrix& a) {
  auto out = interact_pair(pop.strategies[ev.i], pop.strategies[ev.j], ev, cfg, a);
  pop.strategies[ev.i] = std::move(out.first);
  pop.strategies[ev.j] = std::move(out.second);
  pop.renormalizations += static_cast<std::uint64_t>(out.renormalizations);
  pop.time += ev.dt;
  ++pop.events;
}

// Pair events arrive at total rate N/2, so every agent interacts at unit
// rate.
inline InteractionEvent step(AgentPopulation& pop, const MicroConfig& cfg, const PayoffMatrix& a) {
  if (pop.size() < 2) throw Error(Errc::kConfigInvalid, "need at least two agents");
  auto ev = draw_event(pop, cfg, pop.events);
  apply_event(pop, ev, cfg, a);
  return ev;
}

struct MicroSnapshot {
  double time = 0.0;
  // Rescaled time delta * time.
  double tau = 0.0;
  AgentPopulation population;
};

struct MicroRun {
  std::vector<MicroSnapshot> snapshots;
  std::uint64_t events = 0;
  std::uint64_t renormalizations = 0;
};

// Runs events up to t_end. Snapshots are taken at 0, s, 2s, ... and at
// t_end; each holds the state after all events with time <= snapshot time.
inline MicroRun run_micro(AgentPopulation pop, double t_end, const MicroConfig& cfg,
                          const PayoffMatrix& a, double snapshot_every) {
  cfg.validate();
  a.require_antisymmetric();
  if (!(t_end >= 0.0)) throw Error(Errc::kConfigInvalid, "t_end must be >= 0");
  if (!(snapshot_every > 0.0)) throw Error(Errc::kConfigInvalid, "snapshot_every must be > 0");
  if (pop.size() < 2) throw Error(Errc::kConfigInvalid, "need at least two agents");
  if (pop.dim() != a.dim()) throw Error(Errc::kDimensionMismatch, "population vs game");

  std::vector<double> marks;
  for (std::uint64_t k = 0;; ++k) {
    const double s = static_cast<double>(k) * snapshot_every;
    if (s >= t_end) break;
    marks.push_back(s);
  }
  marks.push_back(t_end);

  const std::uint64_t events0 = pop.events;
  const std::uint64_t renorm0 = pop.renormalizations;
  MicroRun run;
  std::size_t next = 0;
  auto record = [&](double at) {
    MicroSnapshot snap{at, cfg.delta * at, pop};
    snap.population.time = at;
    run.snapshots.push_back(std::move(snap));
  };
  const double t0 = pop.time;
  for (auto& mark : marks) mark += t0;

  while (true) {
    auto ev = draw_event(pop, cfg, pop.events);
    const double t_next = pop.time + ev.dt;
    while (next < marks.size() && marks[next] < t_next) record(marks[next++]);
    if (next == marks.size()) break;
    apply_event(pop, ev, cfg, a);
  }
  run.events = pop.events - events0;
  run.renormalizations = pop.renormalizations - renorm0;
  return run;
}

// Closed-form mean increment E[p* - p]; the noise term has zero mean.
inline Vec expected_drift(const SimplexPoint& p, const SimplexPoint& p_tilde,
                          const MicroConfig& cfg, const PayoffMatrix& a) {
  const Vec& x = p.coords();
  const Vec& y = p_tilde.coords();
  const Vec ay = a.entries() * y;
  const Vec ax = a.entries() * x;
  const Vec mixed = (x.array() * ay.array() + y.array() * ax.array()).matrix();
  return cfg.delta * h_eval(x, cfg.step) * mixed;
}

}  // namespace evogame
