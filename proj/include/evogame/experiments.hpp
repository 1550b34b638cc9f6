#pragma once

// The named experiments. Each command returns a report (scalars and
// built-in checks) and, when given an artifact sink, writes CSV files.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "evogame/config.hpp"
#include "evogame/ensemble.hpp"
#include "evogame/error.hpp"
#include "evogame/game.hpp"
#include "evogame/init.hpp"
#include "evogame/io.hpp"
#include "evogame/meanfield.hpp"
#include "evogame/metrics.hpp"
#include "evogame/micro.hpp"
#include "evogame/replicator.hpp"

namespace evogame {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kHistogramBins = 60;

struct Check {
  std::string name;
  double value = 0.0;
  // "<=", ">=", "==" (within `threshold`) or "in" ([lo, hi]); ">" for
  // negative controls that must exceed the threshold.
  std::string relation;
  double threshold = 0.0;
  double upper = 0.0;
  bool passed = false;

  json to_json() const {
    json j = {{"name", name}, {"value", value}, {"relation", relation}, {"passed", passed}};
    if (relation == "in") {
      j["range"] = {threshold, upper};
    } else {
      j["threshold"] = threshold;
    }
    return j;
  }
};

inline Check check_le(std::string name, double value, double thr) {
  return {std::move(name), value, "<=", thr, 0.0, value <= thr};
}
inline Check check_ge(std::string name, double value, double thr) {
  return {std::move(name), value, ">=", thr, 0.0, value >= thr};
}
inline Check check_gt(std::string name, double value, double thr) {
  return {std::move(name), value, ">", thr, 0.0, value > thr};
}
inline Check check_in(std::string name, double value, double lo, double hi) {
  return {std::move(name), value, "in", lo, hi, value >= lo && value <= hi};
}
inline Check check_true(std::string name, bool ok) {
  return {std::move(name), ok ? 1.0 : 0.0, "==", 1.0, 0.0, ok};
}

struct RunReport {
  json scalars = json::object();
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
  const Check* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

// Collects the files a run writes, relative to its output directory.
class Artifacts {
 public:
  Artifacts(fs::path root, std::string config_hash)
      : root_(std::move(root)), hash_(std::move(config_hash)) {
    fs::create_directories(root_);
  }

  const fs::path& root() const { return root_; }

  fs::path timeseries(const std::string& name) {
    return add(timeseries_, "timeseries_" + name + ".csv");
  }
  fs::path histogram(const std::string& name) { return add(histograms_, "hist_" + name + ".csv"); }
  fs::path snapshot(const std::string& name, double time) {
    snapshot_index_.push_back({{"file", name + ".csv"}, {"time", time}});
    return add(snapshots_, "snapshots/" + name + ".csv");
  }

  void write_snapshot_index() {
    if (snapshot_index_.empty()) return;
    const json index = {{"config_hash", hash_}, {"snapshots", snapshot_index_}};
    io::write_text(root_ / "snapshots" / "index.json", index.dump(2) + "\n");
  }

  json to_json() const {
    json j = {{"timeseries", timeseries_}, {"histograms", histograms_}, {"snapshots", snapshots_}};
    if (!snapshot_index_.empty()) j["snapshot_index"] = "snapshots/index.json";
    return j;
  }

 private:
  fs::path add(std::vector<std::string>& list, const std::string& rel) {
    list.push_back(rel);
    return root_ / rel;
  }

  fs::path root_;
  std::string hash_;
  std::vector<std::string> timeseries_;
  std::vector<std::string> histograms_;
  std::vector<std::string> snapshots_;
  json snapshot_index_ = json::array();
};

namespace detail {

inline std::string frame_tag(std::size_t k) {
  std::ostringstream s;
  s << std::setw(4) << std::setfill('0') << k;
  return s.str();
}

inline int steps_between(double every, double dt) {
  return std::max(1, static_cast<int>(std::lround(every / dt)));
}

inline void write_frames(Artifacts* art, const std::vector<ParticleEnsemble>& frames,
                         int bins) {
  if (!art) return;
  std::vector<double> times;
  std::vector<SimplexPoint> means;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    io::write_ensemble(art->snapshot("ensemble_" + frame_tag(k), frames[k].time), frames[k]);
    io::write_histogram(art->histogram(frame_tag(k)), marginal_histogram(frames[k], 0, bins));
    times.push_back(frames[k].time);
    means.push_back(mean_strategy(frames[k]));
  }
  io::write_trajectory(art->timeseries("mean"), times, means);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

// Runs job(k) for k in [0, count) on up to `workers` threads; results are
// stored by index, so the outcome does not depend on scheduling.
template <class Result>
std::vector<Result> parallel_map(int count, int workers, const std::function<Result(int)>& job) {
  std::vector<Result> out(static_cast<std::size_t>(count));
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int k = 0; k < count; ++k) out[k] = job(k);
    return out;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int k = w; k < count; k += workers) out[k] = job(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline RunReport cmd_two_strategies(const ExperimentConfig& cfg, Artifacts* art = nullptr) {
  const auto game = make_game(cfg.game);
  if (game.dim() != 2) throw Error(Errc::kDimensionMismatch, "two_strategies needs d = 2");
  const double b = game(0, 1);
  const auto ens0 = make_ensemble(cfg.init, 2, cfg.seed);
  std::vector<double> p1;
  for (const auto& p : ens0.points) p1.push_back(p[0]);

  const auto frames = integrate_two_strategies(p1, ens0.weights, b, cfg.dyn.c, cfg.dyn.t_end,
                                               cfg.dyn.dt,
                                               detail::steps_between(cfg.dyn.snapshot_every, cfg.dyn.dt));
  const auto& last = frames.back();

  // Mass sitting exactly on the losing vertex never moves.
  const double source = b >= 0.0 ? 0.0 : 1.0;
  const double target = 1.0 - source;
  const double frozen = mass_near(ens0, 0, source, 0.0);
  const double eps0 = cfg.threshold("eps_source");
  const double eps1 = cfg.threshold("eps_target");
  const double slack = cfg.threshold("absorption_slack");
  const double at_source = mass_near(last, 0, source, eps0);
  const double at_target = mass_near(last, 0, target, eps1);
  const double mean1 = mean_strategy(last)[0];

  RunReport rep;
  rep.scalars = {{"b", b},
                 {"source_vertex", source},
                 {"initial_mass_at_source", frozen},
                 {"mass_near_source", at_source},
                 {"mass_near_target", at_target},
                 {"eps_source", eps0},
                 {"eps_target", eps1},
                 {"initial_mean_p1", mean_strategy(ens0)[0]},
                 {"final_mean_p1", mean1},
                 {"particles", ens0.size()}};
  rep.checks.push_back(check_le("source_mass_frozen", std::abs(at_source - frozen), 1e-12));
  if (b != 0.0) {
    rep.checks.push_back(check_ge("target_mass", at_target, 1.0 - frozen - slack));
    // The mean is a sum of 10^3 weighted terms; allow for its rounding.
    constexpr double kSumRounding = 1e-12;
    if (b > 0.0) {
      rep.checks.push_back(check_in("final_mean_p1", mean1, 1.0 - frozen - slack - kSumRounding,
                                    1.0 - frozen + kSumRounding));
    } else {
      rep.checks.push_back(check_in("final_mean_p1", mean1, frozen - kSumRounding,
                                    frozen + slack + kSumRounding));
    }
  } else {
    double moved = 0.0;
    for (int k = 0; k < last.size(); ++k) {
      moved = std::max(moved, std::abs(last.points[k][0] - ens0.points[k][0]));
    }
    rep.checks.push_back(check_le("stationary", moved, 0.0));
  }
  detail::write_frames(art, frames, cfg.params.value("bins", kHistogramBins));
  return rep;
}

// ---------------------------------------------------------------------------

struct GrazingCell {
  int n = 0;
  double delta = 0.0;
  std::vector<double> tau;
  std::vector<double> mean;
  std::vector<double> stderr_;
};

inline RunReport cmd_grazing(const ExperimentConfig& cfg, Artifacts* art = nullptr) {
  const auto game = make_game(cfg.game);
  const int d = game.dim();
  const auto deltas = cfg.params.at("deltas").get<std::vector<double>>();
  const auto n_values = cfg.params.at("n_values").get<std::vector<int>>();
  const int n_seeds = cfg.params.at("n_seeds").get<int>();
  const int n_proj = cfg.params.at("n_proj").get<int>();
  const int workers = cfg.params.value("workers", 0);
  const double tau_end = cfg.dyn.t_end;
  const double every = cfg.dyn.snapshot_every;
  const double lambda = cfg.dyn.lambda;
  const FieldParams field(game, StepFunctionParams{cfg.dyn.c}, lambda);
  const int record = detail::steps_between(every, cfg.dyn.dt);

  struct Job {
    int n;
    std::size_t delta_index;
    int seed_index;
  };
  std::vector<Job> jobs;
  for (int n : n_values) {
    for (std::size_t di = 0; di < deltas.size(); ++di) {
      for (int s = 0; s < n_seeds; ++s) jobs.push_back({n, di, s});
    }
  }

  const std::function<std::vector<double>(int)> run_job = [&](int k) {
    const Job& job = jobs[k];
    const double delta = deltas[job.delta_index];
    // The same initial population for every delta at a given (n, seed).
    json init = cfg.init;
    init["count"] = job.n;
    const auto init_seed = detail::mix(cfg.seed, detail::mix(job.n, job.seed_index));
    const AgentPopulation pop = make_population(init, d, init_seed);

    MicroConfig mc;
    mc.delta = delta;
    mc.r = lambda > 0.0 ? std::sqrt(lambda * delta) : 0.0;
    mc.step.c = cfg.dyn.c;
    mc.n_agents = job.n;
    mc.seed = detail::mix(init_seed, 0x6A2Eull + job.delta_index);
    const auto micro = run_micro(pop, tau_end / delta, mc, game, every / delta);

    std::vector<ParticleEnsemble> reference;
    const auto ens0 = ParticleEnsemble::from_population(pop);
    if (lambda == 0.0) {
      TransportOptions opts;
      opts.record_every = record;
      reference = integrate_transport(ens0, field, tau_end, cfg.dyn.dt, opts);
    } else {
      reference.push_back(ens0);
      auto cur = ens0;
      const StepPlan plan = plan_steps(tau_end, cfg.dyn.dt);
      for (long s = 1; s <= plan.steps; ++s) {
        const double h = plan.time_at(s, tau_end) - plan.time_at(s - 1, tau_end);
        cur = diffusion_step(cur, field, h, mc.seed ^ 0xD1FFull, static_cast<std::uint64_t>(s))
                  .ensemble;
        if (s % record == 0 || s == plan.steps) reference.push_back(cur);
      }
    }
    if (reference.size() != micro.snapshots.size()) {
      throw Error(Errc::kConfigInvalid, "snapshot grids of agents and transport differ");
    }
    std::vector<double> dist;
    for (std::size_t m = 0; m < reference.size(); ++m) {
      dist.push_back(sliced_w1(ParticleEnsemble::from_population(micro.snapshots[m].population),
                               reference[m], n_proj, kDefaultProjectionSeed));
    }
    return dist;
  };
  const auto results = detail::parallel_map<std::vector<double>>(
      static_cast<int>(jobs.size()), workers, run_job);

  std::vector<GrazingCell> cells;
  for (std::size_t start = 0; start < jobs.size(); start += n_seeds) {
    GrazingCell cell;
    cell.n = jobs[start].n;
    cell.delta = deltas[jobs[start].delta_index];
    const std::size_t marks = results[start].size();
    for (std::size_t m = 0; m < marks; ++m) {
      double sum = 0.0;
      double sum_sq = 0.0;
      for (int s = 0; s < n_seeds; ++s) {
        const double x = results[start + s][m];
        sum += x;
        sum_sq += x * x;
      }
      const double mean = sum / n_seeds;
      const double var = std::max(0.0, (sum_sq - n_seeds * mean * mean) / (n_seeds - 1));
      cell.tau.push_back(std::min(static_cast<double>(m) * every, tau_end));
      cell.mean.push_back(mean);
      cell.stderr_.push_back(std::sqrt(var / n_seeds));
    }
    cells.push_back(std::move(cell));
  }

  RunReport rep;
  const double factor = cfg.threshold("stderr_factor");
  json table = json::array();
  auto label = [](const char* what, double x) {
    std::ostringstream s;
    s << what << x;
    return s.str();
  };
  for (const auto& cell : cells) {
    table.push_back({{"n", cell.n},
                     {"delta", cell.delta},
                     {"w1_at_tau_end", cell.mean.back()},
                     {"stderr", cell.stderr_.back()}});
  }
  // Non-increasing as delta shrinks, at each population size.
  for (std::size_t a = 0; a < cells.size(); ++a) {
    for (std::size_t b = 0; b < cells.size(); ++b) {
      const auto& x = cells[a];
      const auto& y = cells[b];
      const double allowance =
          factor * std::hypot(x.stderr_.back(), y.stderr_.back());
      if (x.n == y.n && y.delta < x.delta) {
        bool adjacent = true;
        for (const auto& z : cells) {
          if (z.n == x.n && z.delta < x.delta && z.delta > y.delta) adjacent = false;
        }
        if (adjacent) {
          rep.checks.push_back(check_le(label("n", x.n) + label("_delta", y.delta) +
                                            label("_vs_delta", x.delta),
                                        y.mean.back() - x.mean.back(), allowance));
        }
      }
      if (x.delta == y.delta && y.n > x.n) {
        bool adjacent = true;
        for (const auto& z : cells) {
          if (z.delta == x.delta && z.n > x.n && z.n < y.n) adjacent = false;
        }
        if (adjacent) {
          rep.checks.push_back(check_le(label("delta", x.delta) + label("_n", y.n) +
                                            label("_vs_n", x.n),
                                        y.mean.back() - x.mean.back(), allowance));
        }
      }
    }
  }
  rep.scalars = {{"tau_end", tau_end},
                 {"n_seeds", n_seeds},
                 {"n_proj", n_proj},
                 {"lambda", lambda},
                 {"distances", table}};

  if (art) {
    io::CsvWriter w(art->timeseries("distance"), {"n", "delta", "tau", "mean_w1", "stderr_w1"});
    for (const auto& cell : cells) {
      for (std::size_t m = 0; m < cell.tau.size(); ++m) {
        w.row({static_cast<double>(cell.n), cell.delta, cell.tau[m], cell.mean[m], cell.stderr_[m]});
      }
    }
    w.close();
  }
  return rep;
}

// ---------------------------------------------------------------------------

struct PeriodicRun {
  double period = 0.0;
  std::vector<ParticleEnsemble> frames;  // at 0, T/2, T, 3T/2, 2T
  ReplicatorTrajectory mean_path;         // ensemble mean at every step
  double lowest_product = 0.0;
};

inline RunReport cmd_rps_periodic(const ExperimentConfig& cfg, Artifacts* art = nullptr) {
  const auto game = make_game(cfg.game);
  const int d = game.dim();
  const double c = cfg.dyn.c;
  const auto nash = interior_nash(game);
  if (!nash.equilibrium) throw Error(Errc::kNoInteriorEquilibrium, "game has no interior equilibrium");
  const Vec q = nash.equilibrium->coords();
  const auto ens0 = make_ensemble(cfg.init, d, cfg.seed);
  const Vec m0 = mean_strategy(ens0).coords();
  if ((m0 - q).cwiseAbs().maxCoeff() <= 1e-12) {
    throw Error(Errc::kMeanAtNash, "initial mean equals the equilibrium; no period is defined");
  }
  if (min_support_product(ens0) < c) {
    throw Error(Errc::kSupportLeftPlateau, "t=0: support not inside {prod p_i >= c}");
  }

  const double dt = cfg.dyn.dt;
  const auto mean_ode = integrate_rk4(SimplexPoint::trusted(m0), game, cfg.param("period_horizon"),
                                      dt, 2.0 * c);
  const auto estimated = estimate_period(mean_ode);
  if (!estimated) {
    throw Error(Errc::kConfigInvalid, "no period found within params.period_horizon");
  }
  PeriodicRun run;
  run.period = *estimated;
  const long half_steps = std::max(1L, static_cast<long>(std::ceil(run.period / (2.0 * dt))));
  const double h = run.period / static_cast<double>(2 * half_steps);
  const FieldParams field(game, StepFunctionParams{c});
  TransportOptions opts;
  opts.record_every = static_cast<int>(half_steps);
  run.lowest_product = min_support_product(ens0);
  run.mean_path.rate_scale = 2.0 * c;
  run.mean_path.times.push_back(0.0);
  run.mean_path.states.push_back(SimplexPoint::trusted(m0));
  const Vec w = Eigen::Map<const Vec>(ens0.weights.data(), ens0.size());
  opts.observer = [&](double t, const RowMat& x) {
    const Vec m = x.transpose() * w;
    run.mean_path.times.push_back(t);
    run.mean_path.states.push_back(SimplexPoint::trusted(m / m.sum()));
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
      run.lowest_product = std::min(run.lowest_product, x.row(k).prod());
    }
  };
  // Integrate with the exact step h so that T/2 multiples land on the grid.
  run.frames = integrate_transport(ens0, field, 4.0 * static_cast<double>(half_steps) * h, h, opts);

  const int n_proj = cfg.params.value("n_proj", kDefaultProjections);
  const double w1_tol = cfg.threshold("w1_tol");
  RunReport rep;
  const char* labels[] = {"w1_shift_t0", "w1_shift_half_period", "w1_shift_period"};
  for (int k = 0; k < 3; ++k) {
    const double dist = sliced_w1(run.frames[k + 2], run.frames[k], n_proj, kDefaultProjectionSeed);
    rep.checks.push_back(check_le(labels[k], dist, w1_tol));
  }

  const Mat rot = ((c * run.period / d) * game.entries()).exp();
  double rotation_err = 0.0;
  double about_mean_err = 0.0;
  for (int k = 0; k < ens0.size(); ++k) {
    const Vec& p0 = ens0.points[k].coords();
    const Vec& pt = run.frames[2].points[k].coords();
    rotation_err = std::max(rotation_err, (pt - rot * p0).cwiseAbs().maxCoeff());
    about_mean_err = std::max(about_mean_err, (pt - (m0 + rot * (p0 - m0))).cwiseAbs().maxCoeff());
  }
  rep.checks.push_back(check_le("rotation_about_equilibrium", rotation_err, cfg.threshold("rotation_tol")));

  // Mean path over [0, T] exactly: the first 2 * half_steps steps.
  ReplicatorTrajectory first_period;
  first_period.rate_scale = run.mean_path.rate_scale;
  first_period.times.assign(run.mean_path.times.begin(),
                            run.mean_path.times.begin() + 2 * half_steps + 1);
  first_period.states.assign(run.mean_path.states.begin(),
                             run.mean_path.states.begin() + 2 * half_steps + 1);
  const auto tm = temporal_mean(first_period, 0.0, first_period.times.back());
  const double tm_err = (tm.mean.coords() - q).cwiseAbs().maxCoeff();
  rep.checks.push_back(check_le("temporal_mean", tm_err, cfg.threshold("temporal_mean_tol")));
  rep.checks.push_back(check_ge("support_on_plateau", run.lowest_product, c));

  const Vec mean_t = mean_strategy(run.frames[2]).coords();
  rep.scalars = {{"period", run.period},
                 {"step", h},
                 {"steps_per_period", 2 * half_steps},
                 {"rotation_error", rotation_err},
                 {"rotation_about_initial_mean_error", about_mean_err},
                 {"mean_return_error", (mean_t - m0).cwiseAbs().maxCoeff()},
                 {"temporal_mean", std::vector<double>(tm.mean.coords().data(),
                                                       tm.mean.coords().data() + d)},
                 {"temporal_mean_error", tm_err},
                 {"lowest_support_product", run.lowest_product},
                 {"particles", ens0.size()}};

  if (art) {
    for (std::size_t k = 0; k < run.frames.size(); ++k) {
      io::write_ensemble(art->snapshot("ensemble_" + detail::frame_tag(k), run.frames[k].time),
                         run.frames[k]);
      io::write_histogram(art->histogram(detail::frame_tag(k)),
                          marginal_histogram(run.frames[k], 0, cfg.params.value("bins", kHistogramBins)));
    }
    io::write_trajectory(art->timeseries("mean"), run.mean_path);
    io::write_trajectory(art->timeseries("mean_ode"), mean_ode);
  }
  return rep;
}

// ---------------------------------------------------------------------------

struct FolkProbe {
  double null_residual = 0.0;   // ||A p||_inf
  double rest_residual = 0.0;   // replicator right-hand side
  double field_max = 0.0;       // max ||F||_inf along the transport run
  double drift_w1 = 0.0;        // max sliced W1 to the start
  bool nash = false;
};

inline FolkProbe probe_equilibrium(const SimplexPoint& p, const PayoffMatrix& game, double c,
                                   double t_end, double dt, double tol, int n_proj) {
  FolkProbe out;
  out.null_residual = (game.entries() * p.coords()).cwiseAbs().maxCoeff();
  out.rest_residual = rest_point_residual(p, game);
  const FieldParams field(game, StepFunctionParams{c});
  const auto start = ParticleEnsemble::dirac(p);
  for (const auto& frame : integrate_transport(start, field, t_end, dt)) {
    const Vec& x = frame.points[0].coords();
    out.field_max = std::max(out.field_max, field_F(x, x, field).cwiseAbs().maxCoeff());
    out.drift_w1 = std::max(out.drift_w1, sliced_w1(frame, start, n_proj, kDefaultProjectionSeed));
  }
  out.nash = is_nash(p, game, tol);
  return out;
}

inline RunReport cmd_folk_check(const ExperimentConfig& cfg, Artifacts* art = nullptr) {
  const auto game = make_game(cfg.game);
  const int d = game.dim();
  const double tol = cfg.threshold("tol");
  const int n_proj = cfg.params.value("n_proj", kDefaultProjections);
  const auto nash = interior_nash(game);
  if (!nash.equilibrium) {
    throw Error(Errc::kNoInteriorEquilibrium,
                "null space dimension " + std::to_string(nash.null_dimension) +
                    " has no interior point");
  }
  const SimplexPoint q = *nash.equilibrium;
  const int vertex = cfg.params.at("control_vertex").get<int>();
  const double weight = cfg.param("control_weight");
  const SimplexPoint control(
      Vec((1.0 - weight) * q.coords() + weight * SimplexPoint::vertex(d, vertex).coords()));

  const auto at_q = probe_equilibrium(q, game, cfg.dyn.c, cfg.dyn.t_end, cfg.dyn.dt, tol, n_proj);
  const auto at_c =
      probe_equilibrium(control, game, cfg.dyn.c, cfg.dyn.t_end, cfg.dyn.dt, tol, n_proj);

  RunReport rep;
  rep.checks.push_back(check_le("null_vector", at_q.null_residual, tol));
  rep.checks.push_back(check_le("rest_point", at_q.rest_residual, tol));
  rep.checks.push_back(check_le("stationary_measure", std::max(at_q.field_max, at_q.drift_w1), tol));
  rep.checks.push_back(check_true("nash", at_q.nash));
  rep.checks.push_back(check_gt("control_null_vector_fails", at_c.null_residual, tol));
  rep.checks.push_back(check_gt("control_rest_point_fails", at_c.rest_residual, tol));
  rep.checks.push_back(
      check_gt("control_stationary_measure_fails", std::max(at_c.field_max, at_c.drift_w1), tol));
  rep.checks.push_back(check_true("control_nash_fails", !at_c.nash));

  auto probe_json = [](const SimplexPoint& p, const FolkProbe& r) {
    return json{{"point", std::vector<double>(p.coords().data(), p.coords().data() + p.dim())},
                {"null_residual", r.null_residual},
                {"rest_residual", r.rest_residual},
                {"field_max", r.field_max},
                {"drift_w1", r.drift_w1},
                {"is_nash", r.nash}};
  };
  rep.scalars = {{"null_dimension", nash.null_dimension},
                 {"equilibrium", probe_json(q, at_q)},
                 {"control", probe_json(control, at_c)},
                 {"tol", tol}};
  if (art) {
    io::write_trajectory(art->timeseries("equilibrium"), {0.0}, {q});
    io::write_trajectory(art->timeseries("control"), {0.0}, {control});
  }
  return rep;
}

// ---------------------------------------------------------------------------

inline RunReport cmd_meanfield_vs_replicator(const ExperimentConfig& cfg, Artifacts* art = nullptr) {
  const auto game = make_game(cfg.game);
  const double c = cfg.dyn.c;
  const auto ens0 = make_ensemble(cfg.init, game.dim(), cfg.seed);
  if (min_support_product(ens0) < c) {
    throw Error(Errc::kSupportLeftPlateau,
                "t=0: smallest prod p_i on the support is " + std::to_string(min_support_product(ens0)) +
                    " < c = " + std::to_string(c));
  }
  const Vec w = Eigen::Map<const Vec>(ens0.weights.data(), ens0.size());
  std::vector<double> times{0.0};
  std::vector<SimplexPoint> means{mean_strategy(ens0)};
  TransportOptions opts;
  opts.record_every = detail::steps_between(cfg.dyn.snapshot_every, cfg.dyn.dt);
  double lowest = min_support_product(ens0);
  opts.observer = [&](double t, const RowMat& x) {
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
      if (w[k] > 0.0 && x.row(k).prod() < c) {
        throw Error(Errc::kSupportLeftPlateau,
                    "particle " + std::to_string(k) + " left {prod p_i >= c} at t=" + std::to_string(t));
      }
      if (w[k] > 0.0) lowest = std::min(lowest, x.row(k).prod());
    }
    const Vec m = x.transpose() * w;
    times.push_back(t);
    means.push_back(SimplexPoint::trusted(m / m.sum()));
  };
  const FieldParams field(game, StepFunctionParams{c});
  const auto frames = integrate_transport(ens0, field, cfg.dyn.t_end, cfg.dyn.dt, opts);
  const auto ref = integrate_rk4(means.front(), game, cfg.dyn.t_end, cfg.dyn.dt, 2.0 * c);
  double gap = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    gap = std::max(gap, (means[k].coords() - ref.states[k].coords()).cwiseAbs().maxCoeff());
  }
  RunReport rep;
  rep.checks.push_back(check_le("mean_vs_replicator_gap", gap, cfg.threshold("gap_tol")));
  rep.scalars = {{"gap", gap},
                 {"rate_scale", 2.0 * c},
                 {"lowest_support_product", lowest},
                 {"steps", ref.size() - 1},
                 {"particles", ens0.size()}};
  if (art) {
    const std::size_t stride = static_cast<std::size_t>(opts.record_every);
    std::vector<double> t_sub;
    std::vector<SimplexPoint> m_sub;
    std::vector<SimplexPoint> r_sub;
    for (std::size_t k = 0; k < ref.size(); k += stride) {
      t_sub.push_back(times[k]);
      m_sub.push_back(means[k]);
      r_sub.push_back(ref.states[k]);
    }
    if ((ref.size() - 1) % stride != 0) {
      t_sub.push_back(times.back());
      m_sub.push_back(means.back());
      r_sub.push_back(ref.states.back());
    }
    io::write_trajectory(art->timeseries("mean"), t_sub, m_sub);
    io::write_trajectory(art->timeseries("replicator"), t_sub, r_sub);
    io::write_ensemble(art->snapshot("ensemble_0000", frames.front().time), frames.front());
    io::write_ensemble(art->snapshot("ensemble_final", frames.back().time), frames.back());
  }
  return rep;
}

// ---------------------------------------------------------------------------

inline RunReport cmd_micro_free_run(const ExperimentConfig& cfg, Artifacts* art = nullptr) {
  const auto game = make_game(cfg.game);
  const auto pop = make_population(cfg.init, game.dim(), cfg.seed);
  MicroConfig mc;
  mc.delta = cfg.dyn.delta;
  mc.r = cfg.dyn.r;
  mc.step.c = cfg.dyn.c;
  mc.seed = cfg.seed;
  mc.n_agents = pop.size();
  mc.clock = cfg.params.value("clock", "exponential") == "fixed" ? EventClock::kFixed
                                                                  : EventClock::kExponential;
  const auto run = run_micro(pop, cfg.dyn.t_end, mc, game, cfg.dyn.snapshot_every);
  bool inside = true;
  for (const auto& snap : run.snapshots) {
    for (const auto& p : snap.population.strategies) {
      inside = inside && p.coords().minCoeff() >= 0.0 && in_simplex(p.coords());
    }
  }
  RunReport rep;
  rep.checks.push_back(check_true("states_in_simplex", inside));
  const Vec last = mean_strategy(run.snapshots.back().population).coords();
  rep.scalars = {{"events", run.events},
                 {"renormalizations", run.renormalizations},
                 {"agents", pop.size()},
                 {"final_tau", cfg.dyn.delta * cfg.dyn.t_end},
                 {"final_mean", std::vector<double>(last.data(), last.data() + last.size())}};
  if (art) {
    std::vector<ParticleEnsemble> frames;
    for (const auto& snap : run.snapshots) {
      frames.push_back(ParticleEnsemble::from_population(snap.population));
    }
    detail::write_frames(art, frames, cfg.params.value("bins", kHistogramBins));
    io::CsvWriter w(art->timeseries("tau"), {"time", "tau"});
    for (const auto& snap : run.snapshots) w.row({snap.time, snap.tau});
    w.close();
  }
  return rep;
}

// ---------------------------------------------------------------------------

inline RunReport run_command(const ExperimentConfig& cfg, Artifacts* art) {
  switch (cfg.experiment) {
    case Experiment::kTwoStrategies: return cmd_two_strategies(cfg, art);
    case Experiment::kGrazing: return cmd_grazing(cfg, art);
    case Experiment::kRpsPeriodic: return cmd_rps_periodic(cfg, art);
    case Experiment::kFolkCheck: return cmd_folk_check(cfg, art);
    case Experiment::kMeanfieldVsReplicator: return cmd_meanfield_vs_replicator(cfg, art);
    case Experiment::kMicroFreeRun: return cmd_micro_free_run(cfg, art);
  }
  throw Error(Errc::kConfigInvalid, "unhandled experiment");
}

enum ExitCode { kExitPassed = 0, kExitChecksFailed = 1, kExitError = 2 };

struct RunOutcome {
  int exit_code = kExitError;
  json summary;
  fs::path summary_path;
};

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::vector<std::string> overrides;
};

// Loads, validates and runs one experiment. summary.json is written in
// every case where an output directory can be determined, errors included.
inline RunOutcome run_experiment(json user, const RunOptions& opts = {}) {
  RunOutcome out;
  const std::string started = utc_now();
  json summary = {{"schema_version", kSchemaVersion},
                  {"status", "error"},
                  {"error", nullptr},
                  {"scalars", json::object()},
                  {"checks", json::array()},
                  {"artifacts", json::object()}};
  fs::path root;
  if (opts.output_dir) root = *opts.output_dir;
  else if (user.is_object() && user.contains("output_dir") && user["output_dir"].is_string())
    root = user["output_dir"].get<std::string>();
  else if (user.is_object() && user.contains("experiment") && user["experiment"].is_string())
    root = "runs/" + user["experiment"].get<std::string>();

  try {
    if (user.is_object() && user.contains("experiment")) summary["experiment"] = user["experiment"];
    for (const auto& o : opts.overrides) apply_override(user, o);
    if (opts.seed) user["seed"] = *opts.seed;
    if (opts.output_dir) user["output_dir"] = *opts.output_dir;
    const auto cfg = load_config(user);
    root = cfg.output_dir;
    json echo = cfg.resolved;
    echo.erase("output_dir");
    summary["experiment"] = experiment_name(cfg.experiment);
    summary["config"] = echo;
    summary["config_hash"] = config_hash(cfg.resolved);
    Artifacts art(root, summary["config_hash"].get<std::string>());
    const auto rep = run_command(cfg, &art);
    art.write_snapshot_index();
    summary["scalars"] = rep.scalars;
    for (const auto& c : rep.checks) summary["checks"].push_back(c.to_json());
    summary["artifacts"] = art.to_json();
    summary["status"] = rep.passed() ? "passed" : "failed";
    out.exit_code = rep.passed() ? kExitPassed : kExitChecksFailed;
  } catch (const Error& e) {
    summary["error"] = {{"code", std::string(errc_name(e.code()))}, {"message", e.what()}};
  } catch (const std::exception& e) {
    summary["error"] = {{"code", "Internal"}, {"message", e.what()}};
  }
  summary["metadata"] = {{"started_at", started},
                         {"finished_at", utc_now()},
                         {"output_dir", root.string()},
                         {"tool_version", kToolVersion}};
  out.summary = summary;
  if (!root.empty()) {
    try {
      out.summary_path = root / "summary.json";
      io::write_text(out.summary_path, summary.dump(2) + "\n");
    } catch (const std::exception&) {
      out.summary_path.clear();
      out.exit_code = kExitError;
    }
  }
  return out;
}

}  // namespace evogame
