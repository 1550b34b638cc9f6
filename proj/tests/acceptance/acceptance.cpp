// Acceptance runner: one PASS/FAIL line per criterion.
//
//   evogame_acceptance            run everything
//   evogame_acceptance NAME...    run the named criteria
//   evogame_acceptance --list
//
// Tolerances are fixed here and do not read the checks block of any config.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "evogame/experiments.hpp"
#include "oracles.hpp"

namespace {

using namespace evogame;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  // Records one sub-condition; all must hold.
  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [violated]");
  }
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

json config(const char* experiment) { return {{"schema_version", 1}, {"experiment", experiment}}; }

double check_value(const RunReport& rep, const std::string& name) {
  const auto* c = rep.find(name);
  if (!c) throw std::runtime_error("report has no check '" + name + "'");
  return c->value;
}

// ---------------------------------------------------------------------------

void two_strategies_absorption(Verdict& v) {
  auto j = config("two_strategies");
  j["game"] = {{"name", "two_strategy"}, {"b", 1.0}};
  j["dynamics"] = {{"c", 0.1}, {"dt", 0.1}, {"t_end", 400.0}, {"n", 1000}, {"snapshot_every", 400.0}};
  j["init"] = {{"kind", "atom_plus_interval"}, {"atom", 0.0}, {"atom_mass", 0.3},
               {"lo", 0.0}, {"hi", 0.3}, {"count", 1000}};
  j["checks"] = {{"eps_source", 1e-3}, {"eps_target", 1e-2}};
  const auto rep = cmd_two_strategies(load_config(j));
  const double at0 = rep.scalars["mass_near_source"].get<double>();
  const double at1 = rep.scalars["mass_near_target"].get<double>();
  const double mean = rep.scalars["final_mean_p1"].get<double>();
  // The masses and the mean are sums of 1000 terms of size 1e-3.
  constexpr double kSumRounding = 1e-12;
  v.require(std::abs(at0 - 0.3) <= kSumRounding, "mass within 1e-3 of p1=0: " + num(at0) + " == 0.300");
  v.require(at1 >= 0.69, "mass within 1e-2 of p1=1: " + num(at1) + " >= 0.69");
  v.require(mean >= 0.69 - kSumRounding && mean <= 0.70 + kSumRounding,
            "final mean p1: " + num(mean) + " in [0.69, 0.70]");
}

void equilibrium_equivalence(Verdict& v) {
  constexpr double kTol = 1e-8;
  std::vector<std::pair<std::string, json>> games = {
      {"cyclic d=3", {{"name", "cyclic"}, {"d", 3}}},
      {"cyclic d=5", {{"name", "cyclic"}, {"d", 5}}},
  };
  StreamRng rng(20240611, 77);
  for (int k = 0; k < 50; ++k) {
    const int d = 3 + k % 4;
    const auto planted = oracle::game_with_interior_null_vector(rng, d);
    json rows = json::array();
    for (int i = 0; i < d; ++i) {
      json row = json::array();
      for (int col = 0; col < d; ++col) row.push_back(planted.matrix(i, col));
      rows.push_back(row);
    }
    games.push_back({"random #" + std::to_string(k) + " d=" + std::to_string(d),
                     {{"name", "matrix"}, {"entries", rows}}});
  }
  int positive_ok = 0;
  int control_ok = 0;
  double worst = 0.0;
  std::string first_bad;
  for (const auto& [label, game] : games) {
    auto j = config("folk_check");
    j["game"] = game;
    j["checks"] = {{"tol", kTol}};
    const auto rep = cmd_folk_check(load_config(j));
    const auto& eq = rep.scalars["equilibrium"];
    const auto& ctl = rep.scalars["control"];
    const double stat = std::max(eq["field_max"].get<double>(), eq["drift_w1"].get<double>());
    const double ctl_stat = std::max(ctl["field_max"].get<double>(), ctl["drift_w1"].get<double>());
    const bool pos = eq["null_residual"].get<double>() <= kTol && eq["rest_residual"].get<double>() <= kTol &&
                     stat <= kTol && eq["is_nash"].get<bool>();
    const bool neg = ctl["null_residual"].get<double>() > kTol && ctl["rest_residual"].get<double>() > kTol &&
                     ctl_stat > kTol && !ctl["is_nash"].get<bool>();
    worst = std::max({worst, eq["null_residual"].get<double>(), eq["rest_residual"].get<double>(), stat});
    positive_ok += pos;
    control_ok += neg;
    if ((!pos || !neg) && first_bad.empty()) first_bad = label;
  }
  const int total = static_cast<int>(games.size());
  v.require(positive_ok == total, "equilibrium passes all four checks in " + std::to_string(positive_ok) +
                                      "/" + std::to_string(total) + " games (worst residual " + num(worst) +
                                      ", tol 1e-8)");
  v.require(control_ok == total,
            "control fails all four in " + std::to_string(control_ok) + "/" + std::to_string(total));
  if (!first_bad.empty()) v.detail << "; first failure: " << first_bad;
}

void mean_follows_replicator(Verdict& v) {
  auto j = config("meanfield_vs_replicator");
  j["dynamics"] = {{"c", 0.01}, {"dt", 1e-3}, {"t_end", 10.0}};
  const auto rep = cmd_meanfield_vs_replicator(load_config(j));
  const double gap = rep.scalars["gap"].get<double>();
  v.require(gap <= 1e-4, "sup gap to the 2c replicator: " + num(gap) + " <= 1e-4");
}

void rps_periodicity(Verdict& v) {
  constexpr double kTol = 1e-3;
  const auto rep = cmd_rps_periodic(load_config(config("rps_periodic")));
  v.detail << "period " << num(rep.scalars["period"].get<double>());
  for (const auto& [name, label] : {std::pair{"w1_shift_t0", "W1 at t=0"},
                                    std::pair{"w1_shift_half_period", "W1 at t=T/2"},
                                    std::pair{"w1_shift_period", "W1 at t=T"}}) {
    const double x = check_value(rep, name);
    v.require(x <= kTol, std::string(label) + " " + num(x) + " <= 1e-3");
  }
  const double rot = check_value(rep, "rotation_about_equilibrium");
  v.require(rot <= kTol, "rotation |p(T) - exp((cT/d)A)p(0)| " + num(rot) + " <= 1e-3");
  const double tm = check_value(rep, "temporal_mean");
  v.require(tm <= kTol, "temporal mean error " + num(tm) + " <= 1e-3");
}

void grazing_trend(Verdict& v) {
  constexpr double kFactor = 2.0;
  auto j = config("grazing");
  j["dynamics"] = {{"t_end", 5.0}, {"n", 5000}};
  j["params"] = {{"deltas", {0.2, 0.1, 0.05}}, {"n_values", json::array()}, {"n_seeds", 8}};
  const auto rep = cmd_grazing(load_config(j));
  const auto& rows = rep.scalars["distances"];
  for (std::size_t k = 0; k < rows.size(); ++k) {
    v.detail << (k ? ", " : "") << "delta " << rows[k]["delta"].get<double>() << ": "
             << num(rows[k]["w1_at_tau_end"].get<double>()) << " +- " << num(rows[k]["stderr"].get<double>());
  }
  for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
    const double rise = rows[k + 1]["w1_at_tau_end"].get<double>() - rows[k]["w1_at_tau_end"].get<double>();
    const double allowed =
        kFactor * std::hypot(rows[k]["stderr"].get<double>(), rows[k + 1]["stderr"].get<double>());
    v.require(rise <= allowed, "rise " + num(rise) + " <= " + num(allowed));
  }
}

void interaction_invariants(Verdict& v) {
  constexpr int kConfigs = 20;
  constexpr int kPerConfig = 50000;
  StreamRng setup(515, 1);
  long total = 0;
  long outside = 0;
  double worst_sum = 0.0;
  int drift_bad = 0;
  int drift_tests = 0;
  double worst_z = 0.0;
  for (int cfg_k = 0; cfg_k < kConfigs; ++cfg_k) {
    const int d = 2 + cfg_k % 5;
    MicroConfig cfg;
    cfg.delta = 0.6 * setup.uniform01();
    cfg.r = (0.99 - cfg.delta) * setup.uniform01();
    cfg.step.c = 0.01 + 0.3 * setup.uniform01();
    const auto a = PayoffMatrix::validate(oracle::random_antisymmetric(setup, d));
    Vec p = oracle::random_simplex(setup, d);
    Vec pt = oracle::random_simplex(setup, d);
    // Every fourth configuration puts one player on a face of the simplex.
    if (cfg_k % 4 == 3) {
      p[0] = 0.0;
      p /= p.sum();
    }
    const SimplexPoint sp(p);
    const SimplexPoint spt(pt);
    StreamRng rng(9001, static_cast<std::uint64_t>(cfg_k));
    Vec sum[2] = {Vec::Zero(d), Vec::Zero(d)};
    Vec sum_sq[2] = {Vec::Zero(d), Vec::Zero(d)};
    for (int k = 0; k < kPerConfig; ++k) {
      const auto out = interact_pair(sp, spt, sample_interaction(rng, sp, spt, cfg), cfg, a);
      const Vec* after[2] = {&out.first.coords(), &out.second.coords()};
      const Vec* before[2] = {&p, &pt};
      for (int s = 0; s < 2; ++s) {
        ++total;
        worst_sum = std::max(worst_sum, std::abs(after[s]->sum() - 1.0));
        if (after[s]->minCoeff() < 0.0) ++outside;
        const Vec inc = *after[s] - *before[s];
        sum[s] += inc;
        sum_sq[s] += inc.cwiseProduct(inc);
      }
    }
    auto h = [&](const Vec& x) { return std::min(x.prod(), cfg.step.c); };
    const Vec expected[2] = {oracle::enumerated_drift(p, pt, a.entries(), cfg.delta, h(p)),
                             oracle::enumerated_drift(p, pt, a.entries(), cfg.delta, h(pt))};
    for (int s = 0; s < 2; ++s) {
      const Vec mean = sum[s] / kPerConfig;
      const Vec var = sum_sq[s] / kPerConfig - mean.cwiseProduct(mean);
      for (int i = 0; i < d; ++i) {
        const double se = std::sqrt(std::max(var[i], 0.0) / kPerConfig);
        const double err = std::abs(mean[i] - expected[s][i]);
        ++drift_tests;
        if (se == 0.0) {
          if (err > 1e-15) ++drift_bad;
          continue;
        }
        worst_z = std::max(worst_z, err / se);
        if (err > 4.0 * se) ++drift_bad;
      }
    }
  }
  v.detail << kConfigs * kPerConfig << " interactions";
  v.require(total == 2L * kConfigs * kPerConfig, std::to_string(total) + " updated strategies");
  v.require(outside == 0, std::to_string(outside) + " with a negative coordinate");
  v.require(worst_sum <= 1e-12, "max |sum - 1| " + num(worst_sum) + " <= 1e-12");
  v.require(drift_bad == 0, "drift within 4 SE in " + std::to_string(drift_tests - drift_bad) + "/" +
                                std::to_string(drift_tests) + " coordinates (max z " + num(worst_z) + ")");
}

void noise_covariance(Verdict& v) {
  constexpr int kSamples = 1000000;
  for (int d : {2, 3, 5}) {
    // Flat Dirichlet: Var = (d-1)/(d^2(d+1)), Cov = -1/(d^2(d+1)).
    const double scale = 1.0 / (d * d * (d + 1.0));
    Mat closed = Mat::Constant(d, d, -scale);
    closed.diagonal().setConstant((d - 1) * scale);
    const Mat analytic = uniform_simplex_covariance(d);
    StreamRng rng(31337, static_cast<std::uint64_t>(d));
    Mat sum = Mat::Zero(d, d);
    Mat sum_sq = Mat::Zero(d, d);
    for (int k = 0; k < kSamples; ++k) {
      const Vec x = (draw_uniform_simplex(rng, d).array() - 1.0 / d).matrix();
      const Mat outer = x * x.transpose();
      sum += outer;
      sum_sq += outer.cwiseProduct(outer);
    }
    const Mat mean = sum / kSamples;
    const Mat se = ((sum_sq / kSamples - mean.cwiseProduct(mean)) / kSamples).cwiseSqrt();
    const double z = ((mean - analytic).cwiseAbs().array() / se.array()).maxCoeff();
    v.require(z <= 3.0, "d=" + std::to_string(d) + " max z " + num(z) + " <= 3");
    v.require((analytic - closed).cwiseAbs().maxCoeff() <= 1e-15, "d=" + std::to_string(d) + " closed form");
  }
}

void rk4_order(Verdict& v) {
  const auto a = cyclic_matrix(3);
  const SimplexPoint p0{0.5, 0.3, 0.2};
  constexpr double kT = 10.0;
  const Vec ref = integrate_rk4(p0, a, kT, 1e-4).states.back().coords();
  const double coarse = (integrate_rk4(p0, a, kT, 0.02).states.back().coords() - ref).cwiseAbs().maxCoeff();
  const double fine = (integrate_rk4(p0, a, kT, 0.01).states.back().coords() - ref).cwiseAbs().maxCoeff();
  const double ratio = coarse / fine;
  v.detail << "error " << num(coarse) << " at dt=0.02, " << num(fine) << " at dt=0.01";
  v.require(ratio >= 8.0 && ratio <= 32.0, "ratio " + num(ratio) + " in [8, 32]");
}

struct Criterion {
  const char* name;
  std::function<void(Verdict&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"two_strategies_absorption", two_strategies_absorption},
      {"equilibrium_equivalence", equilibrium_equivalence},
      {"mean_follows_replicator", mean_follows_replicator},
      {"rps_periodicity", rps_periodicity},
      {"grazing_trend", grazing_trend},
      {"interaction_invariants", interaction_invariants},
      {"noise_covariance", noise_covariance},
      {"rk4_order", rk4_order},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.size() == 1 && wanted[0] == "--list") {
    for (const auto& c : criteria()) std::cout << c.name << "\n";
    return 0;
  }
  for (const auto& w : wanted) {
    bool known = false;
    for (const auto& c : criteria()) known = known || w == c.name;
    if (!known) {
      std::cerr << "unknown criterion '" << w << "'\n";
      return 2;
    }
  }
  int failed = 0;
  for (const auto& c : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.name) == wanted.end()) continue;
    Verdict v;
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << (v.detail.tellp() > 0 ? "; " : "") << "error: " << e.what();
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << c.name << ": " << v.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
