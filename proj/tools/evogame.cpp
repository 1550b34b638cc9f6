// evogame: runs the named experiments from JSON configs.
//
//   evogame run <config> [--seed S] [--out DIR] [--override key=value ...]
//   evogame validate <config>
//   evogame list-experiments
//
// Exit status: 0 all checks passed, 1 some check failed, 2 error.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "evogame/config.hpp"
#include "evogame/experiments.hpp"

namespace {

int do_run(const std::string& path, const evogame::RunOptions& opts) {
  evogame::json user;
  try {
    user = evogame::read_config_file(path);
  } catch (const evogame::Error& e) {
    // No usable config: still leave a summary if --out says where.
    evogame::RunOptions fallback = opts;
    auto out = evogame::run_experiment(evogame::json(), fallback);
    out.summary["error"] = {{"code", std::string(evogame::errc_name(e.code()))},
                            {"message", e.what()}};
    if (!out.summary_path.empty()) {
      evogame::io::write_text(out.summary_path, out.summary.dump(2) + "\n");
    }
    std::cerr << "error: " << e.what() << "\n";
    return evogame::kExitError;
  }
  const auto out = evogame::run_experiment(user, opts);
  const auto& s = out.summary;
  std::cout << s.value("experiment", "?") << ": " << s["status"].get<std::string>() << "\n";
  for (const auto& c : s["checks"]) {
    std::cout << "  " << (c["passed"].get<bool>() ? "PASS " : "FAIL ") << c["name"].get<std::string>()
              << " value=" << c["value"].dump() << "\n";
  }
  if (!s["error"].is_null()) std::cerr << "error: " << s["error"]["message"].get<std::string>() << "\n";
  if (!out.summary_path.empty()) std::cout << "summary: " << out.summary_path.string() << "\n";
  return out.exit_code;
}

int do_validate(const std::string& path, const std::vector<std::string>& overrides) {
  try {
    auto user = evogame::read_config_file(path);
    for (const auto& o : overrides) evogame::apply_override(user, o);
    const auto cfg = evogame::load_config(user);
    std::cout << "ok: " << evogame::experiment_name(cfg.experiment) << " config_hash "
              << evogame::config_hash(cfg.resolved) << "\n"
              << cfg.resolved.dump(2) << "\n";
    return evogame::kExitPassed;
  } catch (const evogame::Error& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return evogame::kExitError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinetic and mean-field simulations of zero-sum evolutionary games"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;

  auto* run = app.add_subcommand("run", "run an experiment");
  run->add_option("config", config_path, "experiment config (JSON)")->required();
  run->add_option("--seed", seed, "override the seed");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--override", overrides, "key=value, dotted keys (repeatable)");

  auto* validate = app.add_subcommand("validate", "check a config without running it");
  validate->add_option("config", config_path, "experiment config (JSON)")->required();
  validate->add_option("--override", overrides, "key=value, dotted keys (repeatable)");

  auto* list = app.add_subcommand("list-experiments", "print the experiment names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : evogame::kExitError;
  }

  if (*run) return do_run(config_path, {seed, out_dir, overrides});
  if (*validate) return do_validate(config_path, overrides);
  if (*list) {
    for (const auto& e : evogame::experiment_table()) {
      std::cout << e.name << "\t" << e.summary << "\n";
    }
    return 0;
  }
  return evogame::kExitError;
}
