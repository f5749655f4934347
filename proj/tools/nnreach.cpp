#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "config.hpp"
#include "pipeline.hpp"

namespace {

using nnreach::cli::Config;
using nnreach::cli::UsageError;

/// `--key value` and `--key=value` pairs; dashes in keys become underscores.
Config parse_overrides(const std::vector<std::string>& args) {
  Config cfg;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw UsageError("unexpected argument: " + a);
    std::string key = a.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= args.size()) throw UsageError("missing value for --" + key);
      value = args[++i];
    }
    for (char& c : key) {
      if (c == '-') c = '_';
    }
    cfg.set(key, value);
  }
  return cfg;
}

const char* summary_of(std::string_view name) {
  if (name == "solve") return "value iteration to a Q-table";
  if (name == "train") return "fit a network to a Q-table";
  if (name == "approx") return "per-cell action sets for a grid";
  if (name == "refine") return "split self-reachable cells until progress";
  if (name == "reach") return "reach-set sequence and verdict";
  if (name == "sweep") return "verdict curve over w, delay or accel_scale";
  if (name == "mc-check") return "Monte Carlo containment check";
  if (name == "report") return "occupancy and density matrices";
  return "advisory table, action indices and accepted keys";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reachability verification of neural-network controlled systems"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<CLI::App*> subs;
  for (auto name : nnreach::cli::subcommands()) {
    auto* sub = app.add_subcommand(std::string(name), summary_of(name));
    sub->add_option("--config", config_path, "flat key=value configuration file");
    sub->allow_extras();
    sub->footer("Any configuration key may be given as --key value; it overrides the config file.");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : nnreach::cli::kExitUsage;
  }
  CLI::App* chosen = nullptr;
  for (auto* s : subs) {
    if (s->parsed()) chosen = s;
  }
  try {
    Config cfg;
    if (!config_path.empty()) cfg = Config::load(config_path);
    cfg.merge(parse_overrides(chosen->remaining()));
    return nnreach::cli::run_subcommand(chosen->get_name(), cfg, std::cout);
  } catch (const std::exception& e) {
    const int code = nnreach::cli::exit_code_for(e);
    std::cerr << (code == nnreach::cli::kExitUsage ? "usage error: " : "internal error: ") << e.what() << '\n';
    return code;
  }
}
