#include "pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "nnreach/error.hpp"
#include "nnreach/mdp.hpp"
#include "nnreach/reach.hpp"
#include "nnreach/text.hpp"
#include "nnreach/verify.hpp"

namespace nnreach::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Keys
// ---------------------------------------------------------------------------

constexpr std::string_view kSubcommands[] = {"solve", "train",   "approx", "refine",  "reach",
                                             "sweep", "mc-check", "report", "describe"};

using KeyList = std::vector<std::string_view>;

const KeyList kCommon = {"system", "out", "workers"};
const KeyList kSolve = {"tol", "max_iters", "mdp_points", "nmac", "alert", "reversal", "strengthen",
                        "weak_to_strong", "penalty_band"};
const KeyList kGrid = {"cells", "grid_in", "tau_max"};
const KeyList kSource = {"source", "qtable", "actions", "network", "networks", "method", "budget", "samples", "seed"};
const KeyList kDyn = {"w", "accel_scale"};
const KeyList kReach = {"horizon", "fixed_point_stop", "initial_box", "tau0", "delay", "reversal_limit", "advisory"};
// Monte Carlo starts cover the whole domain, so simulating commands take no initial_box.
const KeyList kReachNoInit = {"horizon", "fixed_point_stop", "tau0", "delay", "reversal_limit", "advisory"};
const KeyList kSim = {"sims", "mode", "seed", "step_cap"};
const KeyList kTrain = {"qtable", "arch", "epochs", "batch", "lr", "lr_decay", "lambda", "optimizer", "seed",
                        "advisory", "min_accuracy"};
const KeyList kRefine = {"criterion", "max_rounds", "pixels"};

KeyList merge_keys(std::initializer_list<const KeyList*> lists) {
  KeyList out;
  for (const auto* l : lists) out.insert(out.end(), l->begin(), l->end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const std::map<std::string_view, KeyList>& key_table() {
  static const std::map<std::string_view, KeyList> table = [] {
    std::map<std::string_view, KeyList> t;
    const KeyList write_sets = {"write_sets"};
    const KeyList sweep = {"sweep", "values", "refine_rounds", "refine_w", "criterion", "max_rounds"};
    const KeyList report = {"times", "pixels"};
    const KeyList grid_out = {"grid_out"};
    t["solve"] = merge_keys({&kCommon, &kSolve});
    t["train"] = merge_keys({&kCommon, &kSolve, &kTrain});
    t["approx"] = merge_keys({&kCommon, &kSolve, &kGrid, &kSource, &kDyn});
    t["refine"] = merge_keys({&kCommon, &kSolve, &kGrid, &kSource, &kDyn, &kRefine, &grid_out});
    t["reach"] = merge_keys({&kCommon, &kSolve, &kGrid, &kSource, &kDyn, &kReach, &write_sets});
    t["sweep"] = merge_keys({&kCommon, &kSolve, &kGrid, &kSource, &kDyn, &kReachNoInit, &kSim, &sweep});
    t["mc-check"] = merge_keys({&kCommon, &kSolve, &kGrid, &kSource, &kDyn, &kReachNoInit, &kSim});
    t["report"] = merge_keys({&kCommon, &kSolve, &kGrid, &kSource, &kDyn, &kReach, &report});
    t["describe"] = merge_keys({&kCommon, &kDyn});
    return t;
  }();
  return table;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

class Artifacts {
 public:
  Artifacts(const Config& cfg, std::string_view command)
      : dir_(cfg.str("out", "out")), hash_(cfg.hash()), command_(command) {
    fs::create_directories(dir_);
  }

  const std::string& hash() const { return hash_; }
  fs::path path(const std::string& rel) const { return dir_ / rel; }

  std::string header(std::string_view kind) const {
    return "# nnreach " + std::string(kind) + " command=" + command_ + " config_hash=" + hash_ + "\n";
  }

  void text(const std::string& rel, std::string_view kind, const std::string& body) const {
    write(rel, header(kind) + body);
  }

  void summary(const std::string& rel, json body) const {
    json doc;
    doc["command"] = command_;
    doc["config_hash"] = hash_;
    for (auto& [k, v] : body.items()) doc[k] = v;
    write(rel, doc.dump(2) + "\n");
  }

  void matrix(const std::string& rel, std::string_view kind, const std::string& note, const Eigen::MatrixXi& m) const {
    std::ostringstream out;
    out << header(kind);
    if (!note.empty()) out << "# " << note << '\n';
    // Rows run over the second axis (ascending), columns over the first.
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) out << (i ? "," : "") << m(i, j);
      out << '\n';
    }
    write(rel, out.str());
  }

  void write(const std::string& rel, const std::string& content) const {
    const fs::path p = dir_ / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw UsageError("cannot write " + p.string());
    out << content;
    if (!out) throw UsageError("failed writing " + p.string());
  }

 private:
  fs::path dir_;
  std::string hash_;
  std::string command_;
};

std::ifstream open_input(const std::string& path, std::string_view what) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + std::string(what) + " file: " + path);
  return in;
}

// ---------------------------------------------------------------------------
// Systems and settings
// ---------------------------------------------------------------------------

enum class System { mountaincar, verticalcas };

System system_of(const Config& cfg) {
  const std::string s = cfg.str("system", "mountaincar");
  if (s == "mountaincar") return System::mountaincar;
  if (s == "verticalcas") return System::verticalcas;
  throw UsageError("system must be mountaincar or verticalcas, got '" + s + "'");
}

int workers_of(const Config& cfg) {
  const auto w = cfg.integer("workers", 1);
  if (w < 1 || w > 1024) throw UsageError("workers must be in [1, 1024]");
  return static_cast<int>(w);
}

std::uint64_t seed_of(const Config& cfg) {
  const auto s = cfg.integer("seed", 0);
  if (s < 0) throw UsageError("seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

int positive_int(const Config& cfg, const std::string& key, long long fallback, long long min = 1) {
  const auto v = cfg.integer(key, fallback);
  if (v < min || v > 100000000) throw UsageError("key " + key + " out of range");
  return static_cast<int>(v);
}

McConfig mc_config(const Config& cfg) {
  McConfig c;
  c.w = cfg.num("w", 0.0);
  if (!(c.w >= 0.0)) throw UsageError("w must be non-negative");
  return c;
}

VcConfig vc_config(const Config& cfg) {
  VcConfig c;
  c.accel_scale = cfg.num("accel_scale", 1.0);
  if (!(c.accel_scale > 0.0)) throw UsageError("accel_scale must be positive");
  return c;
}

int tau_max_of(const Config& cfg) { return positive_int(cfg, "tau_max", 40); }

VcReachConfig vc_reach_config(const Config& cfg, int workers) {
  VcReachConfig c;
  c.dyn = vc_config(cfg);
  c.tau0 = positive_int(cfg, "tau0", tau_max_of(cfg));
  c.delay = positive_int(cfg, "delay", 0, 0);
  c.reversal_limit = cfg.flag("reversal_limit", false);
  c.initial_advisory = advisory_from_name(cfg.str("advisory", "COC"));
  c.workers = workers;
  return c;
}

std::string advisory_label(Advisory a) { return std::string(advisory_info(a).name); }

// ---------------------------------------------------------------------------
// Q-tables, networks, grids, action maps
// ---------------------------------------------------------------------------

struct SolveOutcome {
  QTable table;
  std::optional<ValueIterationResult> stats;
};

MdpSpec mdp_spec(const Config& cfg, System sys) {
  if (sys == System::mountaincar) return mountain_car_spec(McConfig{}, positive_int(cfg, "mdp_points", 100, 2));
  VcRewardParams p;
  p.nmac = cfg.num("nmac", p.nmac);
  p.alert = cfg.num("alert", p.alert);
  p.reversal = cfg.num("reversal", p.reversal);
  p.strengthen = cfg.num("strengthen", p.strengthen);
  p.weak_to_strong = cfg.num("weak_to_strong", p.weak_to_strong);
  p.penalty_band = cfg.num("penalty_band", p.penalty_band);
  return verticalcas_spec(p);
}

SolveOutcome solve_table(const Config& cfg, System sys, int workers) {
  const double tol = cfg.num("tol", 1e-9);
  if (!(tol > 0.0)) throw UsageError("tol must be positive");
  auto result = value_iteration(mdp_spec(cfg, sys), tol, positive_int(cfg, "max_iters", 1000), workers);
  QTable table = result.table;
  return {std::move(table), std::move(result)};
}

/// The configured Q-table, or a freshly solved one when no file is given.
QTable obtain_table(const Config& cfg, System sys, int workers) {
  if (cfg.has("qtable")) {
    auto in = open_input(cfg.require("qtable"), "qtable");
    return load_qtable(in);
  }
  return solve_table(cfg, sys, workers).table;
}

Network load_net(const std::string& path) {
  { open_input(path, "network"); }
  return load_network_file(path);
}

enum class Source { tabular, map, network };

Source source_of(const Config& cfg) {
  const std::string fallback = cfg.has("actions") ? "map" : (cfg.has("network") || cfg.has("networks")) ? "network" : "tabular";
  const std::string s = cfg.str("source", fallback);
  if (s == "tabular") return Source::tabular;
  if (s == "map") return Source::map;
  if (s == "network") return Source::network;
  throw UsageError("source must be tabular, map or network, got '" + s + "'");
}

/// Concrete controller: a Q-table or networks (one per advisory for VerticalCAS).
struct Controller {
  Source source = Source::tabular;
  std::optional<QTable> table;
  std::vector<Network> nets;
};

Controller load_controller(const Config& cfg, System sys, int workers, bool need_concrete) {
  Controller c;
  c.source = source_of(cfg);
  if (c.source == Source::map && need_concrete) {
    throw UsageError("this command simulates the controller; use source=tabular or source=network");
  }
  if (c.source == Source::tabular) c.table = obtain_table(cfg, sys, workers);
  if (c.source == Source::network) {
    if (sys == System::mountaincar) {
      c.nets.push_back(load_net(cfg.require("network")));
    } else {
      const auto paths = cfg.strs("networks");
      if (paths.size() != kNumAdvisories) throw UsageError("networks must list 9 files, one per advisory in index order");
      for (const auto& p : paths) c.nets.push_back(load_net(p));
    }
  }
  return c;
}

Grid build_grid(const Config& cfg, System sys) {
  if (cfg.has("grid_in")) {
    auto in = open_input(cfg.require("grid_in"), "grid");
    return read_grid(in);
  }
  if (sys == System::mountaincar) {
    const auto [np, nv] = cfg.dims2("cells", {100, 100});
    const int counts[2] = {np, nv};
    return build_uniform_grid(mc_domain(McConfig{}), counts);
  }
  const auto [nh, nr] = cfg.dims2("cells", {200, 24});
  return vcas_grid(VcConfig{}, nh, nr, tau_max_of(cfg));
}

ApproxOptions approx_options(const Config& cfg, int workers) {
  ApproxOptions o;
  const std::string m = cfg.str("method", "symbolic");
  if (m == "sampling") o.method = ApproxMethod::sampling;
  else if (m == "interval") o.method = ApproxMethod::interval;
  else if (m == "symbolic") o.method = ApproxMethod::symbolic;
  else throw UsageError("method must be sampling, interval or symbolic, got '" + m + "'");
  o.budget = positive_int(cfg, "budget", 12, 0);
  o.samples = positive_int(cfg, "samples", 100, 0);
  o.seed = seed_of(cfg);
  o.workers = workers;
  return o;
}

ActionMap build_actions(const Config& cfg, const Controller& c, const Grid& grid, int workers) {
  switch (c.source) {
    case Source::tabular:
      return tabular_controller(*c.table, grid, workers);
    case Source::network:
      return approximate_controller(c.nets, grid, approx_options(cfg, workers));
    case Source::map: {
      auto in = open_input(cfg.require("actions"), "actions");
      return read_action_map(in, grid);
    }
  }
  throw std::logic_error("unreachable");
}

McController mc_controller(const Controller& c) {
  if (c.table) return mc_tabular_controller(*c.table);
  return mc_network_controller(c.nets.at(0));
}

VcController vc_controller(const Controller& c) {
  if (c.table) return vcas_tabular_scores(*c.table);
  const auto* nets = &c.nets;
  return [nets](const VcState& s) {
    return evaluate(nets->at(advisory_index(s.adv)), Eigen::Vector3d(s.h, s.hdot0, static_cast<double>(s.tau)));
  };
}

// ---------------------------------------------------------------------------
// Reachability helpers
// ---------------------------------------------------------------------------

std::optional<std::vector<CellId>> initial_cells(const Config& cfg, const Grid& grid) {
  if (!cfg.has("initial_box")) return std::nullopt;
  const auto v = cfg.nums("initial_box", {});
  const auto d = static_cast<std::size_t>(grid.dims());
  if (v.size() != 2 * d) throw UsageError("initial_box needs " + std::to_string(2 * d) + " numbers: lo... hi...");
  Eigen::VectorXd lo(d), hi(d);
  for (std::size_t i = 0; i < d; ++i) {
    lo[i] = v[i];
    hi[i] = v[d + i];
    if (!(lo[i] <= hi[i])) throw UsageError("initial_box: lo must not exceed hi");
  }
  auto cells = cells_intersecting(grid, HyperRect(lo, hi));
  if (cells.empty()) throw UsageError("initial_box meets no cell");
  return cells;
}

ReachResult mc_reach(const Config& cfg, const Grid& grid, const ActionMap& actions, const McConfig& dyn, int workers) {
  ReachConfig rc;
  rc.horizon = positive_int(cfg, "horizon", 1000);
  rc.fixed_point_stop = cfg.flag("fixed_point_stop", true);
  rc.initial = initial_cells(cfg, grid);
  rc.workers = workers;
  return run_reachability(grid, rc, actions, McCellDynamics(dyn));
}

ReachResult vc_reach(const Config& cfg, const Grid& grid, const ActionMap& actions, const VcReachConfig& rc) {
  VcReachConfig c = rc;
  c.initial = initial_cells(cfg, grid);
  return run_vcas_reachability(grid, actions, c);
}

std::string describe_member(System sys, NodeKey key) {
  if (node_cell(key) == kAbsorbingCell) return "goal";
  std::string line = std::to_string(node_cell(key));
  if (sys == System::verticalcas) {
    const VcAug aug = decode_aug(node_tag(key));
    line += " adv=" + advisory_label(aug.current) + " recent=";
    if (aug.recent.empty()) line += "-";
    for (std::size_t i = 0; i < aug.recent.size(); ++i) line += (i ? "," : "") + advisory_label(aug.recent[i]);
    line += " reversals=" + std::to_string(aug.reversals);
    line += std::string(" sense=") + (aug.last_sense == Sense::up ? "up" : aug.last_sense == Sense::down ? "down" : "none");
  }
  return line;
}

std::string box_text(const HyperRect& box) {
  return "[" + join_doubles(box.lo()) + "]..[" + join_doubles(box.hi()) + "]";
}

void write_sets(const Artifacts& art, System sys, const ReachResult& r, int tau0) {
  auto one = [&](const ReachSet& set) {
    std::ostringstream body;
    body << "t=" << set.t << '\n';
    if (sys == System::verticalcas) body << "tau=" << tau0 - set.t << '\n';
    body << "members=" << set.members.size() << '\n';
    for (NodeKey k : set.members) body << describe_member(sys, k) << '\n';
    char name[32];
    std::snprintf(name, sizeof name, "reach/t%04d.txt", set.t);
    art.text(name, "reach-set", body.str());
  };
  one(r.initial);
  for (const auto& s : r.sequence) one(s);
}

json sizes_json(const ReachResult& r) {
  json sizes = json::array();
  sizes.push_back(r.initial.members.size());
  for (const auto& s : r.sequence) sizes.push_back(s.members.size());
  return sizes;
}

json witnesses_json(System sys, const Grid& grid, const std::vector<NodeKey>& w, std::size_t limit = 20) {
  json out = json::array();
  for (std::size_t i = 0; i < w.size() && i < limit; ++i) {
    out.push_back({{"member", describe_member(sys, w[i])}, {"box", box_text(grid.box(node_cell(w[i])))}});
  }
  return out;
}

void print_witness(std::ostream& log, System sys, const Grid& grid, const std::vector<NodeKey>& w) {
  if (w.empty()) return;
  log << "witness=" << describe_member(sys, w.front()) << " box=" << box_text(grid.box(node_cell(w.front())))
      << '\n';
}

struct McVerdict {
  Verdict verdict;
  std::optional<int> certified;
};

McVerdict mc_verdict(const ReachResult& r, const Grid& grid, const McConfig& dyn) {
  const auto goal = mc_goal_predicate(dyn);
  const ReachSet& last = r.sequence.empty() ? r.initial : r.sequence.back();
  McVerdict v{verify_goal_containment(last, grid, goal), std::nullopt};
  if (r.fixed_point) v.certified = certified_steps(r, grid, goal);
  if (!r.fixed_point) v.verdict.pass = false;
  return v;
}

Verdict vc_verdict(const ReachResult& r, const Grid& grid, const VcConfig& dyn) {
  const ReachSet& last = r.sequence.empty() ? r.initial : r.sequence.back();
  return verify_unsafe_exclusion(std::span<const ReachSet>(&last, 1), grid, vcas_unsafe_predicate(dyn));
}

const char* verdict_text(bool pass) { return pass ? "PASS" : "FAIL"; }

json null_or(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

McCheckConfig sim_config(const Config& cfg, int workers, int default_sims, DisturbanceMode default_mode) {
  McCheckConfig mc;
  mc.sims = positive_int(cfg, "sims", default_sims);
  const std::string mode = cfg.str("mode", default_mode == DisturbanceMode::worst ? "worst" : "random");
  if (mode == "worst") mc.mode = DisturbanceMode::worst;
  else if (mode == "random") mc.mode = DisturbanceMode::random;
  else throw UsageError("mode must be worst or random, got '" + mode + "'");
  mc.seed = seed_of(cfg);
  mc.step_cap = positive_int(cfg, "step_cap", 2000);
  mc.workers = workers;
  return mc;
}

std::pair<int, int> pixels_of(const Config& cfg, const Grid& grid) {
  (void)grid;
  return cfg.dims2("pixels", {100, 100});
}

std::string axes_note(const Grid& grid, std::pair<int, int> px) {
  const auto& b = grid.bounds();
  return "columns: " + std::to_string(px.first) + " pixels over axis 0 [" + format_double(b.lo(0)) + "," +
         format_double(b.hi(0)) + "]; rows: " + std::to_string(px.second) + " pixels over axis 1 [" +
         format_double(b.lo(1)) + "," + format_double(b.hi(1)) + "], ascending";
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_solve(const Config& cfg, std::ostream& log) {
  const System sys = system_of(cfg);
  const Artifacts art(cfg, "solve");
  auto outcome = solve_table(cfg, sys, workers_of(cfg));
  std::ostringstream body;
  save_qtable(body, outcome.table);
  art.text("qtable.txt", "qtable", body.str());
  const auto& st = *outcome.stats;
  art.summary("solve.json", {{"system", cfg.str("system", "mountaincar")},
                             {"states", outcome.table.grid.size()},
                             {"actions", outcome.table.num_actions()},
                             {"sweeps", st.sweeps},
                             {"residual", st.residual},
                             {"converged", st.converged},
                             {"residual_increased", st.residual_increased}});
  log << "sweeps=" << st.sweeps << "\nresidual=" << format_double(st.residual)
      << "\nconverged=" << (st.converged ? "true" : "false") << '\n';
  if (!st.converged) log << "warning=value iteration stopped before reaching tol\n";
  if (st.residual_increased) log << "warning=residual increased between sweeps\n";
  return kExitPass;
}

int cmd_train(const Config& cfg, std::ostream& log) {
  const System sys = system_of(cfg);
  const Artifacts art(cfg, "train");
  const QTable table = obtain_table(cfg, sys, workers_of(cfg));
  Dataset data;
  std::string adv_name;
  if (sys == System::mountaincar) {
    data = make_dataset(table);
  } else {
    adv_name = cfg.require("advisory");
    data = make_dataset(table, 3, advisory_index(advisory_from_name(adv_name)));
  }
  std::vector<int> arch{static_cast<int>(data.inputs.rows())};
  const std::string default_hidden = sys == System::mountaincar ? "30,30,30,30,30" : "45,45,45,45,45,45";
  Config hidden_cfg;
  hidden_cfg.set("arch", cfg.str("arch", default_hidden));
  for (double h : hidden_cfg.nums("arch", {})) {
    if (h < 1 || h != static_cast<int>(h)) throw UsageError("arch lists positive integer hidden widths");
    arch.push_back(static_cast<int>(h));
  }
  arch.push_back(static_cast<int>(data.targets.rows()));

  TrainConfig tc;
  tc.epochs = positive_int(cfg, "epochs", tc.epochs);
  tc.batch_size = positive_int(cfg, "batch", tc.batch_size);
  tc.learning_rate = cfg.num("lr", tc.learning_rate);
  tc.lr_decay = cfg.num("lr_decay", tc.lr_decay);
  tc.lambda = cfg.num("lambda", tc.lambda);
  tc.seed = seed_of(cfg);
  const std::string opt = cfg.str("optimizer", "adamax");
  if (opt == "adamax") tc.optimizer = Optimizer::adamax;
  else if (opt == "momentum") tc.optimizer = Optimizer::momentum;
  else throw UsageError("optimizer must be adamax or momentum, got '" + opt + "'");
  if (!(tc.learning_rate > 0.0) || !(tc.lr_decay > 0.0) || !(tc.lambda >= 1.0)) {
    throw UsageError("lr and lr_decay must be positive and lambda >= 1");
  }

  const TrainResult result = train_network(data, arch, tc);
  std::ostringstream body;
  save_network(body, result.net);
  art.text("network.nnet", "network", body.str());
  json arch_json = arch;
  json summary = {{"system", cfg.str("system", "mountaincar")},
                  {"architecture", arch_json},
                  {"samples", data.inputs.cols()},
                  {"epochs", tc.epochs},
                  {"accuracy", result.accuracy},
                  {"mean_abs_error", result.mean_abs_error},
                  {"final_loss", result.loss_history.empty() ? 0.0 : result.loss_history.back()}};
  if (!adv_name.empty()) summary["advisory"] = adv_name;
  const double min_acc = cfg.num("min_accuracy", 0.0);
  const bool pass = result.accuracy >= min_acc;
  summary["verdict"] = verdict_text(pass);
  art.summary("train.json", summary);
  log << "accuracy=" << format_double(result.accuracy) << "\nmean_abs_error=" << format_double(result.mean_abs_error)
      << "\nverdict=" << verdict_text(pass) << '\n';
  return pass ? kExitPass : kExitFail;
}

int cmd_approx(const Config& cfg, std::ostream& log) {
  const System sys = system_of(cfg);
  const int workers = workers_of(cfg);
  const Artifacts art(cfg, "approx");
  const Controller ctrl = load_controller(cfg, sys, workers, false);
  const Grid grid = build_grid(cfg, sys);
  const ActionMap actions = build_actions(cfg, ctrl, grid, workers);
  std::ostringstream body;
  write_action_map(body, actions, grid);
  art.text("actions.txt", "action-map", body.str());
  const std::size_t total = actions.total_actions(grid);
  const double slots = static_cast<double>(grid.size() * grid.layer_count());
  art.summary("approx.json", {{"system", cfg.str("system", "mountaincar")},
                              {"source", cfg.str("source", ctrl.source == Source::tabular ? "tabular"
                                                           : ctrl.source == Source::network ? "network"
                                                                                            : "map")},
                              {"method", ctrl.source == Source::network ? cfg.str("method", "symbolic") : "-"},
                              {"cells", grid.size()},
                              {"layers", grid.layer_count()},
                              {"total_actions", total},
                              {"mean_actions", static_cast<double>(total) / slots}});
  log << "cells=" << grid.size() << "\ntotal_actions=" << total << '\n';
  return kExitPass;
}

int cmd_refine(const Config& cfg, std::ostream& log) {
  const System sys = system_of(cfg);
  if (sys != System::mountaincar) throw UsageError("refine supports system=mountaincar");
  const int workers = workers_of(cfg);
  const Artifacts art(cfg, "refine");
  const Controller ctrl = load_controller(cfg, sys, workers, true);
  const Grid grid = build_grid(cfg, sys);
  const McConfig dyn = mc_config(cfg);
  const std::string crit = cfg.str("criterion", "self_reachable");
  RefineCriterion criterion;
  if (crit == "self_reachable") criterion = RefineCriterion::self_reachable;
  else if (crit == "cycles") criterion = RefineCriterion::cycles;
  else throw UsageError("criterion must be self_reachable or cycles, got '" + crit + "'");
  const ControllerFn controller = [&](const Grid& g) { return build_actions(cfg, ctrl, g, workers); };
  const auto report = refine_until_progress(grid, controller, McCellDynamics(dyn), positive_int(cfg, "max_rounds", 30, 0),
                                            mc_goal_predicate(dyn), criterion, workers);
  std::ostringstream g;
  write_grid(g, report.grid);
  if (cfg.has("grid_out")) {
    std::ofstream out(cfg.require("grid_out"));
    if (!out) throw UsageError("cannot write grid_out: " + cfg.require("grid_out"));
    out << art.header("grid") << g.str();
  }
  art.text("grid.txt", "grid", g.str());
  std::ostringstream a;
  write_action_map(a, report.actions, report.grid);
  art.text("actions.txt", "action-map", a.str());
  const auto px = cfg.dims2("pixels", {50, 50});
  art.matrix("density.csv", "density", "cells per pixel; " + axes_note(report.grid, px),
             density_matrix(report.grid, px.first, px.second));
  art.summary("refine.json", {{"system", "mountaincar"},
                              {"criterion", crit},
                              {"rounds", report.rounds},
                              {"flagged", report.flagged},
                              {"remaining", report.remaining.size()},
                              {"floor_reached", report.floor_reached},
                              {"cells", report.grid.size()},
                              {"total_actions", report.actions.total_actions(report.grid)}});
  log << "rounds=" << report.rounds << "\ncells=" << report.grid.size() << "\nremaining=" << report.remaining.size()
      << "\nfloor_reached=" << (report.floor_reached ? "true" : "false") << '\n';
  return kExitPass;
}

int cmd_reach(const Config& cfg, std::ostream& log) {
  const System sys = system_of(cfg);
  const int workers = workers_of(cfg);
  const Artifacts art(cfg, "reach");
  const Controller ctrl = load_controller(cfg, sys, workers, false);
  const Grid grid = build_grid(cfg, sys);
  const ActionMap actions = build_actions(cfg, ctrl, grid, workers);
  json summary;
  summary["system"] = cfg.str("system", "mountaincar");
  summary["cells"] = grid.size();
  summary["total_actions"] = actions.total_actions(grid);
  bool pass = false;
  if (sys == System::mountaincar) {
    const McConfig dyn = mc_config(cfg);
    const ReachResult r = mc_reach(cfg, grid, actions, dyn, workers);
    const McVerdict v = mc_verdict(r, grid, dyn);
    pass = v.verdict.pass;
    if (cfg.flag("write_sets", true)) write_sets(art, sys, r, 0);
    summary["w"] = dyn.w;
    summary["steps"] = r.sequence.size();
    summary["fixed_point"] = null_or(r.fixed_point);
    summary["certified_steps"] = null_or(v.certified);
    summary["sizes"] = sizes_json(r);
    summary["verdict"] = verdict_text(pass);
    summary["witness_count"] = v.verdict.witnesses.size();
    summary["witnesses"] = witnesses_json(sys, grid, v.verdict.witnesses);
    log << "steps=" << r.sequence.size() << "\ncertified_steps=" << (v.certified ? std::to_string(*v.certified) : "none")
        << '\n';
    if (!pass) print_witness(log, sys, grid, v.verdict.witnesses);
  } else {
    const VcReachConfig rc = vc_reach_config(cfg, workers);
    const ReachResult r = vc_reach(cfg, grid, actions, rc);
    const Verdict v = vc_verdict(r, grid, rc.dyn);
    pass = v.pass;
    if (cfg.flag("write_sets", true)) write_sets(art, sys, r, rc.tau0);
    summary["accel_scale"] = rc.dyn.accel_scale;
    summary["delay"] = rc.delay;
    summary["reversal_limit"] = rc.reversal_limit;
    summary["tau0"] = rc.tau0;
    summary["sizes"] = sizes_json(r);
    const ReachSet& last = r.sequence.empty() ? r.initial : r.sequence.back();
    summary["final_cells"] = last.cells().size();
    summary["verdict"] = verdict_text(pass);
    summary["witness_count"] = v.witnesses.size();
    summary["witnesses"] = witnesses_json(sys, grid, v.witnesses);
    log << "final_cells=" << last.cells().size() << "\nwitness_count=" << v.witnesses.size() << '\n';
    if (!pass) print_witness(log, sys, grid, v.witnesses);
  }
  art.summary("reach.json", summary);
  log << "verdict=" << verdict_text(pass) << '\n';
  return pass ? kExitPass : kExitFail;
}

/// R_t(a) subset of R_t(b) for every t where both are defined.
bool nested(const ReachResult& a, const ReachResult& b) {
  const int len = static_cast<int>(std::max(a.sequence.size(), b.sequence.size()));
  for (int t = 0; t <= len; ++t) {
    const ReachSet* sa = a.at(t);
    const ReachSet* sb = b.at(t);
    if (!sa || !sb) continue;
    if (!std::includes(sb->members.begin(), sb->members.end(), sa->members.begin(), sa->members.end())) return false;
  }
  return true;
}

int cmd_sweep_mc(const Config& cfg, std::ostream& log) {
  const int workers = workers_of(cfg);
  const Artifacts art(cfg, "sweep");
  if (cfg.str("sweep", "w") != "w") throw UsageError("mountaincar sweeps run over w");
  auto ws = cfg.nums("values", {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3});
  for (double w : ws) {
    if (!(w >= 0.0)) throw UsageError("values must be non-negative disturbance bounds");
  }
  std::sort(ws.begin(), ws.end());
  const Controller ctrl = load_controller(cfg, System::mountaincar, workers, true);
  Grid grid = build_grid(cfg, System::mountaincar);
  const int refine_rounds = positive_int(cfg, "refine_rounds", 0, 0);
  json refine_json = nullptr;
  if (refine_rounds > 0) {
    McConfig rdyn;
    rdyn.w = cfg.num("refine_w", 0.0);
    const ControllerFn controller = [&](const Grid& g) { return build_actions(cfg, ctrl, g, workers); };
    auto rep = refine_until_progress(grid, controller, McCellDynamics(rdyn), refine_rounds, mc_goal_predicate(rdyn),
                                     RefineCriterion::self_reachable, workers);
    grid = rep.grid;
    refine_json = {{"w", rdyn.w}, {"rounds", rep.rounds}, {"flagged", rep.flagged}, {"cells", grid.size()}};
  }
  const ActionMap actions = build_actions(cfg, ctrl, grid, workers);
  const McController controller = mc_controller(ctrl);
  const McCheckConfig sim = sim_config(cfg, workers, 1000, DisturbanceMode::worst);

  std::ostringstream csv;
  csv << "w,certified,max_steps,mc_max_steps,mc_non_terminating,mc_violations,final_cells,fixed_point\n";
  json rows = json::array();
  std::optional<double> w_star;
  bool prefix = true;
  bool monotone = true;
  bool dominates = true;
  std::optional<ReachResult> prev;
  for (double w : ws) {
    McConfig dyn;
    dyn.w = w;
    ReachResult r = mc_reach(cfg, grid, actions, dyn, workers);
    const McVerdict v = mc_verdict(r, grid, dyn);
    const bool certified = v.verdict.pass && v.certified.has_value();
    const auto mc = monte_carlo_check(controller, dyn, sim, grid, mc_goal_predicate(dyn), &r);
    if (prev && !nested(*prev, r)) monotone = false;
    if (certified && mc.max_steps_to_goal_cell > *v.certified) dominates = false;
    if (certified && prefix) w_star = w;
    if (!certified) prefix = false;
    const ReachSet& last = r.sequence.empty() ? r.initial : r.sequence.back();
    csv << format_double(w) << ',' << (certified ? 1 : 0) << ',' << (certified ? std::to_string(*v.certified) : "")
        << ',' << mc.max_steps_to_goal_cell << ',' << mc.non_terminating << ',' << mc.violations << ','
        << last.members.size() << ',' << (r.fixed_point ? std::to_string(*r.fixed_point) : "") << '\n';
    rows.push_back({{"w", w},
                    {"certified", certified},
                    {"max_steps", null_or(v.certified)},
                    {"mc_max_steps", mc.max_steps_to_goal_cell},
                    {"mc_non_terminating", mc.non_terminating},
                    {"mc_violations", mc.violations},
                    {"final_cells", last.members.size()}});
    log << "w=" << format_double(w) << " certified=" << (certified ? "yes" : "no")
        << " max_steps=" << (certified ? std::to_string(*v.certified) : "-") << " mc_max_steps=" << mc.max_steps_to_goal_cell
        << '\n';
    prev = std::move(r);
  }
  art.text("sweep.csv", "sweep", csv.str());
  art.summary("sweep.json", {{"system", "mountaincar"},
                             {"cells", grid.size()},
                             {"refinement", refine_json},
                             {"mode", sim.mode == DisturbanceMode::worst ? "worst" : "random"},
                             {"sims", sim.sims},
                             {"w_star", w_star ? json(*w_star) : json(nullptr)},
                             {"monotone_in_w", monotone},
                             {"certified_dominates_mc", dominates},
                             {"rows", rows}});
  log << "w_star=" << (w_star ? format_double(*w_star) : "none") << "\nmonotone_in_w=" << (monotone ? "true" : "false")
      << '\n';
  return kExitPass;
}

int cmd_sweep_vc(const Config& cfg, std::ostream& log) {
  const int workers = workers_of(cfg);
  const Artifacts art(cfg, "sweep");
  const std::string over = cfg.str("sweep", "delay");
  if (over != "delay" && over != "accel_scale") throw UsageError("verticalcas sweeps run over delay or accel_scale");
  const auto values = cfg.nums("values", over == "delay" ? std::vector<double>{0, 1, 2, 3} : std::vector<double>{1.0, 1.5});
  const Controller ctrl = load_controller(cfg, System::verticalcas, workers, false);
  const Grid grid = build_grid(cfg, System::verticalcas);
  const ActionMap actions = build_actions(cfg, ctrl, grid, workers);
  std::ostringstream csv;
  csv << over << ",verdict,witnesses,final_cells,final_members\n";
  json rows = json::array();
  for (double value : values) {
    VcReachConfig rc = vc_reach_config(cfg, workers);
    if (over == "delay") {
      if (value < 0 || value > kMaxDelay || value != static_cast<int>(value)) throw UsageError("delay values must be integers in [0, 4]");
      rc.delay = static_cast<int>(value);
    } else {
      if (!(value > 0.0)) throw UsageError("accel_scale values must be positive");
      rc.dyn.accel_scale = value;
    }
    const ReachResult r = vc_reach(cfg, grid, actions, rc);
    const Verdict v = vc_verdict(r, grid, rc.dyn);
    const ReachSet& last = r.sequence.empty() ? r.initial : r.sequence.back();
    csv << format_double(value) << ',' << verdict_text(v.pass) << ',' << v.witnesses.size() << ','
        << last.cells().size() << ',' << last.members.size() << '\n';
    rows.push_back({{over, value},
                    {"verdict", verdict_text(v.pass)},
                    {"witnesses", v.witnesses.size()},
                    {"final_cells", last.cells().size()},
                    {"final_members", last.members.size()}});
    log << over << '=' << format_double(value) << " verdict=" << verdict_text(v.pass) << '\n';
  }
  art.text("sweep.csv", "sweep", csv.str());
  art.summary("sweep.json", {{"system", "verticalcas"}, {"sweep", over}, {"cells", grid.size()}, {"rows", rows}});
  return kExitPass;
}

int cmd_sweep(const Config& cfg, std::ostream& log) {
  return system_of(cfg) == System::mountaincar ? cmd_sweep_mc(cfg, log) : cmd_sweep_vc(cfg, log);
}

int cmd_mc_check(const Config& cfg, std::ostream& log) {
  const System sys = system_of(cfg);
  const int workers = workers_of(cfg);
  const Artifacts art(cfg, "mc-check");
  const Controller ctrl = load_controller(cfg, sys, workers, true);
  const Grid grid = build_grid(cfg, sys);
  const ActionMap actions = build_actions(cfg, ctrl, grid, workers);
  const McCheckConfig sim = sim_config(cfg, workers, 10000, DisturbanceMode::random);
  json summary;
  summary["system"] = cfg.str("system", "mountaincar");
  summary["mode"] = sim.mode == DisturbanceMode::worst ? "worst" : "random";
  summary["sims"] = sim.sims;
  bool pass = false;
  if (sys == System::mountaincar) {
    const McConfig dyn = mc_config(cfg);
    const ReachResult r = mc_reach(cfg, grid, actions, dyn, workers);
    const auto rep = monte_carlo_check(mc_controller(ctrl), dyn, sim, grid, mc_goal_predicate(dyn), &r);
    pass = rep.violations == 0;
    summary["w"] = dyn.w;
    summary["checked_states"] = rep.checked_states;
    summary["violations"] = rep.violations;
    summary["first_violation"] =
        rep.first_violation ? json{{"t", rep.first_violation->first}, {"cell", rep.first_violation->second}} : json(nullptr);
    summary["max_steps_to_goal_cell"] = rep.max_steps_to_goal_cell;
    summary["max_steps_to_goal"] = rep.max_steps_to_goal;
    summary["non_terminating"] = rep.non_terminating;
    log << "checked_states=" << rep.checked_states << "\nviolations=" << rep.violations
        << "\nmax_steps_to_goal=" << rep.max_steps_to_goal << '\n';
    if (rep.first_violation) {
      log << "witness=t" << rep.first_violation->first << " cell " << rep.first_violation->second << '\n';
    }
  } else {
    const VcReachConfig rc = vc_reach_config(cfg, workers);
    const ReachResult r = vc_reach(cfg, grid, actions, rc);
    const auto rep = vcas_monte_carlo(vc_controller(ctrl), rc, sim, grid, actions, &r);
    pass = rep.violations == 0;
    summary["accel_scale"] = rc.dyn.accel_scale;
    summary["delay"] = rc.delay;
    summary["reversal_limit"] = rc.reversal_limit;
    summary["checked_states"] = rep.checked_states;
    summary["violations"] = rep.violations;
    summary["first_violation"] = rep.first_violation ? json{{"t", rep.first_violation->first},
                                                            {"member", describe_member(sys, rep.first_violation->second)}}
                                                      : json(nullptr);
    summary["nmacs"] = rep.nmacs;
    log << "checked_states=" << rep.checked_states << "\nviolations=" << rep.violations << "\nnmacs=" << rep.nmacs
        << '\n';
    if (rep.first_violation) {
      log << "witness=t" << rep.first_violation->first << ' ' << describe_member(sys, rep.first_violation->second)
          << '\n';
    }
  }
  summary["verdict"] = verdict_text(pass);
  art.summary("mc.json", summary);
  log << "verdict=" << verdict_text(pass) << '\n';
  return pass ? kExitPass : kExitFail;
}

int cmd_report(const Config& cfg, std::ostream& log) {
  const System sys = system_of(cfg);
  const int workers = workers_of(cfg);
  const Artifacts art(cfg, "report");
  const Controller ctrl = load_controller(cfg, sys, workers, false);
  const Grid grid = build_grid(cfg, sys);
  const ActionMap actions = build_actions(cfg, ctrl, grid, workers);
  ReachResult r;
  int tau0 = 0;
  if (sys == System::mountaincar) {
    r = mc_reach(cfg, grid, actions, mc_config(cfg), workers);
  } else {
    const VcReachConfig rc = vc_reach_config(cfg, workers);
    tau0 = rc.tau0;
    r = vc_reach(cfg, grid, actions, rc);
  }
  const int last_t = static_cast<int>(r.sequence.size());
  std::vector<int> times;
  if (cfg.has("times")) {
    for (double t : cfg.nums("times", {})) {
      if (t < 0 || t != static_cast<int>(t)) throw UsageError("times must be non-negative integers");
      times.push_back(static_cast<int>(t));
    }
  } else {
    for (int t = 0; t <= last_t; ++t) times.push_back(t);
  }
  const auto px = pixels_of(cfg, grid);
  json files = json::array();
  for (int t : times) {
    const ReachSet* set = r.at(t);
    if (!set) throw UsageError("time " + std::to_string(t) + " is past the end of a run without a fixed point");
    char name[40];
    std::snprintf(name, sizeof name, "occupancy_t%04d.csv", t);
    std::string note = "t=" + std::to_string(t);
    if (sys == System::verticalcas) note += " tau=" + std::to_string(tau0 - t);
    note += "; 1 where the cell under the pixel centre is reachable; " + axes_note(grid, px);
    art.matrix(name, "occupancy", note, occupancy_matrix(grid, *set, px.first, px.second));
    files.push_back({{"t", t}, {"file", name}, {"members", set->members.size()}, {"cells", set->cells().size()}});
  }
  art.matrix("density.csv", "density", "cells per pixel; " + axes_note(grid, px),
             density_matrix(grid, px.first, px.second));
  art.summary("report.json", {{"system", cfg.str("system", "mountaincar")},
                              {"cells", grid.size()},
                              {"steps", last_t},
                              {"fixed_point", null_or(r.fixed_point)},
                              {"pixels", {px.first, px.second}},
                              {"occupancy", files},
                              {"density", "density.csv"}});
  log << "steps=" << last_t << "\nmatrices=" << times.size() << '\n';
  return kExitPass;
}

int cmd_describe(const Config& cfg, std::ostream& log) {
  const VcConfig vc = vc_config(cfg);
  const McConfig mc = mc_config(cfg);
  json advisories = json::array();
  for (std::size_t i = 0; i < kNumAdvisories; ++i) {
    const Advisory a = advisory_from_index(i);
    const auto& info = advisory_info(a);
    const auto [lo, hi] = vcas_accel_interval(a, 0.0, vc);
    advisories.push_back({{"index", i},
                          {"name", info.name},
                          {"sense", info.sense == Sense::up ? "up" : info.sense == Sense::down ? "down" : "none"},
                          {"target_fpm", a == Advisory::COC ? json(nullptr) : json(info.target_fpm)},
                          {"strengthened", info.strengthened},
                          {"accel_at_level_flight_ftps2", {lo, hi}}});
  }
  json commands = json::object();
  for (auto name : kSubcommands) commands[std::string(name)] = key_table().at(name);
  json doc = {{"mountaincar",
               {{"actions", {{{"index", 0}, {"u", -1}}, {{"index", 1}, {"u", 0}}, {{"index", 2}, {"u", 1}}}},
                {"p_range", {mc.p_min, mc.p_goal}},
                {"v_range", {-mc.v_max, mc.v_max}},
                {"power", mc.power},
                {"gravity", mc.gravity},
                {"w", mc.w}}},
              {"verticalcas",
               {{"advisories", advisories},
                {"h_range_ft", {-vc.h_max, vc.h_max}},
                {"hdot_range_fpm", {-vc.hdot_max, vc.hdot_max}},
                {"nmac_ft", vc.nmac_h},
                {"accel_scale", vc.accel_scale}}},
              {"commands", commands}};
  if (cfg.has("out")) {
    const Artifacts art(cfg, "describe");
    art.summary("describe.json", doc);
  }
  log << doc.dump(2) << '\n';
  return kExitPass;
}

}  // namespace

std::span<const std::string_view> subcommands() { return kSubcommands; }

std::span<const std::string_view> known_keys(std::string_view subcommand) {
  const auto& t = key_table();
  const auto it = t.find(subcommand);
  if (it == t.end()) throw UsageError("unknown subcommand: " + std::string(subcommand));
  return it->second;
}

int run_subcommand(std::string_view subcommand, const Config& cfg, std::ostream& log) {
  cfg.check_known(known_keys(subcommand));
  if (subcommand == "solve") return cmd_solve(cfg, log);
  if (subcommand == "train") return cmd_train(cfg, log);
  if (subcommand == "approx") return cmd_approx(cfg, log);
  if (subcommand == "refine") return cmd_refine(cfg, log);
  if (subcommand == "reach") return cmd_reach(cfg, log);
  if (subcommand == "sweep") return cmd_sweep(cfg, log);
  if (subcommand == "mc-check") return cmd_mc_check(cfg, log);
  if (subcommand == "report") return cmd_report(cfg, log);
  if (subcommand == "describe") return cmd_describe(cfg, log);
  throw UsageError("unknown subcommand: " + std::string(subcommand));
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const ParseError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
      dynamic_cast<const NotFound*>(&e)) {
    return kExitUsage;
  }
  return kExitInternal;
}

}  // namespace nnreach::cli
