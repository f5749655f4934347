// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "config.hpp"
#include "nnreach/mdp.hpp"
#include "nnreach/reach.hpp"
#include "nnreach/verify.hpp"
#include "pipeline.hpp"
#include "support.hpp"

using namespace nnreach;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Pinned tolerances.
constexpr double kPolytopeTol = 1e-12;      // criterion 2: half-space violation allowed for rounding
constexpr double kDominanceSlack = 1e-12;   // criterion 4: symbolic vs interval, relative to 1 + |bound|
constexpr double kResidualTol = 1e-6;       // criterion 6
constexpr double kInterpTol = 1e-12;        // criterion 6
constexpr double kGradientRelTol = 1e-4;    // criterion 7
constexpr double kConstantTargetTol = 1e-2; // criterion 7
constexpr double kMinAccuracy = 0.90;       // criterion 7

struct Outcome {
  bool pass = false;
  std::vector<std::string> notes;
  void note(const std::string& s) { notes.push_back(s); }
};

struct Context {
  fs::path root;
  int workers = 1;
  // The trained mountain-car network is shared by criteria 3 and 7.
  std::optional<TrainResult> trained;
  std::optional<QTable> mc_table;
};

std::string fmt(double x, int prec = 6) {
  std::ostringstream s;
  s << std::setprecision(prec) << x;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

int run_cli(const std::string& sub, const std::map<std::string, std::string>& kv, const fs::path& out, int workers) {
  cli::Config cfg;
  for (const auto& [k, v] : kv) cfg.set(k, v);
  cfg.set("out", out.string());
  cfg.set("workers", std::to_string(workers));
  std::ostringstream log;
  return cli::run_subcommand(sub, cfg, log);
}

const QTable& mc_table(Context& ctx) {
  if (!ctx.mc_table) ctx.mc_table = value_iteration(mountain_car_spec(), 1e-9, 1000, ctx.workers).table;
  return *ctx.mc_table;
}

// ---------------------------------------------------------------------------
// Pipelines shared with the determinism criterion
// ---------------------------------------------------------------------------

const std::vector<std::string> kC1W = {"0", "0.1", "0.25"};
const std::vector<double> kC5W = {0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
const std::string kC5Box = "0.2,0.04,0.6,0.07";

void pipeline_c1(const fs::path& dir, int workers) {
  for (const auto& w : kC1W) {
    run_cli("mc-check",
            {{"system", "mountaincar"}, {"cells", "100x100"}, {"w", w}, {"sims", "10000"}, {"mode", "random"},
             {"seed", "1"}},
            dir / ("w" + w), workers);
  }
}

void pipeline_c5(const fs::path& dir, int workers) {
  run_cli("sweep",
          {{"system", "mountaincar"}, {"cells", "100x100"}, {"values", "0,0.05,0.1,0.15,0.2,0.25,0.3"},
           {"refine_rounds", "30"}, {"refine_w", "0"}, {"sims", "1000"}, {"seed", "5"}},
          dir / "sweep", workers);
  for (double w : kC5W) {
    run_cli("reach", {{"system", "mountaincar"}, {"cells", "100x100"}, {"w", fmt(w)}, {"initial_box", kC5Box}},
            dir / ("box_w" + fmt(w)), workers);
  }
}

const std::map<std::string, std::string> kVcBase = {
    {"system", "verticalcas"}, {"cells", "200x24"}, {"tau0", "40"}};

void pipeline_c8(const fs::path& dir, int workers) {
  run_cli("solve", {{"system", "verticalcas"}, {"nmac", "100"}, {"penalty_band", "150"}}, dir / "solve", workers);
  auto with = [&](std::map<std::string, std::string> extra) {
    auto kv = kVcBase;
    kv["qtable"] = (dir / "solve" / "qtable.txt").string();
    for (auto& [k, v] : extra) kv[k] = v;
    return kv;
  };
  run_cli("reach", with({}), dir / "nominal", workers);
  run_cli("sweep", with({{"sweep", "accel_scale"}, {"values", "1,1.5"}}), dir / "accel", workers);
  run_cli("sweep", with({{"sweep", "delay"}, {"values", "0,1,2,3"}}), dir / "delay", workers);
  run_cli("reach", with({{"delay", "3"}, {"reversal_limit", "true"}}), dir / "delay3_limit", workers);
  run_cli("reach", with({{"reversal_limit", "true"}}), dir / "limit", workers);
}

// Runs a pipeline in a fixed staging directory and moves the result to `dest`. Input paths
// (e.g. the Q-table) are part of the config hash, so runs compared byte for byte must share them.
void staged(const fs::path& root, const std::function<void(const fs::path&, int)>& pipeline, const fs::path& dest,
            int workers) {
  const fs::path stage = root / "stage";
  fs::remove_all(stage);
  pipeline(stage, workers);
  fs::remove_all(dest);
  fs::create_directories(dest.parent_path());
  fs::rename(stage, dest);
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Outcome criterion1(Context& ctx) {
  Outcome o;
  const fs::path dir = ctx.root / "w1" / "c1";
  staged(ctx.root, pipeline_c1, dir, 1);
  o.pass = true;
  for (const auto& w : kC1W) {
    const json s = read_json(dir / ("w" + w) / "mc.json");
    const auto violations = s["violations"].get<std::size_t>();
    const auto checked = s["checked_states"].get<std::size_t>();
    o.pass = o.pass && violations == 0 && checked > 0 && s["sims"] == 10000;
    o.note("w=" + w + " sims=10000 checked_states=" + std::to_string(checked) +
           " violations=" + std::to_string(violations));
  }
  return o;
}

Outcome criterion2(Context&) {
  Outcome o;
  const McConfig base;
  const Grid grid = build_uniform_grid(mc_domain(base), std::vector<int>{100, 100});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t violations = 0, samples = 0;
  double worst = -1.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Cell& cell = grid.cells()[rng() % grid.size()];
    const int u = static_cast<int>(rng() % 3) - 1;
    McConfig cfg = base;
    cfg.w = 0.3 * unit(rng);
    const Polytope poly = mc_reach_polytope(cell.box, u, cfg);
    for (int k = 0; k < 500; ++k) {
      const Eigen::VectorXd x = testing::sample_in(rng, cell.box);
      const double delta = cfg.w * (2.0 * unit(rng) - 1.0);
      const McState n = mc_step({x[0], x[1]}, u, delta, cfg);
      const double viol = poly.max_violation(Eigen::Vector2d(n.p, n.v));
      worst = std::max(worst, viol);
      ++samples;
      if (viol > kPolytopeTol) ++violations;
    }
  }
  o.pass = violations == 0;
  o.note("triples=1000 samples=" + std::to_string(samples) + " violations=" + std::to_string(violations) +
         " max_violation=" + fmt(worst, 3) + " tol=" + fmt(kPolytopeTol));
  return o;
}

const TrainResult& trained_net(Context& ctx) {
  if (!ctx.trained) {
    const Dataset data = make_dataset(mc_table(ctx));
    const int arch[] = {2, 30, 30, 30, 30, 30, 3};
    TrainConfig cfg;
    ctx.trained = train_network(data, arch, cfg);
  }
  return *ctx.trained;
}

Outcome criterion3(Context& ctx) {
  Outcome o;
  const Network& net = trained_net(ctx).net;
  const Grid grid = build_uniform_grid(mc_domain(), std::vector<int>{100, 100});
  VerifyOptions opts;
  opts.split_scale = grid.bounds().widths();
  std::mt19937_64 rng(3);
  std::size_t argmax_miss = 0, subset_miss = 0, sampled_total = 0, verified_total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Cell& cell = grid.cells()[rng() % grid.size()];
    const ActionSet verified = action_set_verified(net, cell.box, opts);
    const ActionSet sampled = action_set_sampling(net, cell.box, 100, cell_seed(3, 0, cell.id));
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd x = testing::sample_in(rng, cell.box);
      if (!verified.contains(argmax_action(evaluate(net, x)))) ++argmax_miss;
    }
    if (!sampled.is_subset_of(verified)) ++subset_miss;
    sampled_total += sampled.size();
    verified_total += verified.size();
  }
  o.pass = argmax_miss == 0 && subset_miss == 0 && sampled_total <= verified_total;
  o.note("net 2-30x5-3 cells=1000 samples/cell=100 argmax_outside_verified=" + std::to_string(argmax_miss) +
         " sampled_not_subset=" + std::to_string(subset_miss));
  o.note("action counts: sampled=" + std::to_string(sampled_total) + " verified=" + std::to_string(verified_total));
  return o;
}

Outcome criterion4(Context&) {
  Outcome o;
  std::mt19937_64 rng(4);
  std::size_t outside = 0, not_dominated = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int in = 1 + static_cast<int>(rng() % 4);
    std::vector<int> widths{in};
    const int hidden = 1 + static_cast<int>(rng() % 3);
    for (int l = 0; l < hidden; ++l) widths.push_back(4 + static_cast<int>(rng() % 13));
    widths.push_back(1 + static_cast<int>(rng() % 4));
    const Network net = testing::random_network(rng, widths, 0.7);
    const HyperRect rect = testing::random_rect(rng, in, 0.8);
    const OutputBounds ib = interval_bounds(net, rect);
    const OutputBounds sb = symbolic_bounds(net, rect).concrete;
    Eigen::MatrixXd xs(in, 10000);
    for (Eigen::Index j = 0; j < xs.cols(); ++j) xs.col(j) = testing::sample_in(rng, rect);
    const Eigen::MatrixXd ys = evaluate_batch(net, xs);
    for (Eigen::Index j = 0; j < ys.cols(); ++j) {
      if ((ys.col(j).array() < ib.lo.array()).any() || (ys.col(j).array() > ib.hi.array()).any()) ++outside;
    }
    for (Eigen::Index i = 0; i < ib.lo.size(); ++i) {
      const bool lo_ok = sb.lo[i] >= ib.lo[i] - kDominanceSlack * (1 + std::abs(ib.lo[i]));
      const bool hi_ok = sb.hi[i] <= ib.hi[i] + kDominanceSlack * (1 + std::abs(ib.hi[i]));
      if (!lo_ok || !hi_ok) ++not_dominated;
    }
  }
  o.pass = outside == 0 && not_dominated == 0;
  o.note("pairs=1000 samples/pair=10000 outside_interval=" + std::to_string(outside) +
         " symbolic_not_within_interval=" + std::to_string(not_dominated) + " slack=" + fmt(kDominanceSlack));
  return o;
}

Outcome criterion5(Context& ctx) {
  Outcome o;
  const fs::path dir = ctx.root / "w1" / "c5";
  staged(ctx.root, pipeline_c5, dir, 1);
  const json s = read_json(dir / "sweep" / "sweep.json");
  const bool certified = !s["w_star"].is_null() && s["w_star"].get<double>() >= 0.05;
  const bool monotone = s["monotone_in_w"].get<bool>();
  const bool dominates = s["certified_dominates_mc"].get<bool>();
  o.pass = certified && monotone && dominates;
  o.note("R0 = all cells, refined grid " + s["cells"].dump() + " cells: w_star=" + s["w_star"].dump() +
         " (need >= 0.05)");
  std::string curve;
  for (const auto& row : s["rows"]) {
    curve += " w=" + fmt(row["w"].get<double>()) + ":" + (row["certified"].get<bool>() ? row["max_steps"].dump() : "-") +
             "/" + row["mc_max_steps"].dump();
  }
  o.note("certified/MC-worst max steps:" + curve);
  o.note(std::string("substitute: reach sets monotone in w: ") + (monotone ? "yes" : "NO") +
         ", certified >= MC at every certified w: " + (dominates ? "yes" : "NO"));

  // Counterexample to goal reaching from every state: an exact equilibrium under the policy.
  const QTable& table = mc_table(ctx);
  const McController policy = mc_tabular_controller(table);
  McState st{std::acos(0.6) / 3.0, 0.0};
  const McState start = st;
  int moved_at = -1;
  for (int t = 0; t < 2000; ++t) {
    const McState next = mc_step(st, mc_control(policy(st)), 0.0);
    if (std::abs(next.p - start.p) > 1e-9 || std::abs(next.v) > 1e-9) {
      moved_at = t;
      break;
    }
    st = next;
  }
  o.note("policy at (p=acos(0.6)/3, v=0) is u=" + std::to_string(mc_control(policy(start))) +
         (moved_at < 0 ? "; the state is a fixed point for 2000 steps with delta=0, so no w admits a certificate "
                         "from all cells"
                       : "; the state leaves after " + std::to_string(moved_at) + " steps"));

  // Restricted initial set: certified steps against worst-case and random simulations from it.
  const Grid grid = build_uniform_grid(mc_domain(), std::vector<int>{100, 100});
  std::string restricted;
  bool restricted_dominates = true;
  std::optional<double> restricted_star;
  bool prefix = true;
  for (double w : kC5W) {
    const json r = read_json(dir / ("box_w" + fmt(w)) / "reach.json");
    const bool ok = r["verdict"] == "PASS" && !r["certified_steps"].is_null();
    if (ok && prefix) restricted_star = w;
    if (!ok) prefix = false;
    McConfig dyn;
    dyn.w = w;
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> up(0.2, 0.6), uv(0.04, 0.07), ud(-w, w);
    int mc_max = 0;
    for (int sim = 0; sim < 2000; ++sim) {
      McState x{up(rng), uv(rng)};
      const bool worst = sim % 2 == 0;
      int t = 0;
      while (!mc_at_goal(x, dyn) && t < 2000) {
        const int u = mc_control(policy(x));
        x = mc_step(x, u, worst ? mc_worst_case_disturbance(u, w) : ud(rng), dyn);
        ++t;
      }
      mc_max = std::max(mc_max, t);
    }
    if (ok && r["certified_steps"].get<int>() < mc_max) restricted_dominates = false;
    restricted += " w=" + fmt(w) + ":" + (ok ? r["certified_steps"].dump() : "-") + "/" + std::to_string(mc_max);
  }
  (void)grid;
  o.note("R0 = box p in [0.2,0.6], v in [0.04,0.07]: certified/MC max steps:" + restricted);
  o.note("R0 = box: w_star=" + (restricted_star ? fmt(*restricted_star) : std::string("none")) +
         ", certified >= MC: " + (restricted_dominates ? "yes" : "NO"));
  return o;
}

Outcome criterion6(Context& ctx) {
  Outcome o;
  const auto vi = value_iteration(mountain_car_spec(), 1e-9, 1000, ctx.workers);
  const bool residual_ok = vi.converged && vi.residual < kResidualTol;
  o.note("mountain car: sweeps=" + std::to_string(vi.sweeps) + " residual=" + fmt(vi.residual, 3));

  const QTable& t = vi.table;
  double grid_err = 0.0;
  for (std::size_t i = 0; i < t.grid.size(); i += 7) {
    const MdpPoint p = t.grid.point(i);
    const double s[2] = {p[0], p[1]};
    grid_err = std::max(grid_err, (interpolate_q(t, s) - t.values.row(static_cast<Eigen::Index>(i)).transpose())
                                      .cwiseAbs()
                                      .maxCoeff());
  }
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> up(-1.2, 0.6), uv(-0.07, 0.07);
  double unity_err = 0.0;
  std::vector<std::pair<std::uint32_t, double>> weights;
  for (int k = 0; k < 10000; ++k) {
    const double s[2] = {up(rng), uv(rng)};
    interpolation_weights(t.grid, s, weights);
    double sum = 0.0;
    for (const auto& [idx, wt] : weights) sum += wt;
    unity_err = std::max(unity_err, std::abs(sum - 1.0));
  }
  o.note("interpolation: max error at grid points=" + fmt(grid_err, 3) + " partition-of-unity error=" +
         fmt(unity_err, 3) + " tol=" + fmt(kInterpTol));

  // s0 -> s1 (absorbing), reward -1 until absorbed.
  MdpSpec chain;
  chain.name = "chain";
  chain.grid = StateGrid({{0.0, 1.0}});
  chain.num_actions = 2;
  chain.reward = [](const MdpPoint& s, std::size_t) { return s[0] < 0.5 ? -1.0 : 0.0; };
  chain.kernel = [](const MdpPoint& s, std::size_t, std::vector<Successor>& out) {
    out.clear();
    if (s[0] < 0.5) out.push_back({MdpPoint{1.0, 0, 0, 0}, 1.0});
  };
  const auto cr = value_iteration(chain, 1e-12, 100);
  Eigen::MatrixXd expect(2, 2);
  expect << -1, -1, 0, 0;
  const bool chain_ok = cr.table.values == expect;
  o.note(std::string("2-state chain: Q(s0)=-1, Q(s1)=0 exactly: ") + (chain_ok ? "yes" : "NO"));
  o.pass = residual_ok && grid_err <= kInterpTol && unity_err <= kInterpTol && chain_ok;
  return o;
}

Outcome criterion7(Context& ctx) {
  Outcome o;
  // Gradient check.
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset d;
  d.inputs.resize(2, 64);
  d.targets.resize(3, 64);
  for (Eigen::Index i = 0; i < d.inputs.size(); ++i) d.inputs.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < d.targets.size(); ++i) d.targets.data()[i] = g(rng);
  Network net = testing::random_network(rng, {2, 8, 8, 3});
  Gradient grad;
  loss_and_gradient(net, d, 4.0, grad);
  const double h = 1e-6;
  int checked = 0;
  double worst_rel = 0.0;
  for (int k = 0; k < 500 && checked < 50; ++k) {
    const std::size_t l = rng() % net.num_layers();
    const bool bias = rng() % 4 == 0;
    const std::size_t idx = bias ? rng() % net.biases(l).size() : rng() % net.weights(l).size();
    double& param = bias ? net.biases(l)[static_cast<Eigen::Index>(idx)] : net.weights(l).data()[idx];
    const double analytic = bias ? grad.biases[l][static_cast<Eigen::Index>(idx)] : grad.weights[l].data()[idx];
    const double saved = param;
    param = saved + h;
    const double up = asymmetric_loss(evaluate_batch(net, d.inputs), d.targets, 4.0);
    param = saved - h;
    const double down = asymmetric_loss(evaluate_batch(net, d.inputs), d.targets, 4.0);
    param = saved;
    const double numeric = (up - down) / (2 * h);
    if (std::abs(numeric) < 1e-7) continue;  // dead unit
    worst_rel = std::max(worst_rel, std::abs(analytic - numeric) / std::abs(numeric));
    ++checked;
  }
  const bool grad_ok = checked == 50 && worst_rel < kGradientRelTol;
  o.note("gradient check: params=" + std::to_string(checked) + " max relative error=" + fmt(worst_rel, 3));

  // Constant targets.
  Dataset c;
  c.inputs = Eigen::MatrixXd::Random(2, 256);
  c.targets.resize(3, 256);
  c.targets.row(0).setConstant(0.7);
  c.targets.row(1).setConstant(-0.3);
  c.targets.row(2).setConstant(0.1);
  TrainConfig cc;
  cc.epochs = 3000;
  cc.batch_size = 32;
  cc.learning_rate = 1e-2;
  cc.lr_decay = 0.999;
  cc.seed = 3;
  const int arch[] = {2, 16, 16, 3};
  const auto cr = train_network(c, arch, cc);
  const double const_err = (evaluate_batch(cr.net, c.inputs) - c.targets).cwiseAbs().maxCoeff();
  o.note("constant targets: max error=" + fmt(const_err, 3) + " tol=" + fmt(kConstantTargetTol));

  const TrainResult& mc = trained_net(ctx);
  o.note("mountain-car net 2-30x5-3: accuracy=" + fmt(100 * mc.accuracy, 4) + "% mean_abs_error=" +
         fmt(mc.mean_abs_error, 4) + " (need >= " + fmt(100 * kMinAccuracy) + "%)");
  o.pass = grad_ok && const_err < kConstantTargetTol && mc.accuracy >= kMinAccuracy;
  return o;
}

Outcome criterion8(Context& ctx) {
  Outcome o;
  const fs::path dir = ctx.root / "w1" / "c8";
  staged(ctx.root, pipeline_c8, dir, 1);
  const json nominal = read_json(dir / "nominal" / "reach.json");
  const bool a = nominal["verdict"] == "PASS";
  o.note("(a) nominal 200x24, tau 40..0: verdict=" + nominal["verdict"].get<std::string>() +
         " final_cells=" + nominal["final_cells"].dump());

  const json accel = read_json(dir / "accel" / "sweep.json");
  const std::string v1 = accel["rows"][0]["verdict"], v15 = accel["rows"][1]["verdict"];
  o.note("(b) accel_scale 1 -> 1.5 (strongest bound g/3 -> g/2): " + v1 + " -> " + v15 +
         (v1 != v15 ? " (verdict flips)" : " (no flip; reported)"));

  // (c) superset property, checked cellwise at every t.
  const QTable table = [&] {
    std::ifstream in(dir / "solve" / "qtable.txt");
    return load_qtable(in);
  }();
  const Grid grid = vcas_grid(VcConfig{}, 200, 24, 40);
  const ActionMap actions = tabular_controller(table, grid, ctx.workers);
  VcReachConfig rc;
  rc.workers = ctx.workers;
  const auto plain = run_vcas_reachability(grid, actions, rc);
  VcReachConfig r3 = rc;
  r3.delay = 3;
  const auto delayed = reach_with_delay(grid, actions, r3);
  bool superset = plain.sequence.size() == delayed.sequence.size();
  for (std::size_t t = 0; superset && t < plain.sequence.size(); ++t) {
    const auto p = plain.sequence[t].cells();
    const auto q = delayed.sequence[t].cells();
    superset = std::includes(q.begin(), q.end(), p.begin(), p.end());
  }
  const auto unsafe = vcas_unsafe_predicate(VcConfig{});
  const auto d3 = verify_unsafe_exclusion(std::span(&delayed.sequence.back(), 1), grid, unsafe);
  o.note(std::string("(c) delay 3 reach set contains delay 0 at every t: ") + (superset ? "yes" : "NO") +
         "; tau=0 meets |h|<100: " + (d3.pass ? "no" : "yes (" + std::to_string(d3.witnesses.size()) + " members)"));
  const json delay = read_json(dir / "delay" / "sweep.json");
  std::string row;
  for (const auto& r : delay["rows"]) row += " " + fmt(r["delay"].get<double>()) + ":" + r["verdict"].get<std::string>();
  o.note("    delay sweep:" + row);

  const json lim = read_json(dir / "delay3_limit" / "reach.json");
  const json lim0 = read_json(dir / "limit" / "reach.json");
  o.note("(d) reversal limit: delay 3 -> " + lim["verdict"].get<std::string>() + ", delay 0 -> " +
         lim0["verdict"].get<std::string>() + " (qualitative)");
  o.pass = a && superset;
  return o;
}

Outcome criterion9(Context& ctx) {
  Outcome o;
  const fs::path dir = ctx.root / "w1" / "c9";
  run_cli("refine", {{"system", "mountaincar"}, {"cells", "50x50"}, {"max_rounds", "60"}, {"pixels", "50x50"}}, dir,
          ctx.workers);
  const json s = read_json(dir / "refine.json");
  const auto flagged = s["flagged"].get<std::vector<std::size_t>>();
  int run = 0, best = 0;
  for (std::size_t i = 1; i < flagged.size(); ++i) {
    run = flagged[i] < flagged[i - 1] ? run + 1 : 0;
    best = std::max(best, run);
  }
  const bool terminated = s["floor_reached"].get<bool>() || (!flagged.empty() && flagged.back() == 0);
  std::string seq;
  for (std::size_t i = 0; i < flagged.size() && i < 12; ++i) seq += (i ? "," : "") + std::to_string(flagged[i]);
  if (flagged.size() > 12) seq += ",...," + std::to_string(flagged.back());
  o.note("self-reachable non-goal cells per round: " + seq);
  o.note("longest strictly decreasing run=" + std::to_string(best) + " rounds=" + s["rounds"].dump() +
         " floor_reached=" + s["floor_reached"].dump() + " final cells=" + s["cells"].dump());

  // Density concentration: share of refined cells with |v| < 0.01 versus that band's share of the domain.
  const Grid grid = [&] {
    std::ifstream in(dir / "grid.txt");
    std::string header;
    std::getline(in, header);
    return read_grid(in);
  }();
  std::size_t near = 0;
  for (const auto& c : grid.cells()) near += std::abs(c.box.center()[1]) < 0.01 ? 1 : 0;
  o.note("density: " + fmt(100.0 * static_cast<double>(near) / static_cast<double>(grid.size()), 3) +
         "% of cells have |v| < 0.01 (band is " + fmt(100.0 * 0.02 / 0.14, 3) + "% of the domain)");
  o.pass = best >= 3 && terminated;
  return o;
}

Outcome criterion10(Context& ctx) {
  Outcome o;
  const fs::path w1 = ctx.root / "w1";
  const fs::path w8 = ctx.root / "w8";
  if (!fs::exists(w1 / "c1")) staged(ctx.root, pipeline_c1, w1 / "c1", 1);
  if (!fs::exists(w1 / "c5")) staged(ctx.root, pipeline_c5, w1 / "c5", 1);
  if (!fs::exists(w1 / "c8")) staged(ctx.root, pipeline_c8, w1 / "c8", 1);
  staged(ctx.root, pipeline_c1, w8 / "c1", 8);
  staged(ctx.root, pipeline_c5, w8 / "c5", 8);
  staged(ctx.root, pipeline_c8, w8 / "c8", 8);
  o.pass = true;
  for (const std::string c : {"c1", "c5", "c8"}) {
    const auto a = tree(w1 / c), b = tree(w8 / c);
    std::size_t differing = 0;
    for (const auto& [k, v] : a) {
      const auto it = b.find(k);
      if (it == b.end() || it->second != v) ++differing;
    }
    const bool same = a.size() == b.size() && differing == 0 && !a.empty();
    o.pass = o.pass && same;
    o.note(c + ": files=" + std::to_string(a.size()) + " differing=" + std::to_string(differing) +
           (a.size() != b.size() ? " (file sets differ)" : ""));
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nnreach acceptance suite"};
  std::vector<int> only;
  std::vector<int> known;
  std::string out = "acceptance_out";
  int workers = 1;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--known-failure", known, "Criteria expected to fail; they still print FAIL");
  app.add_option("--out", out, "Working directory for artifacts");
  app.add_option("--workers", workers, "Worker threads for library-level checks");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.root = out;
  ctx.workers = std::max(1, workers);
  fs::remove_all(ctx.root);
  fs::create_directories(ctx.root);

  const std::vector<std::function<Outcome(Context&)>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                                  criterion5, criterion6, criterion7, criterion8,
                                                                  criterion9, criterion10};
  const std::set<int> selected(only.begin(), only.end());
  const std::set<int> expected_fail(known.begin(), known.end());
  int unexpected = 0;
  for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) {
    if (!selected.empty() && !selected.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = criteria[static_cast<std::size_t>(n - 1)](ctx);
    } catch (const std::exception& e) {
      r.pass = false;
      r.note(std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool known_fail = expected_fail.count(n) != 0;
    std::cout << "criterion " << n << ": " << (r.pass ? "PASS" : "FAIL") << " (" << fmt(secs, 3) << " s)"
              << (!r.pass && known_fail ? " [known failure]" : "") << '\n';
    for (const auto& line : r.notes) std::cout << "    " << line << '\n';
    std::cout.flush();
    if (!r.pass && !known_fail) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
