#include "nnreach/reach.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>

#include "nnreach/parallel.hpp"

namespace nnreach {

// ---------------------------------------------------------------------------
// Reach sets and cell dynamics
// ---------------------------------------------------------------------------

bool ReachSet::contains(NodeKey key) const { return std::binary_search(members.begin(), members.end(), key); }

bool ReachSet::contains_cell(CellId cell) const {
  return std::any_of(members.begin(), members.end(), [cell](NodeKey k) { return node_cell(k) == cell; });
}

std::vector<CellId> ReachSet::cells() const {
  std::vector<CellId> out;
  out.reserve(members.size());
  for (NodeKey k : members) out.push_back(node_cell(k));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ReachSet make_reach_set(int t, std::vector<NodeKey> members) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  return ReachSet{t, std::move(members)};
}

void McCellDynamics::successors(const Grid& grid, const Cell& cell, ActionId action, std::vector<CellId>& out) const {
  const auto region = mc_successor_region(cell.box, mc_control(action), cfg_);
  const auto vertices = clip_to_box(region.polytope, grid.bounds());
  double p_lo = -std::numeric_limits<double>::infinity();
  double p_hi = std::numeric_limits<double>::infinity();
  if (!vertices.empty()) {
    p_lo = p_hi = vertices.front().x();
    for (const auto& v : vertices) {
      p_lo = std::min(p_lo, v.x());
      p_hi = std::max(p_hi, v.x());
    }
  }
  for (const auto& h : region.polytope.halfspaces()) {
    // an explicit p >= c constraint bounds p_lo exactly, free of clipping round-off
    if (h.normal[0] < 0 && h.normal[1] == 0) p_lo = std::max(p_lo, h.offset / h.normal[0]);
  }
  // Goal points (p >= p_goal) are absorbed; only the part left of the line stays in the partition.
  if (region.goal_face || p_hi >= cfg_.p_goal) out.push_back(kAbsorbingCell);
  if (p_lo < cfg_.p_goal) {
    for (CellId id : cells_intersecting(grid, region.polytope)) out.push_back(id);
  }
}

void PolytopeDynamics::successors(const Grid& grid, const Cell& cell, ActionId action, std::vector<CellId>& out) const {
  for (CellId id : cells_intersecting(grid, fn_(cell.box, action))) out.push_back(id);
}

void RectDynamics::successors(const Grid& grid, const Cell& cell, ActionId action, std::vector<CellId>& out) const {
  for (CellId id : cells_intersecting(grid, fn_(cell.box, action))) out.push_back(id);
}

namespace {

void sort_unique(std::vector<CellId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Union of successors over the cell's action set (layer 0).
std::vector<CellId> cell_successors(const Grid& grid, std::size_t index, const ActionMap& actions,
                                    const CellDynamics& dyn) {
  const Cell& cell = grid.cells()[index];
  const ActionSet set = actions.get(0, cell.id);
  if (set.empty()) throw ConfigError("reach: no action set for cell " + std::to_string(cell.id));
  std::vector<CellId> out;
  set.for_each([&](ActionId a) { dyn.successors(grid, cell, a, out); });
  sort_unique(out);
  return out;
}

// Chunked parallel map whose per-chunk outputs are concatenated in chunk order.
template <typename Fn>
std::vector<NodeKey> gather(std::size_t n, int workers, Fn&& fn) {
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1))));
  std::vector<std::vector<NodeKey>> parts(chunks);
  parallel_for(n, static_cast<int>(chunks), [&](std::size_t begin, std::size_t end) {
    std::size_t chunk = 0;
    while (n * chunk / chunks != begin) ++chunk;
    auto& out = parts[chunk];
    for (std::size_t i = begin; i < end; ++i) fn(i, out);
  });
  std::vector<NodeKey> all;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  all.reserve(total);
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  return all;
}

ReachSet step_with_memo(const Grid& grid, const ReachSet& current, const ActionMap& actions, const CellDynamics& dyn,
                        int workers, std::vector<std::vector<CellId>>* memo, std::vector<char>* done) {
  auto keys = gather(current.members.size(), workers, [&](std::size_t i, std::vector<NodeKey>& out) {
    const CellId id = node_cell(current.members[i]);
    if (id == kAbsorbingCell) {
      out.push_back(current.members[i]);
      return;
    }
    if (!grid.contains(id)) throw ConfigError("reach: cell " + std::to_string(id) + " is not in the grid");
    const std::size_t index = grid.index_of(id);
    if (memo) {
      if (!(*done)[index]) {
        (*memo)[index] = cell_successors(grid, index, actions, dyn);
        (*done)[index] = 1;
      }
      for (CellId c : (*memo)[index]) out.push_back(make_node(c));
    } else {
      for (CellId c : cell_successors(grid, index, actions, dyn)) out.push_back(make_node(c));
    }
  });
  return make_reach_set(current.t + 1, std::move(keys));
}

ReachSet all_cells(const Grid& grid, std::uint32_t tag = 0) {
  std::vector<NodeKey> keys;
  keys.reserve(grid.size());
  for (const auto& c : grid.cells()) keys.push_back(make_node(c.id, tag));
  return make_reach_set(0, std::move(keys));
}

}  // namespace

ReachSet reach_step(const Grid& grid, const ReachSet& current, const ActionMap& actions, const CellDynamics& dyn,
                    int workers) {
  return step_with_memo(grid, current, actions, dyn, workers, nullptr, nullptr);
}

const ReachSet* ReachResult::at(int t) const {
  if (t < 0) return nullptr;
  if (t == 0) return &initial;
  if (static_cast<std::size_t>(t) <= sequence.size()) return &sequence[static_cast<std::size_t>(t - 1)];
  if (fixed_point && !sequence.empty()) return &sequence.back();
  return nullptr;
}

ReachResult run_reachability(const Grid& grid, const ReachConfig& cfg, const ActionMap& actions,
                             const CellDynamics& dyn) {
  if (cfg.horizon < 1) throw InvalidArgument("run_reachability: horizon must be >= 1");
  ReachResult result;
  if (cfg.initial) {
    std::vector<NodeKey> keys;
    for (CellId id : *cfg.initial) {
      if (!grid.contains(id)) throw ConfigError("reach: initial cell " + std::to_string(id) + " is not in the grid");
      keys.push_back(make_node(id));
    }
    result.initial = make_reach_set(0, std::move(keys));
  } else {
    result.initial = all_cells(grid);
  }
  std::vector<std::vector<CellId>> memo(grid.size());
  std::vector<char> done(grid.size(), 0);
  const ReachSet* prev = &result.initial;
  for (int t = 0; t < cfg.horizon; ++t) {
    ReachSet next = step_with_memo(grid, *prev, actions, dyn, cfg.workers, &memo, &done);
    const bool same = next == *prev;
    result.sequence.push_back(std::move(next));
    prev = &result.sequence.back();
    if (same) {
      result.fixed_point = t;
      if (cfg.fixed_point_stop) break;
    }
  }
  return result;
}

std::vector<CellId> self_reachable_cells(const Grid& grid, const ActionMap& actions, const CellDynamics& dyn,
                                         int workers) {
  auto keys = gather(grid.size(), workers, [&](std::size_t i, std::vector<NodeKey>& out) {
    const Cell& cell = grid.cells()[i];
    const ActionSet set = actions.get(0, cell.id);
    if (set.empty()) throw ConfigError("reach: no action set for cell " + std::to_string(cell.id));
    bool self = false;
    std::vector<CellId> succ;
    set.for_each([&](ActionId a) {
      if (self) return;
      succ.clear();
      dyn.successors(grid, cell, a, succ);
      self = std::find(succ.begin(), succ.end(), cell.id) != succ.end();
    });
    if (self) out.push_back(cell.id);
  });
  std::vector<CellId> out;
  for (NodeKey k : keys) out.push_back(node_cell(k));
  sort_unique(out);
  return out;
}

TransitionGraph build_transition_graph(const Grid& grid, const ActionMap& actions, const CellDynamics& dyn,
                                       int workers) {
  std::vector<std::vector<CellId>> lists(grid.size());
  parallel_for(grid.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) lists[i] = cell_successors(grid, i, actions, dyn);
  });
  TransitionGraph graph;
  graph.start.reserve(grid.size() + 1);
  graph.start.push_back(0);
  for (const auto& l : lists) {
    graph.targets.insert(graph.targets.end(), l.begin(), l.end());
    graph.start.push_back(graph.targets.size());
  }
  return graph;
}

std::vector<CellId> cyclic_cells(const Grid& grid, const TransitionGraph& graph, const CellPredicate& exempt) {
  // Iterative Tarjan over cell indices.
  const std::size_t n = grid.size();
  constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order(n, kUnvisited), low(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::pair<std::size_t, std::size_t>> call;  // (node, next edge offset)
  std::size_t counter = 0;
  std::vector<CellId> out;

  for (std::size_t root = 0; root < n; ++root) {
    if (order[root] != kUnvisited) continue;
    call.emplace_back(root, 0);
    order[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& [v, edge] = call.back();
      const auto succ = graph.successors(v);
      if (edge < succ.size()) {
        const CellId target = succ[edge++];
        if (target == kAbsorbingCell) continue;
        const std::size_t w = grid.index_of(target);
        if (order[w] == kUnvisited) {
          order[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.emplace_back(w, 0);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], order[w]);
        }
        continue;
      }
      const std::size_t done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
      if (low[done] != order[done]) continue;
      std::vector<std::size_t> component;
      std::size_t w = 0;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = 0;
        component.push_back(w);
      } while (w != done);
      bool cyclic = component.size() > 1;
      if (!cyclic) {
        const auto s = graph.successors(done);
        cyclic = std::binary_search(s.begin(), s.end(), grid.cells()[done].id);
      }
      if (!cyclic) continue;
      const bool all_exempt = std::all_of(component.begin(), component.end(),
                                          [&](std::size_t i) { return exempt && exempt(grid.cells()[i].box); });
      if (all_exempt) continue;
      for (std::size_t i : component) out.push_back(grid.cells()[i].id);
    }
  }
  sort_unique(out);
  return out;
}

RefineReport refine_until_progress(const Grid& grid, const ControllerFn& controller, const CellDynamics& dyn,
                                   int max_rounds, const CellPredicate& exempt, RefineCriterion criterion,
                                   int workers) {
  if (max_rounds < 1) throw InvalidArgument("refine_until_progress: max_rounds must be >= 1");
  RefineReport report{grid, {}, {}, {}, false, 0};
  for (int round = 0;; ++round) {
    report.actions = controller(report.grid);
    std::vector<CellId> flagged;
    if (criterion == RefineCriterion::self_reachable) {
      for (CellId id : self_reachable_cells(report.grid, report.actions, dyn, workers)) {
        if (!exempt || !exempt(report.grid.box(id))) flagged.push_back(id);
      }
    } else {
      const auto graph = build_transition_graph(report.grid, report.actions, dyn, workers);
      flagged = cyclic_cells(report.grid, graph, exempt);
    }
    report.flagged.push_back(flagged.size());
    if (flagged.empty() || round == max_rounds) {
      report.remaining = std::move(flagged);
      break;
    }
    const Eigen::VectorXd extent = report.grid.bounds().widths();
    std::vector<CellId> splittable;
    for (CellId id : flagged) {
      const HyperRect& box = report.grid.box(id);
      const Eigen::Index dim = refinement_dim(report.grid, box);
      if ((box.hi(dim) - box.lo(dim)) / 2 < kRefinementFloor * extent[dim]) {
        report.floor_reached = true;
      } else {
        splittable.push_back(id);
      }
    }
    if (splittable.empty()) {
      report.remaining = std::move(flagged);
      break;
    }
    report.grid = refine_cells(report.grid, splittable);
    ++report.rounds;
  }
  return report;
}

CellPredicate mc_goal_predicate(const McConfig& cfg) {
  return [goal = cfg.p_goal](const HyperRect& box) { return box.lo(0) >= goal; };
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

Verdict verify_goal_containment(const ReachSet& set, const Grid& grid, const CellPredicate& goal) {
  Verdict v;
  for (NodeKey k : set.members) {
    const CellId c = node_cell(k);
    if (c != kAbsorbingCell && !goal(grid.box(c))) v.witnesses.push_back(k);
  }
  v.pass = v.witnesses.empty();
  return v;
}

Verdict verify_unsafe_exclusion(std::span<const ReachSet> sets, const Grid& grid, const CellPredicate& unsafe) {
  Verdict v;
  for (const auto& set : sets) {
    for (NodeKey k : set.members) {
      const CellId c = node_cell(k);
      if (c != kAbsorbingCell && unsafe(grid.box(c))) v.witnesses.push_back(k);
    }
  }
  std::sort(v.witnesses.begin(), v.witnesses.end());
  v.witnesses.erase(std::unique(v.witnesses.begin(), v.witnesses.end()), v.witnesses.end());
  v.pass = v.witnesses.empty();
  return v;
}

std::optional<int> certified_steps(const ReachResult& result, const Grid& grid, const CellPredicate& goal) {
  if (!result.fixed_point || result.sequence.empty()) return std::nullopt;
  int t = static_cast<int>(result.sequence.size());
  if (!verify_goal_containment(*result.at(t), grid, goal).pass) return std::nullopt;
  while (t > 0 && verify_goal_containment(*result.at(t - 1), grid, goal).pass) --t;
  return t;
}

// ---------------------------------------------------------------------------
// VerticalCAS
// ---------------------------------------------------------------------------

namespace {

std::uint32_t sense_code(Sense s) { return s == Sense::none ? 0u : (s == Sense::up ? 1u : 2u); }
Sense sense_from_code(std::uint32_t c) { return c == 0 ? Sense::none : (c == 1 ? Sense::up : Sense::down); }

}  // namespace

std::uint32_t encode_aug(const VcAug& aug) {
  if (aug.recent.size() > static_cast<std::size_t>(kMaxDelay)) throw InvalidArgument("encode_aug: history too long");
  std::uint32_t tag = static_cast<std::uint32_t>(advisory_index(aug.current));
  tag |= static_cast<std::uint32_t>(aug.recent.size()) << 4;
  for (std::size_t i = 0; i < aug.recent.size(); ++i) {
    tag |= static_cast<std::uint32_t>(advisory_index(aug.recent[i])) << (7 + 4 * i);
  }
  tag |= static_cast<std::uint32_t>(std::clamp(aug.reversals, 0, 2)) << 23;
  tag |= sense_code(aug.last_sense) << 25;
  return tag;
}

VcAug decode_aug(std::uint32_t tag) {
  VcAug aug;
  aug.current = advisory_from_index(tag & 0xfu);
  const std::uint32_t count = (tag >> 4) & 0x7u;
  for (std::uint32_t i = 0; i < count; ++i) aug.recent.push_back(advisory_from_index((tag >> (7 + 4 * i)) & 0xfu));
  aug.reversals = static_cast<int>((tag >> 23) & 0x3u);
  aug.last_sense = sense_from_code((tag >> 25) & 0x3u);
  return aug;
}

bool is_reversal(const VcAug& aug, Advisory issued) {
  const Sense s = advisory_info(issued).sense;
  return s != Sense::none && aug.last_sense != Sense::none && s != aug.last_sense;
}

VcAug advance_aug(const VcAug& aug, Advisory issued, int delay, bool track_reversals) {
  VcAug next;
  next.current = issued;
  if (delay > 0) {
    next.recent = aug.recent;
    next.recent.push_back(aug.current);
    if (next.recent.size() > static_cast<std::size_t>(delay)) {
      next.recent.erase(next.recent.begin(), next.recent.end() - delay);
    }
  }
  if (track_reversals) {
    next.reversals = std::min(2, aug.reversals + (is_reversal(aug, issued) ? 1 : 0));
    const Sense s = advisory_info(issued).sense;
    next.last_sense = s != Sense::none ? s : aug.last_sense;
  }
  return next;
}

Grid vcas_grid(const VcConfig& dyn, int h_cells, int hdot_cells, int tau_max) {
  if (tau_max < 1) throw InvalidArgument("vcas_grid: tau_max must be >= 1");
  DiscreteAxis tau{"tau", {}, false};
  for (int t = 0; t <= tau_max; ++t) tau.values.push_back(t);
  DiscreteAxis adv{"adv", {}, true};
  for (std::size_t a = 0; a < kNumAdvisories; ++a) adv.values.push_back(static_cast<double>(a));
  const HyperRect bounds(Eigen::Vector2d(-dyn.h_max, -dyn.hdot_max), Eigen::Vector2d(dyn.h_max, dyn.hdot_max));
  const int counts[2] = {h_cells, hdot_cells};
  return build_uniform_grid(bounds, counts, {tau, adv});
}

std::size_t vcas_layer(int tau, Advisory adv) {
  return static_cast<std::size_t>(tau) * kNumAdvisories + advisory_index(adv);
}

ReachResult run_vcas_reachability(const Grid& grid, const ActionMap& actions, const VcReachConfig& cfg) {
  if (cfg.delay < 0 || cfg.delay > kMaxDelay) throw InvalidArgument("vcas reach: delay must be in [0, 4]");
  if (cfg.tau0 < 1) throw InvalidArgument("vcas reach: tau0 must be >= 1");
  const auto& axes = grid.discrete_axes();
  if (axes.size() != 2 || axes[1].size() != kNumAdvisories || static_cast<int>(axes[0].size()) <= cfg.tau0) {
    throw ConfigError("vcas reach: grid needs discrete axes (tau 0..tau0, advisory)");
  }

  // Successor cells per (cell, executed advisory); independent of history and time.
  std::vector<std::vector<CellId>> rect_cells(grid.size() * kNumAdvisories);
  parallel_for(rect_cells.size(), cfg.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const Cell& cell = grid.cells()[k / kNumAdvisories];
      const Advisory e = advisory_from_index(k % kNumAdvisories);
      rect_cells[k] = cells_intersecting(grid, vcas_reach_rect(cell.box, e, e, cfg.dyn));
    }
  });

  ReachResult result;
  VcAug start;
  start.current = cfg.initial_advisory;
  start.last_sense = cfg.reversal_limit ? advisory_info(cfg.initial_advisory).sense : Sense::none;
  const std::uint32_t start_tag = encode_aug(start);
  if (cfg.initial) {
    std::vector<NodeKey> keys;
    for (CellId id : *cfg.initial) {
      if (!grid.contains(id)) throw ConfigError("reach: initial cell " + std::to_string(id) + " is not in the grid");
      keys.push_back(make_node(id, start_tag));
    }
    result.initial = make_reach_set(0, std::move(keys));
  } else {
    result.initial = all_cells(grid, start_tag);
  }

  for (int t = 0; t < cfg.tau0; ++t) {
    const int tau = cfg.tau0 - t;
    const ReachSet& prev = t == 0 ? result.initial : result.sequence.back();
    auto keys = gather(prev.members.size(), cfg.workers, [&](std::size_t i, std::vector<NodeKey>& out) {
      const NodeKey key = prev.members[i];
      const CellId id = node_cell(key);
      const std::size_t index = grid.index_of(id);
      const VcAug aug = decode_aug(node_tag(key));
      const ActionSet set = actions.get(vcas_layer(tau, aug.current), id);
      if (set.empty()) {
        throw ConfigError("reach: no action set for cell " + std::to_string(id) + " at tau " + std::to_string(tau) +
                          " advisory " + std::string(advisory_info(aug.current).name));
      }
      std::uint32_t executing = 1u << advisory_index(aug.current);
      for (Advisory r : aug.recent) executing |= 1u << advisory_index(r);
      std::vector<CellId> succ;
      for (std::size_t e = 0; e < kNumAdvisories; ++e) {
        if ((executing >> e) & 1u) {
          const auto& cells = rect_cells[index * kNumAdvisories + e];
          succ.insert(succ.end(), cells.begin(), cells.end());
        }
      }
      sort_unique(succ);
      std::vector<Advisory> issued, pruned;
      set.for_each([&](ActionId a) {
        const Advisory adv = advisory_from_index(a.index);
        if (cfg.reversal_limit && aug.reversals >= 1 && is_reversal(aug, adv)) {
          pruned.push_back(adv);
        } else {
          issued.push_back(adv);
        }
      });
      if (issued.empty()) issued = std::move(pruned);
      for (Advisory adv : issued) {
        const std::uint32_t tag = encode_aug(advance_aug(aug, adv, cfg.delay, cfg.reversal_limit));
        for (CellId c : succ) out.push_back(make_node(c, tag));
      }
    });
    result.sequence.push_back(make_reach_set(t + 1, std::move(keys)));
  }
  return result;
}

ReachResult reach_with_delay(const Grid& grid, const ActionMap& actions, const VcReachConfig& cfg) {
  return run_vcas_reachability(grid, actions, cfg);
}

ReachResult reach_with_reversal_limit(const Grid& grid, const ActionMap& actions, const VcReachConfig& cfg) {
  VcReachConfig limited = cfg;
  limited.reversal_limit = true;
  return run_vcas_reachability(grid, actions, limited);
}

CellPredicate vcas_unsafe_predicate(const VcConfig& cfg) {
  return [band = cfg.nmac_h](const HyperRect& box) { return box.lo(0) < band && box.hi(0) > -band; };
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

namespace {

std::uint64_t sim_seed(std::uint64_t seed, std::size_t sim) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (sim + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

McController mc_tabular_controller(const QTable& table) {
  return [&table](const McState& s) {
    const double x[2] = {s.p, s.v};
    return greedy_action(table, x);
  };
}

McController mc_network_controller(const Network& net) {
  return [&net](const McState& s) { return argmax_action(evaluate(net, Eigen::Vector2d(s.p, s.v))); };
}

McCheckReport monte_carlo_check(const McController& controller, const McConfig& dyn, const McCheckConfig& cfg,
                                const Grid& grid, const CellPredicate& goal, const ReachResult* reach) {
  if (cfg.sims < 1) throw InvalidArgument("monte_carlo_check: sims must be >= 1");
  const std::size_t n = static_cast<std::size_t>(cfg.sims);
  std::vector<McCheckReport> per_sim(n);
  const int reach_len = reach ? static_cast<int>(reach->sequence.size()) : 0;
  parallel_for(n, cfg.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t sim = begin; sim < end; ++sim) {
      McCheckReport& r = per_sim[sim];
      std::mt19937_64 rng(sim_seed(cfg.seed, sim));
      std::uniform_real_distribution<double> up(dyn.p_min, dyn.p_goal), uv(-dyn.v_max, dyn.v_max), ud(-dyn.w, dyn.w);
      McState s{up(rng), uv(rng)};
      int to_cell = -1, to_goal = -1;
      for (int t = 0; t <= cfg.step_cap; ++t) {
        const bool at_goal = mc_at_goal(s, dyn);
        const CellId cell = at_goal ? kAbsorbingCell : locate(grid, Eigen::Vector2d(s.p, s.v));
        if (to_cell < 0 && (at_goal || goal(grid.box(cell)))) to_cell = t;
        if (to_goal < 0 && at_goal) to_goal = t;
        if (reach) {
          if (const ReachSet* set = reach->at(t)) {
            ++r.checked_states;
            if (!set->contains(make_node(cell))) {
              ++r.violations;
              if (!r.first_violation) r.first_violation = std::make_pair(t, cell);
            }
          }
        }
        if (to_goal >= 0 && to_cell >= 0 && t >= reach_len) break;
        if (t == cfg.step_cap) break;
        const int u = mc_control(controller(s));
        const double delta = cfg.mode == DisturbanceMode::worst ? mc_worst_case_disturbance(u, dyn.w) : ud(rng);
        s = mc_step(s, u, delta, dyn);
      }
      r.sims = 1;
      r.max_steps_to_goal_cell = to_cell;
      r.max_steps_to_goal = to_goal;
      r.non_terminating = to_goal < 0 ? 1 : 0;
    }
  });
  McCheckReport total;
  for (const auto& r : per_sim) {
    total.sims += r.sims;
    total.max_steps_to_goal_cell = std::max(total.max_steps_to_goal_cell, r.max_steps_to_goal_cell);
    total.max_steps_to_goal = std::max(total.max_steps_to_goal, r.max_steps_to_goal);
    total.non_terminating += r.non_terminating;
    total.checked_states += r.checked_states;
    total.violations += r.violations;
    if (!total.first_violation && r.first_violation) total.first_violation = r.first_violation;
  }
  return total;
}

VcController vcas_tabular_scores(const QTable& table) {
  return [&table](const VcState& s) {
    const double x[4] = {s.h, s.hdot0, static_cast<double>(s.tau), static_cast<double>(advisory_index(s.adv))};
    return interpolate_q(table, x);
  };
}

VcCheckReport vcas_monte_carlo(const VcController& scores, const VcReachConfig& cfg, const McCheckConfig& mc,
                               const Grid& grid, const ActionMap& actions, const ReachResult* reach) {
  if (mc.sims < 1) throw InvalidArgument("vcas_monte_carlo: sims must be >= 1");
  const std::size_t n = static_cast<std::size_t>(mc.sims);
  std::vector<VcCheckReport> per_sim(n);
  parallel_for(n, mc.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t sim = begin; sim < end; ++sim) {
      VcCheckReport& r = per_sim[sim];
      std::mt19937_64 rng(sim_seed(mc.seed, sim));
      std::uniform_real_distribution<double> uh(-cfg.dyn.h_max, cfg.dyn.h_max), ur(-cfg.dyn.hdot_max, cfg.dyn.hdot_max);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      VcState s{uh(rng), ur(rng), cfg.tau0, cfg.initial_advisory};
      VcAug aug;
      aug.current = cfg.initial_advisory;
      aug.last_sense = cfg.reversal_limit ? advisory_info(cfg.initial_advisory).sense : Sense::none;
      for (int t = 0;; ++t) {
        const CellId cell = locate(grid, Eigen::Vector2d(s.h, s.hdot0));
        if (reach) {
          if (const ReachSet* set = reach->at(t)) {
            ++r.checked_states;
            const NodeKey key = make_node(cell, encode_aug(aug));
            if (!set->contains(key)) {
              ++r.violations;
              if (!r.first_violation) r.first_violation = std::make_pair(t, key);
            }
          }
        }
        if (s.tau == 0) {
          if (vcas_nmac(s, cfg.dyn)) ++r.nmacs;
          break;
        }
        // Issue the best-scoring advisory; under the reversal limit prefer a non-reversing one from the cell's set.
        s.adv = aug.current;
        const Eigen::VectorXd q = scores(s);
        Advisory issued = advisory_from_index(argmax_action(q).index);
        if (cfg.reversal_limit && aug.reversals >= 1 && is_reversal(aug, issued)) {
          const ActionSet allowed = actions.get(vcas_layer(s.tau, aug.current), cell);
          std::vector<std::size_t> order(kNumAdvisories);
          for (std::size_t a = 0; a < kNumAdvisories; ++a) order[a] = a;
          std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return q[static_cast<Eigen::Index>(a)] > q[static_cast<Eigen::Index>(b)];
          });
          for (std::size_t a : order) {
            const Advisory cand = advisory_from_index(a);
            if (allowed.contains(ActionId{a}) && !is_reversal(aug, cand)) {
              issued = cand;
              break;
            }
          }
        }
        // Execute: any advisory of the delay window.
        std::vector<Advisory> window{aug.current};
        for (Advisory a : aug.recent) {
          if (std::find(window.begin(), window.end(), a) == window.end()) window.push_back(a);
        }
        const Advisory executing =
            window[std::min(window.size() - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(window.size())))];
        const auto [a_lo, a_hi] = vcas_accel_interval(executing, s.hdot0, cfg.dyn);
        double acc = 0.0;
        if (mc.mode == DisturbanceMode::worst) {
          acc = s.h > 0.0 ? a_hi : a_lo;
        } else {
          acc = a_lo + unit(rng) * (a_hi - a_lo);
        }
        VcState exec = s;
        exec.adv = executing;
        s = vcas_clamp(vcas_step(exec, issued, acc, cfg.dyn), cfg.dyn);
        aug = advance_aug(aug, issued, cfg.delay, cfg.reversal_limit);
      }
      r.sims = 1;
    }
  });
  VcCheckReport total;
  for (const auto& r : per_sim) {
    total.sims += r.sims;
    total.nmacs += r.nmacs;
    total.checked_states += r.checked_states;
    total.violations += r.violations;
    if (!total.first_violation && r.first_violation) total.first_violation = r.first_violation;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

Eigen::MatrixXi occupancy_matrix(const Grid& grid, const ReachSet& set, int nx, int ny) {
  if (nx < 1 || ny < 1 || grid.dims() < 2) throw InvalidArgument("occupancy_matrix: need a 2-D grid and positive size");
  const auto cells = set.cells();  // kAbsorbingCell sorts last and never matches locate
  const auto& b = grid.bounds();
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(nx, ny);
  Eigen::VectorXd x = b.center();
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      x[0] = b.lo(0) + (i + 0.5) * (b.hi(0) - b.lo(0)) / nx;
      x[1] = b.lo(1) + (j + 0.5) * (b.hi(1) - b.lo(1)) / ny;
      const CellId id = locate(grid, x);
      if (std::binary_search(cells.begin(), cells.end(), id)) m(i, j) = 1;
    }
  }
  return m;
}

Eigen::MatrixXi density_matrix(const Grid& grid, int nx, int ny) {
  if (nx < 1 || ny < 1 || grid.dims() < 2) throw InvalidArgument("density_matrix: need a 2-D grid and positive size");
  const auto& b = grid.bounds();
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(nx, ny);
  for (const auto& c : grid.cells()) {
    const Eigen::VectorXd mid = c.box.center();
    const int i = std::clamp(static_cast<int>((mid[0] - b.lo(0)) / (b.hi(0) - b.lo(0)) * nx), 0, nx - 1);
    const int j = std::clamp(static_cast<int>((mid[1] - b.lo(1)) / (b.hi(1) - b.lo(1)) * ny), 0, ny - 1);
    ++m(i, j);
  }
  return m;
}

}  // namespace nnreach
