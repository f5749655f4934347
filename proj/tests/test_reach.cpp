#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "nnreach/error.hpp"
#include "nnreach/reach.hpp"

using namespace nnreach;

namespace {

HyperRect box1(double lo, double hi) { return HyperRect(Eigen::VectorXd::Constant(1, lo), Eigen::VectorXd::Constant(1, hi)); }

ActionMap all_actions(const Grid& g, ActionSet s) {
  ActionMap m(g.layer_count(), g.next_id());
  for (std::size_t l = 0; l < g.layer_count(); ++l) {
    for (const auto& c : g.cells()) m.set(l, c.id, s);
  }
  return m;
}

/// Shifts a 1-D box right by `d`, shrunk by a hair so exact landings do not touch neighbours.
RectDynamics shift(double d, double shrink = 1e-9) {
  return RectDynamics([d, shrink](const HyperRect& r, ActionId) {
    return box1(r.lo(0) + d + shrink, r.hi(0) + d - shrink);
  });
}

std::vector<CellId> ids(const ReachSet& s) { return s.cells(); }

ActionMap all_advisories(const Grid& g) {
  ActionSet s;
  for (std::size_t a = 0; a < kNumAdvisories; ++a) s.insert(ActionId{a});
  return all_actions(g, s);
}

}  // namespace

TEST_SUITE("reach") {
  TEST_CASE("identity dynamics is a fixed point from the first step") {
    const Grid g = build_uniform_grid(box1(0, 1), std::vector<int>{5});
    const RectDynamics identity([](const HyperRect& r, ActionId) { return r; });
    ReachConfig cfg;
    cfg.horizon = 10;
    const auto r = run_reachability(g, cfg, all_actions(g, ActionSet::single(ActionId{0})), identity);
    REQUIRE(r.fixed_point.has_value());
    CHECK(*r.fixed_point == 0);
    CHECK(r.sequence.size() == 1);
    CHECK(r.sequence[0] == r.initial);
    CHECK(r.at(7) == &r.sequence.back());
    const auto self = self_reachable_cells(g, all_actions(g, ActionSet::single(ActionId{0})), identity);
    CHECK(self.size() == g.size());
  }

  TEST_CASE("shift by one cell moves cell 0 to cell 1") {
    const Grid g = build_uniform_grid(box1(0, 2), std::vector<int>{4});
    const auto actions = all_actions(g, ActionSet::single(ActionId{0}));
    const ReachSet r0 = make_reach_set(0, {make_node(0)});
    const ReachSet r1 = reach_step(g, r0, actions, shift(0.5));
    CHECK(ids(r1) == std::vector<CellId>{1});
    CHECK(r1.t == 1);
  }

  TEST_CASE("closed boxes make exact landings touch both neighbours") {
    const Grid g = build_uniform_grid(box1(0, 2), std::vector<int>{4});
    const auto actions = all_actions(g, ActionSet::single(ActionId{0}));
    const ReachSet r1 = reach_step(g, make_reach_set(0, {make_node(0)}), actions, shift(0.5, 0.0));
    CHECK(ids(r1) == std::vector<CellId>{0, 1, 2});
  }

  TEST_CASE("horizon one gives a sequence of length one") {
    const Grid g = build_uniform_grid(box1(0, 2), std::vector<int>{4});
    ReachConfig cfg;
    cfg.horizon = 1;
    const auto r = run_reachability(g, cfg, all_actions(g, ActionSet::single(ActionId{0})), shift(0.5));
    CHECK(r.sequence.size() == 1);
  }

  TEST_CASE("shifts wider than a cell leave no self-reachable cells") {
    const Grid g = build_uniform_grid(box1(0, 2), std::vector<int>{4});
    CHECK(self_reachable_cells(g, all_actions(g, ActionSet::single(ActionId{0})), shift(0.75)).empty());
  }

  TEST_CASE("missing action sets are configuration errors naming the cell") {
    const Grid g = build_uniform_grid(box1(0, 2), std::vector<int>{4});
    ActionMap partial(1, g.next_id());
    partial.set(0, 0, ActionSet::single(ActionId{0}));
    try {
      reach_step(g, make_reach_set(0, {make_node(0), make_node(3)}), partial, shift(0.5));
      FAIL("expected a configuration error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
  }

  TEST_CASE("mountain car: sampled successors of a cell near the goal are in the next set") {
    const Grid g = build_uniform_grid(mc_domain(), std::vector<int>{100, 100});
    const auto actions = all_actions(g, ActionSet::single(ActionId{2}));
    const McConfig cfg;
    const CellId start = locate(g, Eigen::Vector2d(0.55, 0.03));
    const ReachSet next = reach_step(g, make_reach_set(0, {make_node(start)}), actions, McCellDynamics(cfg));
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const HyperRect& b = g.box(start);
    for (int i = 0; i < 500; ++i) {
      const McState s{b.lo(0) + u(rng) * (b.hi(0) - b.lo(0)), b.lo(1) + u(rng) * (b.hi(1) - b.lo(1))};
      const McState n = mc_step(s, 1, 0.0, cfg);
      CHECK(next.contains_cell(mc_at_goal(n, cfg) ? kAbsorbingCell : locate(g, Eigen::Vector2d(n.p, n.v))));
    }
    for (CellId c : next.cells()) {
      REQUIRE(c != kAbsorbingCell);
      CHECK(g.box(c).hi(0) >= 0.55);
    }
  }

  TEST_CASE("mountain car: fast cells next to the line are absorbed into the goal") {
    const Grid g = build_uniform_grid(mc_domain(), std::vector<int>{100, 100});
    const auto actions = all_actions(g, ActionSet::single(ActionId{2}));
    const McConfig cfg;
    // p in [0.582, 0.6], v in [0.049, 0.0504]: every point passes the line
    const CellId start = locate(g, Eigen::Vector2d(0.59, 0.05));
    ReachConfig rc;
    rc.horizon = 5;
    rc.initial = std::vector<CellId>{start};
    const auto r = run_reachability(g, rc, actions, McCellDynamics(cfg));
    CHECK(r.sequence[0].members == std::vector<NodeKey>{make_node(kAbsorbingCell)});
    REQUIRE(r.fixed_point.has_value());
    CHECK(*r.fixed_point == 1);
    const auto goal = mc_goal_predicate(cfg);
    CHECK(verify_goal_containment(r.sequence.back(), g, goal).pass);
    CHECK_FALSE(verify_goal_containment(r.initial, g, goal).pass);
    CHECK(certified_steps(r, g, goal) == std::optional<int>(1));
    CHECK(verify_unsafe_exclusion(r.sequence, g, [](const HyperRect&) { return true; }).pass);
  }

  TEST_CASE("results are identical at any worker count") {
    const Grid g = build_uniform_grid(mc_domain(), std::vector<int>{40, 40});
    std::mt19937_64 rng(62);
    ActionMap m(1, g.next_id());
    for (const auto& c : g.cells()) m.set(0, c.id, ActionSet::single(ActionId{rng() % 3}));
    McConfig dyn;
    dyn.w = 0.1;
    ReachConfig a, b;
    a.horizon = b.horizon = 30;
    b.workers = 6;
    const auto ra = run_reachability(g, a, m, McCellDynamics(dyn));
    const auto rb = run_reachability(g, b, m, McCellDynamics(dyn));
    REQUIRE(ra.sequence.size() == rb.sequence.size());
    for (std::size_t t = 0; t < ra.sequence.size(); ++t) CHECK(ra.sequence[t] == rb.sequence[t]);
    CHECK(self_reachable_cells(g, m, McCellDynamics(dyn), 1) == self_reachable_cells(g, m, McCellDynamics(dyn), 5));
  }

  TEST_CASE("property: reach sets grow with the disturbance bound") {
    const Grid g = build_uniform_grid(mc_domain(), std::vector<int>{30, 30});
    std::mt19937_64 rng(63);
    ActionMap m(1, g.next_id());
    for (const auto& c : g.cells()) m.set(0, c.id, ActionSet::single(ActionId{rng() % 3}));
    ReachConfig cfg;
    cfg.horizon = 15;
    cfg.initial = std::vector<CellId>{locate(g, Eigen::Vector2d(-0.5, 0.0))};
    McConfig lo, hi;
    lo.w = 0.05;
    hi.w = 0.2;
    const auto a = run_reachability(g, cfg, m, McCellDynamics(lo));
    const auto b = run_reachability(g, cfg, m, McCellDynamics(hi));
    for (int t = 0; t <= 15; ++t) {
      const ReachSet* sa = a.at(t);
      const ReachSet* sb = b.at(t);
      if (!sa || !sb) continue;
      CHECK(std::includes(sb->members.begin(), sb->members.end(), sa->members.begin(), sa->members.end()));
    }
  }

  TEST_CASE("goal containment and unsafe exclusion verdicts") {
    const Grid g = build_uniform_grid(box1(0, 2), std::vector<int>{4});
    const CellPredicate last_cell = [](const HyperRect& b) { return b.hi(0) >= 2.0; };
    const auto pass = verify_goal_containment(make_reach_set(5, {make_node(3)}), g, last_cell);
    CHECK(pass.pass);
    const auto fail = verify_goal_containment(make_reach_set(5, {make_node(2), make_node(3)}), g, last_cell);
    CHECK_FALSE(fail.pass);
    CHECK(fail.witnesses == std::vector<NodeKey>{make_node(2)});
    const ReachSet sets[] = {make_reach_set(0, {make_node(0)}), make_reach_set(1, {make_node(3)})};
    const auto ex = verify_unsafe_exclusion(sets, g, last_cell);
    CHECK_FALSE(ex.pass);
    CHECK(ex.witnesses == std::vector<NodeKey>{make_node(3)});
    CHECK(verify_unsafe_exclusion(std::span<const ReachSet>(sets, 1), g, last_cell).pass);
  }

  TEST_CASE("certified steps on a shift that drains into the absorbing last cell") {
    const Grid g = build_uniform_grid(box1(0, 2), std::vector<int>{4});
    const RectDynamics drain([](const HyperRect& r, ActionId) {
      const double lo = std::min(r.lo(0) + 0.5 + 1e-9, 1.6), hi = std::min(r.hi(0) + 0.5 - 1e-9, 1.9);
      return box1(lo, hi);
    });
    ReachConfig cfg;
    cfg.horizon = 20;
    const auto r = run_reachability(g, cfg, all_actions(g, ActionSet::single(ActionId{0})), drain);
    REQUIRE(r.fixed_point.has_value());
    const CellPredicate last_cell = [](const HyperRect& b) { return b.hi(0) >= 2.0; };
    const auto steps = certified_steps(r, g, last_cell);
    REQUIRE(steps.has_value());
    CHECK(*steps == 3);
  }

  TEST_CASE("refinement stops immediately when nothing is flagged") {
    const Grid g = build_uniform_grid(box1(0, 2), std::vector<int>{4});
    const ControllerFn ctrl = [](const Grid& grid) { return all_actions(grid, ActionSet::single(ActionId{0})); };
    const auto rep = refine_until_progress(g, ctrl, shift(0.75), 10, [](const HyperRect&) { return false; });
    CHECK(rep.rounds == 0);
    CHECK(rep.flagged == std::vector<std::size_t>{0});
    CHECK(rep.grid.size() == g.size());
  }

  TEST_CASE("refinement splits self-reachable cells and reaches the floor on a true fixed point") {
    const Grid g = build_uniform_grid(box1(0, 2), std::vector<int>{4});
    const ControllerFn ctrl = [](const Grid& grid) { return all_actions(grid, ActionSet::single(ActionId{0})); };
    // contraction toward x = 1: the cell holding 1 is self-reachable at every scale
    const RectDynamics contract([](const HyperRect& r, ActionId) {
      return box1(1 + 0.5 * (r.lo(0) - 1), 1 + 0.5 * (r.hi(0) - 1));
    });
    const auto rep = refine_until_progress(g, ctrl, contract, 100, [](const HyperRect&) { return false; });
    CHECK(rep.floor_reached);
    CHECK_FALSE(rep.remaining.empty());
    CHECK(rep.flagged.size() == static_cast<std::size_t>(rep.rounds) + 1);
    // closed boxes: a neighbour whose image touches its own edge also counts
    for (CellId c : rep.remaining) {
      const HyperRect& b = rep.grid.box(c);
      const double w = b.hi(0) - b.lo(0);
      CHECK(b.lo(0) - w <= 1.0);
      CHECK(b.hi(0) + w >= 1.0);
    }
  }

  TEST_CASE("cycle detection finds loops and skips exempt components") {
    const Grid g = build_uniform_grid(box1(0, 2), std::vector<int>{4});
    const RectDynamics swap([](const HyperRect& r, ActionId) {
      // 0 <-> 1, 2 -> 3, 3 -> 3
      if (r.hi(0) <= 0.5) return box1(0.6, 0.9);
      if (r.hi(0) <= 1.0) return box1(0.1, 0.4);
      return box1(1.6, 1.9);
    });
    const auto actions = all_actions(g, ActionSet::single(ActionId{0}));
    const auto graph = build_transition_graph(g, actions, swap);
    CHECK(cyclic_cells(g, graph, [](const HyperRect&) { return false; }) == std::vector<CellId>{0, 1, 3});
    CHECK(cyclic_cells(g, graph, [](const HyperRect& b) { return b.lo(0) >= 1.5; }) == std::vector<CellId>{0, 1});
  }

  TEST_CASE("augmented state encoding round trips") {
    std::mt19937_64 rng(64);
    for (int i = 0; i < 2000; ++i) {
      VcAug a;
      a.current = advisory_from_index(rng() % kNumAdvisories);
      const int n = static_cast<int>(rng() % (kMaxDelay + 1));
      for (int k = 0; k < n; ++k) a.recent.push_back(advisory_from_index(rng() % kNumAdvisories));
      a.reversals = static_cast<int>(rng() % 3);
      a.last_sense = static_cast<Sense>(static_cast<int>(rng() % 3) - 1);
      const VcAug b = decode_aug(encode_aug(a));
      CHECK(b.current == a.current);
      CHECK(b.recent == a.recent);
      CHECK(b.reversals == a.reversals);
      CHECK(b.last_sense == a.last_sense);
      CHECK(encode_aug(a) < (1u << 27));
    }
  }

  TEST_CASE("climb, descend, climb issues two reversals") {
    VcAug a;
    a = advance_aug(a, Advisory::CL1500, 0, true);
    CHECK(a.reversals == 0);
    CHECK(is_reversal(a, Advisory::DES1500));
    CHECK_FALSE(is_reversal(a, Advisory::COC));
    CHECK_FALSE(is_reversal(a, Advisory::SCL2500));
    a = advance_aug(a, Advisory::DES1500, 0, true);
    CHECK(a.reversals == 1);
    a = advance_aug(a, Advisory::COC, 0, true);
    CHECK(a.last_sense == Sense::down);
    CHECK(is_reversal(a, Advisory::CL1500));
    a = advance_aug(a, Advisory::CL1500, 0, true);
    CHECK(a.reversals == 2);
    const VcAug d = advance_aug(VcAug{Advisory::DNC, {Advisory::COC, Advisory::DND}, 0, Sense::none}, Advisory::COC, 2, false);
    CHECK(d.recent == std::vector<Advisory>{Advisory::DND, Advisory::DNC});
  }

  TEST_CASE("reversal limit prunes a second reversal only when an alternative exists") {
    const Grid g = vcas_grid(VcConfig{}, 4, 2, 3);
    ActionMap m = all_actions(g, ActionSet::single(ActionId{advisory_index(Advisory::COC)}));
    auto only = [](std::initializer_list<Advisory> advs) {
      ActionSet s;
      for (Advisory a : advs) s.insert(ActionId{advisory_index(a)});
      return s;
    };
    for (const auto& c : g.cells()) {
      m.set(vcas_layer(3, Advisory::COC), c.id, only({Advisory::CL1500}));
      m.set(vcas_layer(2, Advisory::CL1500), c.id, only({Advisory::DES1500}));
      m.set(vcas_layer(1, Advisory::DES1500), c.id, only({Advisory::CL1500, Advisory::COC}));
    }
    VcReachConfig cfg;
    cfg.tau0 = 3;
    auto final_advisories = [&](const ActionMap& map, bool limit) {
      VcReachConfig c = cfg;
      c.reversal_limit = limit;
      const auto r = run_vcas_reachability(g, map, c);
      REQUIRE(r.sequence.size() == 3);
      std::set<Advisory> advs;
      for (NodeKey k : r.sequence.back().members) advs.insert(decode_aug(node_tag(k)).current);
      return advs;
    };
    CHECK(final_advisories(m, false) == std::set<Advisory>{Advisory::CL1500, Advisory::COC});
    CHECK(final_advisories(m, true) == std::set<Advisory>{Advisory::COC});
    for (const auto& c : g.cells()) m.set(vcas_layer(1, Advisory::DES1500), c.id, only({Advisory::CL1500}));
    CHECK(final_advisories(m, true) == std::set<Advisory>{Advisory::CL1500});
  }

  TEST_CASE("delay zero reduces to the plain run; delay three is a cellwise superset") {
    const Grid g = vcas_grid(VcConfig{}, 12, 6, 8);
    std::mt19937_64 rng(65);
    ActionMap m(g.layer_count(), g.next_id());
    for (std::size_t l = 0; l < g.layer_count(); ++l) {
      for (const auto& c : g.cells()) m.set(l, c.id, ActionSet::single(ActionId{rng() % kNumAdvisories}));
    }
    VcReachConfig cfg;
    cfg.tau0 = 8;
    const auto plain = run_vcas_reachability(g, m, cfg);
    const auto d0 = reach_with_delay(g, m, cfg);
    REQUIRE(plain.sequence.size() == 8);
    for (std::size_t t = 0; t < 8; ++t) CHECK(plain.sequence[t] == d0.sequence[t]);
    VcReachConfig c3 = cfg;
    c3.delay = 3;
    const auto d3 = reach_with_delay(g, m, c3);
    for (std::size_t t = 0; t < 8; ++t) {
      const auto a = plain.sequence[t].cells();
      const auto b = d3.sequence[t].cells();
      CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    }
    CHECK_THROWS_AS(reach_with_delay(g, m, [&] { auto c = cfg; c.delay = 5; return c; }()), InvalidArgument);
  }

  TEST_CASE("VerticalCAS runs are identical at any worker count") {
    const Grid g = vcas_grid(VcConfig{}, 10, 6, 6);
    const ActionMap m = all_advisories(g);
    VcReachConfig a;
    a.tau0 = 6;
    a.delay = 1;
    a.reversal_limit = true;
    VcReachConfig b = a;
    b.workers = 5;
    const auto ra = run_vcas_reachability(g, m, a);
    const auto rb = run_vcas_reachability(g, m, b);
    for (std::size_t t = 0; t < ra.sequence.size(); ++t) CHECK(ra.sequence[t] == rb.sequence[t]);
  }

  TEST_CASE("NMAC predicate meets exactly the cells inside the band") {
    const Grid g = vcas_grid(VcConfig{}, 20, 2, 2);
    const auto unsafe = vcas_unsafe_predicate(VcConfig{});
    int hits = 0;
    for (const auto& c : g.cells()) hits += unsafe(c.box) ? 1 : 0;
    CHECK(hits == 4);  // h cells [-100,0] and [0,100] for both rate cells
  }

  TEST_CASE("Monte Carlo: at w = 0 worst and random modes coincide and stay inside the reach sets") {
    const Grid g = build_uniform_grid(mc_domain(), std::vector<int>{40, 40});
    const McController right = [](const McState& s) { return ActionId{s.v >= 0 ? 2u : 0u}; };
    ActionMap m(1, g.next_id());
    for (const auto& c : g.cells()) {
      ActionSet s;
      if (c.box.hi(1) >= 0) s.insert(ActionId{2});
      if (c.box.lo(1) < 0) s.insert(ActionId{0});
      m.set(0, c.id, s);
    }
    const McConfig dyn;
    ReachConfig rc;
    rc.horizon = 400;
    const auto reach = run_reachability(g, rc, m, McCellDynamics(dyn));
    McCheckConfig a;
    a.sims = 300;
    a.seed = 5;
    McCheckConfig b = a;
    b.mode = DisturbanceMode::worst;
    const auto goal = mc_goal_predicate(dyn);
    const auto ra = monte_carlo_check(right, dyn, a, g, goal, &reach);
    const auto rb = monte_carlo_check(right, dyn, b, g, goal, &reach);
    CHECK(ra.violations == 0);
    CHECK(ra.max_steps_to_goal == rb.max_steps_to_goal);
    CHECK(ra.max_steps_to_goal_cell == rb.max_steps_to_goal_cell);
    CHECK(ra.checked_states == rb.checked_states);
    CHECK(ra.non_terminating == 0);
    b.workers = 4;
    const auto rc4 = monte_carlo_check(right, dyn, b, g, goal, &reach);
    CHECK(rc4.checked_states == rb.checked_states);
    CHECK(rc4.max_steps_to_goal == rb.max_steps_to_goal);
  }

  TEST_CASE("occupancy and density matrices") {
    const Grid g = build_uniform_grid(HyperRect(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)), std::vector<int>{2, 2});
    const auto occ = occupancy_matrix(g, make_reach_set(0, {make_node(0)}), 4, 4);
    CHECK(occ.sum() == 4);
    CHECK(occ(0, 0) == 1);
    CHECK(occ(3, 3) == 0);
    const auto den = density_matrix(g, 2, 2);
    CHECK(den == Eigen::MatrixXi::Ones(2, 2));
  }
}
