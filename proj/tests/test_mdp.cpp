#include <doctest.h>

#include <random>
#include <sstream>

#include "nnreach/error.hpp"
#include "nnreach/mdp.hpp"

using namespace nnreach;

namespace {

/// s0 -> s1 under every action with reward -1; s1 absorbs with reward 0.
MdpSpec chain(bool terminal_s1) {
  MdpSpec spec;
  spec.name = "chain";
  spec.grid = StateGrid({{0.0, 1.0}});
  spec.num_actions = 2;
  spec.reward = [](const MdpPoint& s, std::size_t) { return s[0] < 0.5 ? -1.0 : 0.0; };
  spec.kernel = [terminal_s1](const MdpPoint& s, std::size_t, std::vector<Successor>& out) {
    if (s[0] < 0.5) out.push_back({{1.0, 0, 0, 0}, 1.0});
    else if (!terminal_s1) out.push_back({{1.0, 0, 0, 0}, 1.0});
  };
  return spec;
}

QTable ramp_table() {
  QTable t;
  t.grid = StateGrid({{0.0, 1.0, 3.0}, {-1.0, 1.0}});
  t.values.resize(6, 2);
  for (int i = 0; i < 6; ++i) {
    t.values(i, 0) = i;
    t.values(i, 1) = 10.0 - 2.0 * i;
  }
  return t;
}

}  // namespace

TEST_SUITE("mdp") {
  TEST_CASE("zero reward gives Q = 0 after one sweep") {
    MdpSpec spec = chain(false);
    spec.reward = [](const MdpPoint&, std::size_t) { return 0.0; };
    const auto r = value_iteration(spec, 1e-12, 100);
    CHECK(r.converged);
    CHECK(r.sweeps == 1);
    CHECK(r.table.values.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("two-state chain matches the hand Bellman values") {
    for (bool terminal : {false, true}) {
      const auto r = value_iteration(chain(terminal), 1e-12, 100);
      CHECK(r.converged);
      CHECK(r.table.values(0, 0) == -1.0);
      CHECK(r.table.values(0, 1) == -1.0);
      CHECK(r.table.values(1, 0) == 0.0);
      CHECK(r.table.values(1, 1) == 0.0);
    }
  }

  TEST_CASE("state grid flat indices are row-major") {
    const StateGrid g({{0, 1, 2}, {5, 6}});
    CHECK(g.size() == 6);
    const std::size_t m[2] = {2, 1};
    CHECK(g.flat(m) == 5);
    CHECK(g.point(3)[0] == 1.0);
    CHECK(g.point(3)[1] == 6.0);
  }

  TEST_CASE("interpolation is exact at grid points and linear between them") {
    const QTable t = ramp_table();
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
      const auto p = t.grid.point(i);
      const auto q = interpolate_q(t, std::span<const double>(p.data(), 2));
      CHECK(q[0] == t.values(static_cast<Eigen::Index>(i), 0));
      CHECK(q[1] == t.values(static_cast<Eigen::Index>(i), 1));
    }
    QTable line;
    line.grid = StateGrid({{0.0, 1.0}});
    line.values = Eigen::MatrixXd(2, 1);
    line.values << 0.0, 1.0;
    const double mid = 0.5;
    CHECK(interpolate_q(line, std::span<const double>(&mid, 1))[0] == 0.5);
  }

  TEST_CASE("property: interpolation weights form a partition of unity") {
    const StateGrid g({{-1.2, -0.3, 0.1, 0.6}, {-0.07, 0.0, 0.07}, {0, 1, 2, 5}});
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-1.5, 6.0);
    std::vector<std::pair<std::uint32_t, double>> w;
    for (int i = 0; i < 10000; ++i) {
      const double s[3] = {u(rng) / 5, u(rng) / 50, u(rng)};
      interpolation_weights(g, s, w);
      double sum = 0.0;
      for (const auto& [idx, wt] : w) {
        CHECK(wt > 0.0);
        CHECK(idx < g.size());
        sum += wt;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
      CHECK(w.size() <= 8);
    }
  }

  TEST_CASE("mountain-car kernel has three equally likely successors") {
    const MdpSpec spec = mountain_car_spec();
    std::vector<Successor> out;
    spec.kernel({0.0, 0.0, 0, 0}, 1, out);
    REQUIRE(out.size() == 3);
    for (const auto& s : out) CHECK(s.prob == doctest::Approx(1.0 / 3));
    CHECK(out[1].state[0] == 0.0);
    CHECK(out[1].state[1] == doctest::Approx(-0.0025));
    out.clear();
    spec.kernel({0.6, 0.01, 0, 0}, 0, out);
    REQUIRE(out.size() == 3);
    for (const auto& s : out) CHECK(s.state[0] == 0.6);
    CHECK(spec.reward({0.6, 0.0, 0, 0}, 0) == 0.0);
    CHECK(spec.reward({0.59, 0.0, 0, 0}, 2) == -1.0);
  }

  TEST_CASE("mountain-car value iteration converges and pushes right near the goal") {
    const auto r = value_iteration(mountain_car_spec(), 1e-9, 2000, 2);
    CHECK(r.converged);
    CHECK(r.residual < 1e-6);
    CHECK_FALSE(r.residual_increased);
    const double s[2] = {0.5, 0.05};
    CHECK(greedy_action(r.table, s).index == 2);
    // Forward simulation oracle: pushing right reaches the goal no later than coasting or braking.
    auto steps = [](int u) {
      McState x{0.5, 0.05};
      int n = 0;
      while (!mc_at_goal(x) && n < 1000) {
        x = mc_step(x, u, 0.0);
        ++n;
      }
      return n;
    };
    CHECK(steps(1) <= steps(0));
    CHECK(steps(1) <= steps(-1));
  }

  TEST_CASE("value iteration is identical at any worker count") {
    const auto a = value_iteration(mountain_car_spec(McConfig{}, 30), 1e-9, 2000, 1);
    const auto b = value_iteration(mountain_car_spec(McConfig{}, 30), 1e-9, 2000, 5);
    CHECK(a.sweeps == b.sweeps);
    CHECK(a.table.values == b.table.values);
  }

  TEST_CASE("VerticalCAS reward terms") {
    const VcRewardParams p;
    CHECK(vcas_reward(Advisory::COC, Advisory::COC, 0.0, 0, p) == doctest::Approx(-p.nmac));
    CHECK(vcas_reward(Advisory::COC, Advisory::DNC, 0.0, 0, p) == doctest::Approx(-p.nmac - p.alert));
    CHECK(vcas_reward(Advisory::COC, Advisory::COC, 2000.0, 10, p) == 0.0);
    CHECK(vcas_reward(Advisory::COC, Advisory::COC, 50.0, 1, p) == 0.0);
    CHECK(vcas_reward(Advisory::DES1500, Advisory::SCL1500, 2000.0, 10, p) ==
          doctest::Approx(-(p.alert + p.reversal + p.strengthen + p.weak_to_strong)));
    CHECK(vcas_reward(Advisory::SCL1500, Advisory::SCL1500, 2000.0, 10, p) == doctest::Approx(-p.alert));
    CHECK(vcas_reward(Advisory::SCL1500, Advisory::SCL2500, 2000.0, 10, p) == doctest::Approx(-(p.alert + p.strengthen)));
    VcRewardParams wide = p;
    wide.penalty_band = 150.0;
    CHECK(vcas_reward(Advisory::COC, Advisory::COC, 120.0, 0, wide) == doctest::Approx(-p.nmac));
    CHECK(vcas_reward(Advisory::COC, Advisory::COC, 120.0, 0, p) == 0.0);
  }

  TEST_CASE("VerticalCAS spec rejects bad parameters") {
    VcRewardParams p;
    p.penalty_band = 0.0;
    CHECK_THROWS_AS(verticalcas_spec(p), InvalidArgument);
    p = {};
    p.nmac = -1.0;
    CHECK_THROWS_AS(verticalcas_spec(p), InvalidArgument);
  }

  TEST_CASE("Q-tables round trip as text, comments allowed") {
    const QTable t = ramp_table();
    std::stringstream s;
    s << "# produced by a test\n";
    save_qtable(s, t);
    const QTable back = load_qtable(s);
    CHECK(back.values == t.values);
    CHECK(back.grid.all_coords() == t.grid.all_coords());
    std::istringstream bad("dims=1\nactions=1\ncoords0=0,1\n0 : 1\n5 : 2\n");
    CHECK_THROWS_AS(load_qtable(bad), ParseError);
  }

  TEST_CASE("tabular action sets contain the greedy action at sampled points") {
    const QTable t = ramp_table();
    const HyperRect box(Eigen::Vector2d(0.0, -1.0), Eigen::Vector2d(3.0, 1.0));
    const ActionSet s = tabular_action_set(t, box);
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const double x[2] = {3.0 * u(rng), -1.0 + 2.0 * u(rng)};
      CHECK(s.contains(greedy_action(t, x)));
    }
  }
}
