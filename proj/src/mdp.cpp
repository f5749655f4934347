#include "nnreach/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <string>

#include "nnreach/parallel.hpp"
#include "nnreach/text.hpp"

namespace nnreach {

StateGrid::StateGrid(std::vector<std::vector<double>> coords) : coords_(std::move(coords)) {
  if (coords_.empty() || coords_.size() > kMaxMdpDims) {
    throw InvalidArgument("StateGrid: need between 1 and " + std::to_string(kMaxMdpDims) + " dimensions");
  }
  strides_.assign(coords_.size(), 1);
  size_ = 1;
  for (std::size_t d = coords_.size(); d-- > 0;) {
    const auto& c = coords_[d];
    if (c.empty()) throw InvalidArgument("StateGrid: empty coordinate list in dimension " + std::to_string(d));
    for (std::size_t i = 1; i < c.size(); ++i) {
      if (!(c[i] > c[i - 1])) throw InvalidArgument("StateGrid: coordinates must increase in dimension " + std::to_string(d));
    }
    strides_[d] = size_;
    size_ *= c.size();
  }
}

MdpPoint StateGrid::point(std::size_t index) const {
  MdpPoint p{};
  for (std::size_t d = 0; d < dims(); ++d) {
    p[d] = coords_[d][(index / strides_[d]) % coords_[d].size()];
  }
  return p;
}

std::size_t StateGrid::flat(std::span<const std::size_t> multi) const {
  std::size_t index = 0;
  for (std::size_t d = 0; d < dims(); ++d) index += multi[d] * strides_[d];
  return index;
}

void interpolation_weights(const StateGrid& grid, std::span<const double> s,
                           std::vector<std::pair<std::uint32_t, double>>& out) {
  out.clear();
  const std::size_t dims = grid.dims();
  std::array<std::size_t, kMaxMdpDims> base{};
  std::array<double, kMaxMdpDims> frac{};
  for (std::size_t d = 0; d < dims; ++d) {
    const auto& c = grid.coords(d);
    if (c.size() == 1) {
      base[d] = 0;
      frac[d] = 0.0;
      continue;
    }
    const double x = std::clamp(s[d], c.front(), c.back());
    auto it = std::upper_bound(c.begin(), c.end(), x);
    std::size_t i = static_cast<std::size_t>(it - c.begin());
    i = std::min(std::max<std::size_t>(i, 1), c.size() - 1) - 1;
    base[d] = i;
    frac[d] = (x - c[i]) / (c[i + 1] - c[i]);
  }
  for (std::size_t corner = 0; corner < (std::size_t{1} << dims); ++corner) {
    double w = 1.0;
    std::size_t index = 0;
    for (std::size_t d = 0; d < dims; ++d) {
      const bool upper = (corner >> d) & 1u;
      const double f = upper ? frac[d] : 1.0 - frac[d];
      if (f == 0.0) {
        w = 0.0;
        break;
      }
      w *= f;
      index += (base[d] + (upper ? 1 : 0)) * grid.stride(d);
    }
    if (w != 0.0) out.emplace_back(static_cast<std::uint32_t>(index), w);
  }
}

Eigen::VectorXd interpolate_q(const QTable& table, std::span<const double> s) {
  if (s.size() < table.grid.dims()) throw InvalidArgument("interpolate_q: state has too few coordinates");
  std::vector<std::pair<std::uint32_t, double>> weights;
  interpolation_weights(table.grid, s, weights);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(table.values.cols());
  for (const auto& [idx, w] : weights) q += w * table.values.row(idx).transpose();
  return q;
}

ActionId greedy_action(const QTable& table, std::span<const double> s) { return argmax_action(interpolate_q(table, s)); }

// ---------------------------------------------------------------------------
// Value iteration
// ---------------------------------------------------------------------------

namespace {

// Interpolated successor lists for every (state, action), stored CSR-style.
struct TransitionCache {
  std::vector<double> reward;
  std::vector<std::size_t> start;  // (state * A + a) -> first entry; size N*A + 1
  std::vector<std::uint32_t> index;
  std::vector<double> weight;
  std::vector<char> terminal;
};

void expand(const MdpSpec& spec, std::size_t state, std::size_t a, std::vector<Successor>& succ,
            std::vector<std::pair<std::uint32_t, double>>& interp, std::vector<std::pair<std::uint32_t, double>>& row,
            bool& terminal) {
  const MdpPoint s = spec.grid.point(state);
  succ.clear();
  spec.kernel(s, a, succ);
  row.clear();
  terminal = succ.empty();
  for (const auto& next : succ) {
    interpolation_weights(spec.grid, std::span<const double>(next.state.data(), spec.grid.dims()), interp);
    for (const auto& [idx, w] : interp) row.emplace_back(idx, w * next.prob);
  }
}

constexpr std::size_t kCacheLimit = 400000;  // state-action pairs

}  // namespace

ValueIterationResult value_iteration(const MdpSpec& spec, double tol, int max_iters, int workers) {
  if (!spec.reward || !spec.kernel || spec.num_actions == 0) throw InvalidArgument("value_iteration: incomplete spec");
  if (max_iters < 1) throw InvalidArgument("value_iteration: max_iters must be >= 1");
  const std::size_t n = spec.grid.size();
  const std::size_t na = spec.num_actions;

  std::vector<double> rewards(n * na);
  for (std::size_t s = 0; s < n; ++s) {
    const MdpPoint p = spec.grid.point(s);
    for (std::size_t a = 0; a < na; ++a) rewards[s * na + a] = spec.reward(p, a);
  }

  TransitionCache cache;
  const bool cached = n * na <= kCacheLimit;
  if (cached) {
    cache.start.reserve(n * na + 1);
    cache.terminal.resize(n * na);
    std::vector<Successor> succ;
    std::vector<std::pair<std::uint32_t, double>> interp, row;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t a = 0; a < na; ++a) {
        bool terminal = false;
        expand(spec, s, a, succ, interp, row, terminal);
        cache.start.push_back(cache.index.size());
        cache.terminal[s * na + a] = terminal;
        for (const auto& [idx, w] : row) {
          cache.index.push_back(idx);
          cache.weight.push_back(w);
        }
      }
    }
    cache.start.push_back(cache.index.size());
  }

  ValueIterationResult result;
  result.table.grid = spec.grid;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(na));
  Eigen::MatrixXd next = q;
  Eigen::VectorXd value = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  double previous_residual = std::numeric_limits<double>::infinity();
  bool dropped = false;

  for (int sweep = 1; sweep <= max_iters; ++sweep) {
    value = q.rowwise().maxCoeff();
    std::mutex residual_mutex;
    double residual = 0.0;
    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
      std::vector<Successor> succ;
      std::vector<std::pair<std::uint32_t, double>> interp, row;
      double local = 0.0;
      for (std::size_t s = begin; s < end; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
          double total = rewards[s * na + a];
          if (cached) {
            for (std::size_t k = cache.start[s * na + a]; k < cache.start[s * na + a + 1]; ++k) {
              total += cache.weight[k] * value[cache.index[k]];
            }
          } else {
            bool terminal = false;
            expand(spec, s, a, succ, interp, row, terminal);
            for (const auto& [idx, w] : row) total += w * value[idx];
          }
          const auto r = static_cast<Eigen::Index>(s);
          const auto c = static_cast<Eigen::Index>(a);
          local = std::max(local, std::abs(total - q(r, c)));
          next(r, c) = total;
        }
      }
      std::lock_guard lock(residual_mutex);
      residual = std::max(residual, local);
    });
    q.swap(next);
    result.sweeps = sweep;
    result.residual = residual;
    if (dropped && residual > previous_residual + 1e-9) result.residual_increased = true;
    if (residual < previous_residual) dropped = true;
    previous_residual = residual;
    if (residual < tol) {
      result.converged = true;
      break;
    }
  }
  result.table.values = std::move(q);
  return result;
}

// ---------------------------------------------------------------------------
// Benchmark specs
// ---------------------------------------------------------------------------

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  out.back() = hi;
  return out;
}

}  // namespace

MdpSpec mountain_car_spec(const McConfig& cfg, int points_per_dim) {
  if (points_per_dim < 2) throw InvalidArgument("mountain_car_spec: need at least 2 points per dimension");
  MdpSpec spec;
  spec.name = "mountaincar";
  spec.grid = StateGrid({linspace(cfg.p_min, cfg.p_goal, points_per_dim), linspace(-cfg.v_max, cfg.v_max, points_per_dim)});
  spec.num_actions = kMcActions;
  spec.reward = [cfg](const MdpPoint& s, std::size_t) { return s[0] < cfg.p_goal ? -1.0 : 0.0; };
  spec.kernel = [cfg](const MdpPoint& s, std::size_t a, std::vector<Successor>& out) {
    const int u = mc_control(ActionId{a});
    for (double delta : {-0.5, 0.0, 0.5}) {
      const McState next = mc_step({s[0], s[1]}, u, delta, cfg);
      out.push_back({{next.p, next.v, 0.0, 0.0}, 1.0 / 3.0});
    }
  };
  return spec;
}

double vcas_reward(Advisory previous, Advisory issued, double h, int tau, const VcRewardParams& p) {
  const auto& prev = advisory_info(previous);
  const auto& next = advisory_info(issued);
  double r = 0.0;
  if (tau == 0 && std::abs(h) < p.penalty_band) r -= p.nmac;
  if (issued != Advisory::COC) r -= p.alert;
  if (prev.sense != Sense::none && next.sense != Sense::none && prev.sense != next.sense) r -= p.reversal;
  if (next.strengthened && issued != previous) r -= p.strengthen;
  if (!prev.strengthened && next.strengthened) r -= p.weak_to_strong;
  return r;
}

VcMdpGrid VcMdpGrid::standard() {
  VcMdpGrid g;
  const std::vector<double> positive{25, 50, 75, 100, 150, 200, 300, 400, 500, 650, 800, 1000, 1250, 1500, 2000, 2500, 3000};
  for (auto it = positive.rbegin(); it != positive.rend(); ++it) g.h.push_back(-*it);
  g.h.push_back(0.0);
  g.h.insert(g.h.end(), positive.begin(), positive.end());
  for (int r = -2500; r <= 2500; r += 250) g.hdot0.push_back(r);
  return g;
}

MdpSpec verticalcas_spec(const VcRewardParams& params, const VcConfig& dyn, const VcMdpGrid& grid) {
  for (double m : {params.nmac, params.alert, params.reversal, params.strengthen, params.weak_to_strong}) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw InvalidArgument("verticalcas_spec: penalty magnitudes must be >= 0");
  }
  if (!(params.penalty_band > 0.0) || !std::isfinite(params.penalty_band)) {
    throw InvalidArgument("verticalcas_spec: penalty band must be positive");
  }
  if (grid.tau_max < 1) throw InvalidArgument("verticalcas_spec: tau_max must be >= 1");
  std::vector<double> taus, advs;
  for (int t = 0; t <= grid.tau_max; ++t) taus.push_back(t);
  for (std::size_t a = 0; a < kNumAdvisories; ++a) advs.push_back(static_cast<double>(a));

  MdpSpec spec;
  spec.name = "verticalcas";
  spec.grid = StateGrid({grid.h, grid.hdot0, taus, advs});
  spec.num_actions = kNumAdvisories;
  VcConfig domain = dyn;
  domain.h_max = std::max(std::abs(grid.h.front()), std::abs(grid.h.back()));
  domain.hdot_max = std::max(std::abs(grid.hdot0.front()), std::abs(grid.hdot0.back()));
  spec.reward = [params](const MdpPoint& s, std::size_t a) {
    return vcas_reward(advisory_from_index(static_cast<std::size_t>(std::lround(s[3]))), advisory_from_index(a), s[0],
                       static_cast<int>(std::lround(s[2])), params);
  };
  spec.kernel = [domain](const MdpPoint& s, std::size_t a, std::vector<Successor>& out) {
    VcState state{s[0], s[1], static_cast<int>(std::lround(s[2])),
                  advisory_from_index(static_cast<std::size_t>(std::lround(s[3])))};
    if (state.tau == 0) return;
    const auto [lo, hi] = vcas_accel_interval(state.adv, state.hdot0, domain);
    for (double acc : {lo, 0.5 * (lo + hi), hi}) {
      const VcState next = vcas_clamp(vcas_step(state, advisory_from_index(a), acc, domain), domain);
      out.push_back({{next.h, next.hdot0, static_cast<double>(next.tau), static_cast<double>(a)}, 1.0 / 3.0});
    }
  };
  return spec;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void save_qtable(std::ostream& out, const QTable& table) {
  const auto& grid = table.grid;
  out << "dims=" << grid.dims() << '\n';
  out << "actions=" << table.num_actions() << '\n';
  for (std::size_t d = 0; d < grid.dims(); ++d) out << "coords" << d << '=' << join_doubles(grid.coords(d)) << '\n';
  std::vector<std::size_t> multi(grid.dims(), 0);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    for (std::size_t d = 0; d < grid.dims(); ++d) {
      out << (d ? " " : "") << (s / grid.stride(d)) % grid.coords(d).size();
    }
    out << " : " << join_doubles(table.values.row(static_cast<Eigen::Index>(s))) << '\n';
  }
}

QTable load_qtable(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&](const char* what) {
    while (std::getline(in, line)) {
      ++lineno;
      const auto view = trim(line);
      if (!view.empty() && view.front() != '#') return std::string(view);
    }
    throw ParseError(lineno + 1, std::string("truncated file: expected ") + what);
  };
  auto value_of = [&](const std::string& text, const std::string& key) {
    if (!text.starts_with(key + "=")) throw ParseError(lineno, "expected '" + key + "='");
    return text.substr(key.size() + 1);
  };
  try {
    const auto dims = static_cast<std::size_t>(parse_int(value_of(next_line("dims="), "dims")));
    const auto actions = parse_int(value_of(next_line("actions="), "actions"));
    if (dims < 1 || dims > kMaxMdpDims || actions < 1) throw ParseError(lineno, "invalid dims or actions");
    std::vector<std::vector<double>> coords;
    for (std::size_t d = 0; d < dims; ++d) {
      std::vector<double> c;
      const std::string text = value_of(next_line("coords"), "coords" + std::to_string(d));
      for (auto tok : split(text, ',')) c.push_back(parse_double(tok));
      coords.push_back(std::move(c));
    }
    QTable table;
    table.grid = StateGrid(std::move(coords));
    table.values.setZero(static_cast<Eigen::Index>(table.grid.size()), actions);
    std::vector<char> seen(table.grid.size(), 0);
    std::vector<std::size_t> multi(dims);
    for (std::size_t k = 0; k < table.grid.size(); ++k) {
      const std::string row = next_line("table row");
      const auto colon = row.find(':');
      if (colon == std::string::npos) throw ParseError(lineno, "expected 'i j ... : q...'");
      const auto idx = split(trim(std::string_view(row).substr(0, colon)), ' ');
      if (idx.size() != dims) throw ParseError(lineno, "wrong number of indices");
      for (std::size_t d = 0; d < dims; ++d) {
        const auto v = parse_int(idx[d]);
        if (v < 0 || static_cast<std::size_t>(v) >= table.grid.coords(d).size()) throw ParseError(lineno, "index out of range");
        multi[d] = static_cast<std::size_t>(v);
      }
      const auto vals = split(trim(std::string_view(row).substr(colon + 1)), ',');
      if (static_cast<long long>(vals.size()) != actions) throw ParseError(lineno, "wrong number of values");
      const std::size_t s = table.grid.flat(multi);
      if (seen[s]) throw ParseError(lineno, "duplicate row");
      seen[s] = 1;
      for (std::size_t a = 0; a < vals.size(); ++a) {
        const double v = parse_double(vals[a]);
        if (!std::isfinite(v)) throw ParseError(lineno, "non-finite value");
        table.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = v;
      }
    }
    return table;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(lineno, e.what());
  }
}

}  // namespace nnreach
