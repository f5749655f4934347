#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nnreach/action_set.hpp"
#include "nnreach/dynamics.hpp"
#include "nnreach/grid.hpp"
#include "nnreach/mdp.hpp"

namespace nnreach {

/// Reach-set member: a cell, plus a tag for augmented systems (advisory history and so on).
using NodeKey = std::uint64_t;

inline NodeKey make_node(CellId cell, std::uint32_t tag = 0) { return (NodeKey{tag} << 32) | cell; }
inline CellId node_cell(NodeKey key) { return static_cast<CellId>(key & 0xffffffffu); }
inline std::uint32_t node_tag(NodeKey key) { return static_cast<std::uint32_t>(key >> 32); }

/// Pseudo-cell for an absorbing target region outside the partition (the mountain-car goal
/// p >= p_goal). Its only successor is itself; goal checks accept it.
inline constexpr CellId kAbsorbingCell = 0xffffffffu;

struct ReachSet {
  int t = 0;
  std::vector<NodeKey> members;  // sorted, unique

  bool contains(NodeKey key) const;
  bool contains_cell(CellId cell) const;
  /// Distinct cells, sorted.
  std::vector<CellId> cells() const;
  bool absorbed() const { return contains_cell(kAbsorbingCell); }
  friend bool operator==(const ReachSet& a, const ReachSet& b) { return a.members == b.members; }
};

ReachSet make_reach_set(int t, std::vector<NodeKey> members);

/// Cells a cell can reach in one step under one action.
class CellDynamics {
 public:
  virtual ~CellDynamics() = default;
  virtual void successors(const Grid& grid, const Cell& cell, ActionId action, std::vector<CellId>& out) const = 0;
};

/// Mountain car: cells met by the six-inequality polytope, plus kAbsorbingCell when part of the
/// cell or its image reaches the goal line.
class McCellDynamics final : public CellDynamics {
 public:
  explicit McCellDynamics(McConfig cfg) : cfg_(cfg) {}
  void successors(const Grid& grid, const Cell& cell, ActionId action, std::vector<CellId>& out) const override;
  const McConfig& config() const { return cfg_; }

 private:
  McConfig cfg_;
};

/// Successor region given by a callback (for tests and simple systems).
class PolytopeDynamics final : public CellDynamics {
 public:
  using Fn = std::function<Polytope(const HyperRect&, ActionId)>;
  explicit PolytopeDynamics(Fn fn) : fn_(std::move(fn)) {}
  void successors(const Grid& grid, const Cell& cell, ActionId action, std::vector<CellId>& out) const override;

 private:
  Fn fn_;
};

class RectDynamics final : public CellDynamics {
 public:
  using Fn = std::function<HyperRect(const HyperRect&, ActionId)>;
  explicit RectDynamics(Fn fn) : fn_(std::move(fn)) {}
  void successors(const Grid& grid, const Cell& cell, ActionId action, std::vector<CellId>& out) const override;

 private:
  Fn fn_;
};

/// One step of the cell-level reachability map for single-layer action maps. Throws
/// ConfigError when a member cell has no action set.
ReachSet reach_step(const Grid& grid, const ReachSet& current, const ActionMap& actions, const CellDynamics& dyn,
                    int workers = 1);

struct ReachConfig {
  int horizon = 1000;
  /// Defaults to every cell.
  std::optional<std::vector<CellId>> initial;
  bool fixed_point_stop = true;
  int workers = 1;
};

struct ReachResult {
  ReachSet initial;
  std::vector<ReachSet> sequence;  // R_1 .. R_k
  /// Step t at which R_{t+1} == R_t was observed.
  std::optional<int> fixed_point;

  /// R_t for t >= 0; past the end of a converged run this is the fixed point.
  const ReachSet* at(int t) const;
};

ReachResult run_reachability(const Grid& grid, const ReachConfig& cfg, const ActionMap& actions,
                             const CellDynamics& dyn);

/// Cells S with S among their own one-step successors for some action in A_S.
std::vector<CellId> self_reachable_cells(const Grid& grid, const ActionMap& actions, const CellDynamics& dyn,
                                         int workers = 1);

/// Successor lists of every cell (indexed like grid.cells()), the union over A_S.
struct TransitionGraph {
  std::vector<std::size_t> start;
  std::vector<CellId> targets;

  std::span<const CellId> successors(std::size_t cell_index) const {
    return {targets.data() + start[cell_index], start[cell_index + 1] - start[cell_index]};
  }
};
TransitionGraph build_transition_graph(const Grid& grid, const ActionMap& actions, const CellDynamics& dyn,
                                       int workers = 1);

using CellPredicate = std::function<bool(const HyperRect&)>;
using ControllerFn = std::function<ActionMap(const Grid&)>;

/// Cells on a cycle of the transition graph (nontrivial strongly connected components and
/// self-loops), skipping components made only of `exempt` cells.
std::vector<CellId> cyclic_cells(const Grid& grid, const TransitionGraph& graph, const CellPredicate& exempt);

struct RefineReport {
  Grid grid;
  ActionMap actions;
  std::vector<std::size_t> flagged;  // cells flagged in each round
  std::vector<CellId> remaining;     // flagged cells left when the loop stopped
  bool floor_reached = false;
  int rounds = 0;
};

enum class RefineCriterion {
  self_reachable,  // split cells that reach themselves
  cycles,          // split every cell on a cycle of the cell graph
};

/// Recompute action sets, flag cells, split them, repeat. Stops when nothing is flagged, after
/// `max_rounds`, or when every flagged cell is at the width floor. `exempt` cells (e.g. the
/// absorbing goal) are never flagged.
RefineReport refine_until_progress(const Grid& grid, const ControllerFn& controller, const CellDynamics& dyn,
                                   int max_rounds, const CellPredicate& exempt,
                                   RefineCriterion criterion = RefineCriterion::self_reachable, int workers = 1);

/// Mountain-car goal cells: those lying entirely at or past the goal line. On the standard
/// domain no grid cell qualifies and goal states are represented by kAbsorbingCell.
CellPredicate mc_goal_predicate(const McConfig& cfg = {});

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

struct Verdict {
  bool pass = false;
  std::vector<NodeKey> witnesses;
};

/// Every member of `set` is kAbsorbingCell or lies in a cell satisfying `goal`.
Verdict verify_goal_containment(const ReachSet& set, const Grid& grid, const CellPredicate& goal);
/// No member of any of `sets` lies in a cell satisfying `unsafe` (kAbsorbingCell never does).
Verdict verify_unsafe_exclusion(std::span<const ReachSet> sets, const Grid& grid, const CellPredicate& unsafe);

/// First t from which every later set stays inside the goal cells. Needs a converged run.
std::optional<int> certified_steps(const ReachResult& result, const Grid& grid, const CellPredicate& goal);

// ---------------------------------------------------------------------------
// VerticalCAS
// ---------------------------------------------------------------------------

inline constexpr int kMaxDelay = 4;

/// Augmented node state: current advisory, advisories of the previous `delay` seconds,
/// reversal count (saturating at 2) and the last non-none sense.
struct VcAug {
  Advisory current = Advisory::COC;
  std::vector<Advisory> recent;
  int reversals = 0;
  Sense last_sense = Sense::none;
};

std::uint32_t encode_aug(const VcAug& aug);
VcAug decode_aug(std::uint32_t tag);

/// Issue `issued` from `aug`: returns the next augmented state. `track_reversals` controls
/// whether the reversal fields are kept (they are zero otherwise).
VcAug advance_aug(const VcAug& aug, Advisory issued, int delay, bool track_reversals);
bool is_reversal(const VcAug& aug, Advisory issued);

struct VcReachConfig {
  VcConfig dyn;
  int tau0 = 40;
  int delay = 0;
  bool reversal_limit = false;
  Advisory initial_advisory = Advisory::COC;
  std::optional<std::vector<CellId>> initial;  // defaults to every cell
  int workers = 1;
};

/// Grid for VerticalCAS runs: continuous (h, hdot0) with discrete axes tau (0..tau0) and
/// advisory (selects the network).
Grid vcas_grid(const VcConfig& dyn, int h_cells, int hdot_cells, int tau_max = 40);

/// Action-map layer of a (tau, advisory) pair on a vcas_grid.
std::size_t vcas_layer(int tau, Advisory adv);

/// Runs from tau0 down to tau = 0. With delay > 0 the pilot may fly any advisory of the last
/// `delay` seconds. With the reversal limit a second reversal is dropped from a cell's action set
/// whenever the set also offers a non-reversing advisory.
ReachResult run_vcas_reachability(const Grid& grid, const ActionMap& actions, const VcReachConfig& cfg);
ReachResult reach_with_delay(const Grid& grid, const ActionMap& actions, const VcReachConfig& cfg);
ReachResult reach_with_reversal_limit(const Grid& grid, const ActionMap& actions, const VcReachConfig& cfg);

/// Cells that meet the NMAC band |h| < nmac_h.
CellPredicate vcas_unsafe_predicate(const VcConfig& cfg = {});

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

enum class DisturbanceMode { worst, random };

using McController = std::function<ActionId(const McState&)>;

struct McCheckConfig {
  int sims = 1000;
  DisturbanceMode mode = DisturbanceMode::random;
  std::uint64_t seed = 0;
  int step_cap = 2000;
  int workers = 1;
};

struct McCheckReport {
  int sims = 0;
  int max_steps_to_goal_cell = 0;  // first step at the goal or in a goal cell
  int max_steps_to_goal = 0;       // first step with p >= goal
  int non_terminating = 0;
  std::size_t checked_states = 0;
  std::size_t violations = 0;
  std::optional<std::pair<int, CellId>> first_violation;  // (t, cell)
};

/// Simulates the exact dynamics from uniform random starts. When `reach` is given, every
/// visited state's cell (kAbsorbingCell once at the goal) must be in R_t.
McCheckReport monte_carlo_check(const McController& controller, const McConfig& dyn, const McCheckConfig& cfg,
                                const Grid& grid, const CellPredicate& goal, const ReachResult* reach = nullptr);

/// Controllers: tabular greedy policy and network argmax.
McController mc_tabular_controller(const QTable& table);
McController mc_network_controller(const Network& net);

/// Issues an advisory given the state and its augmented history.
using VcController = std::function<Eigen::VectorXd(const VcState&)>;

struct VcCheckReport {
  int sims = 0;
  int nmacs = 0;
  std::size_t checked_states = 0;
  std::size_t violations = 0;
  std::optional<std::pair<int, NodeKey>> first_violation;
};

/// Simulates from uniform random (h, hdot0) at tau0 with the initial advisory. `scores`
/// ranks advisories (argmax is issued). With the reversal limit, an argmax that would be a second
/// reversal is replaced by the best-scoring non-reversing advisory of the cell's action set, if any.
VcCheckReport vcas_monte_carlo(const VcController& scores, const VcReachConfig& cfg, const McCheckConfig& mc,
                               const Grid& grid, const ActionMap& actions, const ReachResult* reach = nullptr);

VcController vcas_tabular_scores(const QTable& table);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Rasterizes a reach set onto an nx x ny pixel grid over the first two dimensions: 1 where the
/// cell under the pixel centre is a member (any tag).
Eigen::MatrixXi occupancy_matrix(const Grid& grid, const ReachSet& set, int nx, int ny);

/// Number of cells whose centre falls in each pixel.
Eigen::MatrixXi density_matrix(const Grid& grid, int nx, int ny);

}  // namespace nnreach
