#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string_view>
#include <utility>

#include "nnreach/hyper_rect.hpp"
#include "nnreach/network.hpp"
#include "nnreach/polytope.hpp"

namespace nnreach {

// ---------------------------------------------------------------------------
// Mountain car
// ---------------------------------------------------------------------------

struct McConfig {
  double w = 0.0;
  double power = 0.0015;
  double gravity = 0.0025;
  double p_min = -1.2;
  double p_goal = 0.6;
  double v_max = 0.07;
};

struct McState {
  double p = 0.0;
  double v = 0.0;
};

inline constexpr std::size_t kMcActions = 3;

/// Action index to control input: 0 -> -1, 1 -> 0, 2 -> +1.
inline int mc_control(ActionId a) { return static_cast<int>(a.index) - 1; }

/// Position/velocity box of the state space.
HyperRect mc_domain(const McConfig& cfg = {});

/// One step with clamping; states at the goal are absorbing.
McState mc_step(const McState& s, int u, double delta, const McConfig& cfg = {});

bool mc_at_goal(const McState& s, const McConfig& cfg = {});

/// Enclosure of cos(3p) over [p_lo, p_hi].
std::pair<double, double> mc_cos_bounds(double p_lo, double p_hi);

/// Half-space enclosure of the clamped successors of every non-goal state in `cell` under
/// control u and any |delta| <= cfg.w.
Polytope mc_reach_polytope(const HyperRect& cell, int u, const McConfig& cfg);

/// Everything a cell can reach in one step: the polytope plus, for cells touching the goal
/// line, the absorbing face {p_goal} x [v range].
struct McSuccessorRegion {
  Polytope polytope;
  std::optional<HyperRect> goal_face;
};
McSuccessorRegion mc_successor_region(const HyperRect& cell, int u, const McConfig& cfg);

/// Disturbance that always opposes the control: -sign(u) w.
double mc_worst_case_disturbance(int u, double w);

// ---------------------------------------------------------------------------
// VerticalCAS
// ---------------------------------------------------------------------------

inline constexpr double kGravity = 32.2;  // ft/s^2
inline constexpr double kSecondsPerMinute = 60.0;

enum class Advisory : std::uint8_t { COC, DNC, DND, DES1500, CL1500, SDES1500, SCL1500, SDES2500, SCL2500 };
inline constexpr std::size_t kNumAdvisories = 9;

enum class Sense : std::int8_t { down = -1, none = 0, up = 1 };

struct AdvisoryInfo {
  std::string_view name;
  Sense sense;
  double target_fpm;  // climbrate bound the advisory demands (unused for COC)
  bool strengthened;
};

const AdvisoryInfo& advisory_info(Advisory adv);
inline Advisory advisory_from_index(std::size_t i) { return static_cast<Advisory>(i); }
inline std::size_t advisory_index(Advisory adv) { return static_cast<std::size_t>(adv); }
/// Throws InvalidArgument for unknown names.
Advisory advisory_from_name(std::string_view name);

/// True when `hdot_fpm` already satisfies the advisory (always true for COC).
bool vcas_compliant(Advisory adv, double hdot_fpm);

struct VcConfig {
  double accel_scale = 1.0;  // scales the strongest compliance acceleration (g/3)
  double h_max = 1000.0;     // domain half-width in h (ft)
  double hdot_max = 2500.0;  // ft/min
  double nmac_h = 100.0;
};

struct VcState {
  double h = 0.0;      // intruder altitude relative to ownship, ft
  double hdot0 = 0.0;  // ownship climbrate, ft/min
  int tau = 0;         // s
  Advisory adv = Advisory::COC;
};

/// Admissible ownship accelerations (ft/s^2) while executing `adv` at climbrate hdot0.
std::pair<double, double> vcas_accel_interval(Advisory adv, double hdot_fpm, const VcConfig& cfg = {});

/// One second of flight executing s.adv with acceleration `a`; `new_adv` becomes the state's
/// advisory. h decreases when the ownship climbs. Throws TerminalState at tau = 0.
VcState vcas_step(const VcState& s, Advisory new_adv, double a, const VcConfig& cfg = {});

/// Clamps h and hdot0 into the configured domain.
VcState vcas_clamp(const VcState& s, const VcConfig& cfg);

/// Enclosure (over h, hdot0 in ft/min) of every successor of `cell` while the pilot executes
/// `executing`, over its full acceleration interval, clamped to the domain.
HyperRect vcas_reach_rect(const HyperRect& cell, Advisory executing, Advisory issued, const VcConfig& cfg = {});

bool vcas_nmac(const VcState& s, const VcConfig& cfg = {});

}  // namespace nnreach
