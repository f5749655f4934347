#include "nnreach/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace nnreach {

namespace {

constexpr double kPolytopePad = 1e-13;

// ---------------------------------------------------------------------------
// VerticalCAS helpers
// ---------------------------------------------------------------------------

constexpr std::array<AdvisoryInfo, kNumAdvisories> kAdvisories{{
    {"COC", Sense::none, 0.0, false},
    {"DNC", Sense::down, 0.0, false},
    {"DND", Sense::up, 0.0, false},
    {"DES1500", Sense::down, -1500.0, false},
    {"CL1500", Sense::up, 1500.0, false},
    {"SDES1500", Sense::down, -1500.0, true},
    {"SCL1500", Sense::up, 1500.0, true},
    {"SDES2500", Sense::down, -2500.0, true},
    {"SCL2500", Sense::up, 2500.0, true},
}};

struct Advance {
  double displacement;  // ft climbed by the ownship over one second
  double rate;          // ft/s at the end of the second
};

// One second at constant acceleration, stopping at `target` if it is crossed (when pinning).
Advance advance(double rate, double a, double target, bool pin) {
  if (pin && a > 0.0 && rate <= target && rate + a > target) {
    const double t = (target - rate) / a;
    return {rate * t + 0.5 * a * t * t + target * (1.0 - t), target};
  }
  if (pin && a < 0.0 && rate >= target && rate + a < target) {
    const double t = (target - rate) / a;
    return {rate * t + 0.5 * a * t * t + target * (1.0 - t), target};
  }
  return {rate + 0.5 * a, rate + a};
}

}  // namespace

// ---------------------------------------------------------------------------
// Mountain car
// ---------------------------------------------------------------------------

HyperRect mc_domain(const McConfig& cfg) {
  return HyperRect(Eigen::Vector2d(cfg.p_min, -cfg.v_max), Eigen::Vector2d(cfg.p_goal, cfg.v_max));
}

bool mc_at_goal(const McState& s, const McConfig& cfg) { return s.p >= cfg.p_goal; }

McState mc_step(const McState& s, int u, double delta, const McConfig& cfg) {
  if (mc_at_goal(s, cfg)) return s;
  McState next;
  next.p = s.p + s.v;
  next.v = s.v + cfg.power * (u + delta) - cfg.gravity * std::cos(3.0 * s.p);
  next.v = std::clamp(next.v, -cfg.v_max, cfg.v_max);
  next.p = std::clamp(next.p, cfg.p_min, cfg.p_goal);
  return next;
}

std::pair<double, double> mc_cos_bounds(double p_lo, double p_hi) {
  if (!(p_lo <= p_hi)) throw InvalidArgument("mc_cos_bounds: p_lo > p_hi");
  const double x_lo = 3.0 * p_lo;
  const double x_hi = 3.0 * p_hi;
  double lo = std::min(std::cos(x_lo), std::cos(x_hi));
  double hi = std::max(std::cos(x_lo), std::cos(x_hi));
  for (double k = std::ceil(x_lo / std::numbers::pi); k * std::numbers::pi <= x_hi; k += 1.0) {
    const bool even = std::fmod(std::abs(k), 2.0) == 0.0;
    if (even) {
      hi = 1.0;
    } else {
      lo = -1.0;
    }
  }
  return {std::max(-1.0, lo - 1e-15), std::min(1.0, hi + 1e-15)};
}

Polytope mc_reach_polytope(const HyperRect& cell, int u, const McConfig& cfg) {
  if (cell.dims() != 2) throw InvalidArgument("mc_reach_polytope: cell must be 2-D");
  const double pl = cell.lo(0), ph = cell.hi(0), vl = cell.lo(1), vh = cell.hi(1);
  const auto [cp_min, cp_max] = mc_cos_bounds(pl, ph);
  const double push_lo = cfg.power * (u - cfg.w);
  const double push_hi = cfg.power * (u + cfg.w);

  const double p_lo = pl + vl - kPolytopePad;
  const double p_hi = ph + vh + kPolytopePad;
  const double v_lo = vl - cfg.gravity * cp_max + push_lo - kPolytopePad;
  const double v_hi = vh - cfg.gravity * cp_min + push_hi + kPolytopePad;
  const double d_lo = -ph - cfg.gravity * cp_max + push_lo - kPolytopePad;
  const double d_hi = -pl - cfg.gravity * cp_min + push_hi + kPolytopePad;

  // Clamping moves successors back into the domain and can break a diagonal constraint:
  // raising p' or lowering v' decreases v' - p', and the reverse increases it.
  const bool clamp_p_low = p_lo < cfg.p_min;
  const bool clamp_p_high = p_hi > cfg.p_goal;
  const bool clamp_v_low = v_lo < -cfg.v_max;
  const bool clamp_v_high = v_hi > cfg.v_max;

  Polytope poly(2);
  poly.add(Eigen::Vector2d(-1.0, 0.0), -std::clamp(p_lo, cfg.p_min, cfg.p_goal));
  poly.add(Eigen::Vector2d(1.0, 0.0), std::clamp(p_hi, cfg.p_min, cfg.p_goal));
  poly.add(Eigen::Vector2d(0.0, -1.0), -std::clamp(v_lo, -cfg.v_max, cfg.v_max));
  poly.add(Eigen::Vector2d(0.0, 1.0), std::clamp(v_hi, -cfg.v_max, cfg.v_max));
  if (!clamp_p_low && !clamp_v_high) poly.add(Eigen::Vector2d(1.0, -1.0), -d_lo);
  if (!clamp_p_high && !clamp_v_low) poly.add(Eigen::Vector2d(-1.0, 1.0), d_hi);
  return poly;
}

McSuccessorRegion mc_successor_region(const HyperRect& cell, int u, const McConfig& cfg) {
  McSuccessorRegion region{mc_reach_polytope(cell, u, cfg), std::nullopt};
  if (cell.hi(0) >= cfg.p_goal) {
    region.goal_face = HyperRect(Eigen::Vector2d(cfg.p_goal, cell.lo(1)), Eigen::Vector2d(cfg.p_goal, cell.hi(1)));
  }
  return region;
}

double mc_worst_case_disturbance(int u, double w) {
  if (u > 0) return -w;
  if (u < 0) return w;
  return 0.0;
}

// ---------------------------------------------------------------------------
// VerticalCAS
// ---------------------------------------------------------------------------

const AdvisoryInfo& advisory_info(Advisory adv) { return kAdvisories.at(advisory_index(adv)); }

Advisory advisory_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumAdvisories; ++i) {
    if (kAdvisories[i].name == name) return advisory_from_index(i);
  }
  throw InvalidArgument("unknown advisory: " + std::string(name));
}

bool vcas_compliant(Advisory adv, double hdot_fpm) {
  const auto& info = advisory_info(adv);
  switch (info.sense) {
    case Sense::up:
      return hdot_fpm >= info.target_fpm;
    case Sense::down:
      return hdot_fpm <= info.target_fpm;
    case Sense::none:
      break;
  }
  return true;
}

std::pair<double, double> vcas_accel_interval(Advisory adv, double hdot_fpm, const VcConfig& cfg) {
  const auto& info = advisory_info(adv);
  if (info.sense == Sense::none) return {-kGravity / 8.0, kGravity / 8.0};
  if (vcas_compliant(adv, hdot_fpm)) return {0.0, 0.0};
  const double weakest = info.strengthened ? kGravity / 3.0 : kGravity / 4.0;
  const double strongest = cfg.accel_scale * kGravity / 3.0;
  const double lo = std::min(weakest, strongest);
  const double hi = std::max(weakest, strongest);
  if (info.sense == Sense::up) return {lo, hi};
  return {-hi, -lo};
}

VcState vcas_step(const VcState& s, Advisory new_adv, double a, const VcConfig& cfg) {
  (void)cfg;
  if (s.tau <= 0) throw TerminalState("vcas_step: tau is already 0");
  const auto& info = advisory_info(s.adv);
  const bool pin = info.sense != Sense::none && !vcas_compliant(s.adv, s.hdot0);
  const Advance step = advance(s.hdot0 / kSecondsPerMinute, a, info.target_fpm / kSecondsPerMinute, pin);
  VcState next;
  next.h = s.h - step.displacement;
  next.hdot0 = step.rate * kSecondsPerMinute;
  next.tau = s.tau - 1;
  next.adv = new_adv;
  return next;
}

VcState vcas_clamp(const VcState& s, const VcConfig& cfg) {
  VcState out = s;
  out.h = std::clamp(s.h, -cfg.h_max, cfg.h_max);
  out.hdot0 = std::clamp(s.hdot0, -cfg.hdot_max, cfg.hdot_max);
  return out;
}

bool vcas_nmac(const VcState& s, const VcConfig& cfg) { return s.tau == 0 && std::abs(s.h) < cfg.nmac_h; }

HyperRect vcas_reach_rect(const HyperRect& cell, Advisory executing, Advisory issued, const VcConfig& cfg) {
  (void)issued;  // the issued advisory only takes effect on the following step
  if (cell.dims() != 2) throw InvalidArgument("vcas_reach_rect: cell must be (h, hdot0)");
  const auto& info = advisory_info(executing);
  const double target = info.target_fpm;

  struct Part {
    double lo, hi;  // ft/min
    double a_lo, a_hi;
    bool pin;
  };
  std::vector<Part> parts;
  const double r_lo = cell.lo(1), r_hi = cell.hi(1);
  if (info.sense == Sense::none) {
    parts.push_back({r_lo, r_hi, -kGravity / 8.0, kGravity / 8.0, false});
  } else {
    const bool up = info.sense == Sense::up;
    // Non-compliant side accelerates toward the target; the compliant side holds its rate.
    const double nc_lo = up ? r_lo : std::max(r_lo, target);
    const double nc_hi = up ? std::min(r_hi, target) : r_hi;
    const bool has_nc = up ? r_lo < target : r_hi > target;
    if (has_nc) {
      const double probe = up ? nc_lo : nc_hi;
      const auto [a_lo, a_hi] = vcas_accel_interval(executing, probe, cfg);
      parts.push_back({nc_lo, nc_hi, a_lo, a_hi, true});
    }
    const double c_lo = up ? std::max(r_lo, target) : r_lo;
    const double c_hi = up ? r_hi : std::min(r_hi, target);
    const bool has_c = up ? r_hi >= target : r_lo <= target;
    if (has_c) parts.push_back({c_lo, c_hi, 0.0, 0.0, false});
  }

  double h_lo = std::numeric_limits<double>::infinity(), h_hi = -h_lo;
  double d_lo = h_lo, d_hi = -h_lo;
  const double target_fps = target / kSecondsPerMinute;
  for (const auto& part : parts) {
    // Displacement and final rate are nondecreasing in both the initial rate and the
    // acceleration, so the extremes sit at opposite corners.
    const Advance slow = advance(part.lo / kSecondsPerMinute, part.a_lo, target_fps, part.pin);
    const Advance fast = advance(part.hi / kSecondsPerMinute, part.a_hi, target_fps, part.pin);
    h_lo = std::min(h_lo, cell.lo(0) - fast.displacement);
    h_hi = std::max(h_hi, cell.hi(0) - slow.displacement);
    d_lo = std::min(d_lo, slow.rate * kSecondsPerMinute);
    d_hi = std::max(d_hi, fast.rate * kSecondsPerMinute);
  }
  const double h_pad = 1e-9 + 1e-12 * std::max(std::abs(h_lo), std::abs(h_hi));
  const double d_pad = 1e-9 + 1e-12 * std::max(std::abs(d_lo), std::abs(d_hi));
  Eigen::Vector2d lo(std::clamp(h_lo - h_pad, -cfg.h_max, cfg.h_max),
                     std::clamp(d_lo - d_pad, -cfg.hdot_max, cfg.hdot_max));
  Eigen::Vector2d hi(std::clamp(h_hi + h_pad, -cfg.h_max, cfg.h_max),
                     std::clamp(d_hi + d_pad, -cfg.hdot_max, cfg.hdot_max));
  return HyperRect(lo, hi);
}

}  // namespace nnreach
