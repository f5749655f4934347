#pragma once

#include <bit>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nnreach/grid.hpp"
#include "nnreach/network.hpp"

namespace nnreach {

inline constexpr std::size_t kMaxActions = 32;

/// Set of discrete actions, stored as a bitmask.
class ActionSet {
 public:
  constexpr ActionSet() = default;
  constexpr explicit ActionSet(std::uint32_t bits) : bits_(bits) {}

  static ActionSet single(ActionId a) { return ActionSet(std::uint32_t{1} << a.index); }
  static ActionSet all(std::size_t n) {
    return ActionSet(n >= 32 ? 0xffffffffu : ((std::uint32_t{1} << n) - 1));
  }

  void insert(ActionId a) { bits_ |= std::uint32_t{1} << a.index; }
  void erase(ActionId a) { bits_ &= ~(std::uint32_t{1} << a.index); }
  bool contains(ActionId a) const { return a.index < kMaxActions && ((bits_ >> a.index) & 1u); }
  std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  bool empty() const { return bits_ == 0; }
  std::uint32_t bits() const { return bits_; }

  bool is_subset_of(ActionSet other) const { return (bits_ & ~other.bits_) == 0; }

  ActionSet& operator|=(ActionSet other) {
    bits_ |= other.bits_;
    return *this;
  }
  friend ActionSet operator|(ActionSet a, ActionSet b) { return ActionSet(a.bits_ | b.bits_); }
  friend ActionSet operator&(ActionSet a, ActionSet b) { return ActionSet(a.bits_ & b.bits_); }
  friend bool operator==(ActionSet a, ActionSet b) = default;

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::uint32_t rest = bits_; rest != 0; rest &= rest - 1) {
      fn(ActionId{static_cast<std::size_t>(std::countr_zero(rest))});
    }
  }

  std::vector<ActionId> to_vector() const;
  /// Comma-separated indices, e.g. "0,2".
  std::string to_string() const;
  static ActionSet parse(const std::string& text);

 private:
  std::uint32_t bits_ = 0;
};

/// Action sets keyed by (layer, CellId). A layer is one combination of the grid's discrete
/// axes (row-major, last axis fastest); grids without discrete axes have one layer.
/// Missing entries read back as the empty set.
class ActionMap {
 public:
  ActionMap() = default;
  ActionMap(std::size_t layers, CellId id_capacity)
      : layers_(layers), capacity_(id_capacity), sets_(layers * static_cast<std::size_t>(id_capacity)) {}

  std::size_t layers() const { return layers_; }
  CellId capacity() const { return capacity_; }

  void set(std::size_t layer, CellId id, ActionSet actions) { sets_.at(offset(layer, id)) = actions; }
  ActionSet get(std::size_t layer, CellId id) const {
    return (layer < layers_ && id < capacity_) ? sets_[offset(layer, id)] : ActionSet{};
  }

  /// Grows the id space, keeping existing entries (used after refinement).
  void reserve_ids(CellId id_capacity);

  /// Sum of set sizes over the grid's live cells and every layer.
  std::size_t total_actions(const Grid& grid) const;

 private:
  std::size_t offset(std::size_t layer, CellId id) const { return layer * capacity_ + id; }

  std::size_t layers_ = 0;
  CellId capacity_ = 0;
  std::vector<ActionSet> sets_;
};

/// Lines `cellid actions=<comma list>`; multi-layer maps add a `layer=<k>` line before each block.
void write_action_map(std::ostream& out, const ActionMap& map, const Grid& grid);
ActionMap read_action_map(std::istream& in, const Grid& grid);

}  // namespace nnreach
