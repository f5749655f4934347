#include "nnreach/action_set.hpp"

#include <istream>
#include <ostream>

#include "nnreach/text.hpp"

namespace nnreach {

std::vector<ActionId> ActionSet::to_vector() const {
  std::vector<ActionId> out;
  for_each([&](ActionId a) { out.push_back(a); });
  return out;
}

std::string ActionSet::to_string() const {
  std::string out;
  for_each([&](ActionId a) {
    if (!out.empty()) out.push_back(',');
    out += std::to_string(a.index);
  });
  return out;
}

ActionSet ActionSet::parse(const std::string& text) {
  ActionSet set;
  if (trim(text).empty()) return set;
  for (auto part : split(text, ',')) {
    const auto v = parse_int(part);
    if (v < 0 || v >= static_cast<long long>(kMaxActions)) {
      throw std::invalid_argument("action index out of range: " + std::string(part));
    }
    set.insert(ActionId{static_cast<std::size_t>(v)});
  }
  return set;
}

void ActionMap::reserve_ids(CellId id_capacity) {
  if (id_capacity <= capacity_) return;
  std::vector<ActionSet> grown(layers_ * static_cast<std::size_t>(id_capacity));
  for (std::size_t l = 0; l < layers_; ++l) {
    for (CellId id = 0; id < capacity_; ++id) grown[l * id_capacity + id] = sets_[offset(l, id)];
  }
  sets_.swap(grown);
  capacity_ = id_capacity;
}

std::size_t ActionMap::total_actions(const Grid& grid) const {
  std::size_t total = 0;
  for (std::size_t l = 0; l < layers_; ++l) {
    for (const auto& c : grid.cells()) total += get(l, c.id).size();
  }
  return total;
}

void write_action_map(std::ostream& out, const ActionMap& map, const Grid& grid) {
  for (std::size_t l = 0; l < map.layers(); ++l) {
    if (map.layers() > 1) out << "layer=" << l << '\n';
    for (const auto& c : grid.cells()) {
      out << c.id << " actions=" << map.get(l, c.id).to_string() << '\n';
    }
  }
}

ActionMap read_action_map(std::istream& in, const Grid& grid) {
  ActionMap map(grid.layer_count(), grid.next_id());
  std::string line;
  std::size_t lineno = 0;
  std::size_t layer = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    try {
      if (view.starts_with("layer=")) {
        const auto l = parse_int(view.substr(6));
        if (l < 0 || static_cast<std::size_t>(l) >= map.layers()) throw ParseError(lineno, "layer out of range");
        layer = static_cast<std::size_t>(l);
        continue;
      }
      const auto space = view.find(' ');
      if (space == std::string_view::npos) throw ParseError(lineno, "expected '<cellid> actions=...'");
      const auto id = parse_int(view.substr(0, space));
      auto rest = trim(view.substr(space + 1));
      if (!rest.starts_with("actions=")) throw ParseError(lineno, "expected 'actions='");
      if (id < 0 || !grid.contains(static_cast<CellId>(id))) throw ParseError(lineno, "unknown cell id");
      map.set(layer, static_cast<CellId>(id), ActionSet::parse(std::string(rest.substr(8))));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return map;
}

}  // namespace nnreach
