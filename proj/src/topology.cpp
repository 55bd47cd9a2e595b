#include "vmc/topology.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>
#include <tuple>

namespace vmc::topology {

std::string to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::UnknownModule: return "unknown-module";
    case RejectReason::DuplicateModule: return "duplicate-module";
    case RejectReason::InvalidSlot: return "invalid-slot";
    case RejectReason::SlotOccupied: return "slot-occupied";
    case RejectReason::SlotEmpty: return "slot-empty";
    case RejectReason::NoFreePlug: return "no-free-plug";
    case RejectReason::Cycle: return "cycle";
  }
  return "unknown";
}

std::string slot_resource_out(std::string_view module, int slot) {
  return std::string(module) + "/slot" + std::to_string(slot) + "/r_out";
}
std::string slot_successin_in(std::string_view module, int slot) {
  return std::string(module) + "/slot" + std::to_string(slot) + "/s_in";
}
std::string plug_resource_in(std::string_view module, int plug) {
  return std::string(module) + "/plug" + std::to_string(plug) + "/r_in";
}
std::string plug_successin_out(std::string_view module, int plug) {
  return std::string(module) + "/plug" + std::to_string(plug) + "/s_out";
}

std::string leaf_id(const SlotRef& slot) {
  return slot.module_id + "-" + std::to_string(slot.slot);
}

std::optional<SlotRef> parse_leaf_id(std::string_view text) {
  const auto dash = text.rfind('-');
  if (dash == std::string_view::npos || dash == 0 || dash + 1 >= text.size()) {
    return std::nullopt;
  }
  int slot = 0;
  const auto digits = text.substr(dash + 1);
  auto [ptr, ec] =
      std::from_chars(digits.data(), digits.data() + digits.size(), slot);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
    return std::nullopt;
  }
  return SlotRef{std::string(text.substr(0, dash)), slot};
}

void TopologyGraph::add_module(ModuleDescriptor descriptor) {
  if (descriptor.module_id.empty()) {
    throw TopologyError(RejectReason::UnknownModule, "empty module id");
  }
  if (descriptor.parent_plugs > kParentPlugs) {
    throw TopologyError(RejectReason::NoFreePlug,
                        "a root node offers at most three parent plugs");
  }
  if (modules_.contains(descriptor.module_id)) {
    throw TopologyError(RejectReason::DuplicateModule,
                        "module " + descriptor.module_id + " already exists");
  }
  auto id = descriptor.module_id;
  modules_.emplace(std::move(id), std::move(descriptor));
}

bool TopologyGraph::has_module(std::string_view id) const {
  return modules_.find(id) != modules_.end();
}

const ModuleDescriptor& TopologyGraph::module(std::string_view id) const {
  require_module(id);
  return modules_.find(id)->second;
}

std::vector<ModuleDescriptor> TopologyGraph::modules() const {
  std::vector<ModuleDescriptor> out;
  out.reserve(modules_.size());
  for (const auto& [_, m] : modules_) out.push_back(m);
  return out;
}

void TopologyGraph::require_module(std::string_view id) const {
  if (!has_module(id)) {
    throw TopologyError(RejectReason::UnknownModule,
                        "unknown module " + std::string(id));
  }
}

std::optional<std::string> TopologyGraph::child_at(const SlotRef& slot) const {
  for (const auto& e : edges_) {
    if (e.parent == slot) return e.child;
  }
  return std::nullopt;
}

std::vector<Edge> TopologyGraph::parent_edges(std::string_view child) const {
  std::vector<Edge> out;
  for (const auto& e : edges_) {
    if (e.child == child) out.push_back(e);
  }
  return out;
}

bool TopologyGraph::reaches(std::string_view from, std::string_view to) const {
  if (from == to) return true;
  std::vector<std::string> stack{std::string(from)};
  std::set<std::string, std::less<>> seen;
  while (!stack.empty()) {
    auto cur = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    for (const auto& e : edges_) {
      if (e.parent.module_id != cur) continue;
      if (e.child == to) return true;
      stack.push_back(e.child);
    }
  }
  return false;
}

std::vector<WireEvent> TopologyGraph::attach(const std::string& parent,
                                             int slot,
                                             const std::string& child) {
  require_module(parent);
  require_module(child);
  if (slot < 1 || slot > static_cast<int>(kChildSlots)) {
    throw TopologyError(RejectReason::InvalidSlot,
                        "slot " + std::to_string(slot) + " does not exist");
  }
  const SlotRef where{parent, slot};
  if (auto occupant = child_at(where)) {
    throw TopologyError(RejectReason::SlotOccupied,
                        leaf_id(where) + " already holds " + *occupant);
  }
  // child -> ... -> parent would close a loop
  if (reaches(child, parent)) {
    throw TopologyError(RejectReason::Cycle,
                        "attaching " + child + " below " + leaf_id(where) +
                            " creates a cycle");
  }
  const auto& desc = modules_.find(child)->second;
  std::set<int> used;
  for (const auto& e : parent_edges(child)) used.insert(e.child_plug);
  int plug = 0;
  for (int p = 1; p <= static_cast<int>(desc.parent_plugs); ++p) {
    if (!used.contains(p)) {
      plug = p;
      break;
    }
  }
  if (plug == 0) {
    throw TopologyError(RejectReason::NoFreePlug,
                        child + " has no free parent plug");
  }
  edges_.push_back(Edge{where, child, plug});
  return {
      {WireEvent::Kind::Plug, slot_resource_out(parent, slot),
       plug_resource_in(child, plug)},
      {WireEvent::Kind::Plug, plug_successin_out(child, plug),
       slot_successin_in(parent, slot)},
  };
}

std::vector<WireEvent> TopologyGraph::detach(const std::string& parent,
                                             int slot) {
  require_module(parent);
  const SlotRef where{parent, slot};
  auto it = std::find_if(edges_.begin(), edges_.end(),
                         [&](const Edge& e) { return e.parent == where; });
  if (it == edges_.end()) {
    throw TopologyError(RejectReason::SlotEmpty,
                        leaf_id(where) + " holds no child");
  }
  const Edge e = *it;
  edges_.erase(it);
  return {
      {WireEvent::Kind::Unplug, slot_resource_out(parent, slot),
       plug_resource_in(e.child, e.child_plug)},
      {WireEvent::Kind::Unplug, plug_successin_out(e.child, e.child_plug),
       slot_successin_in(parent, slot)},
  };
}

std::vector<SlotRef> TopologyGraph::free_leaves() const {
  std::vector<SlotRef> out;
  for (const auto& [id, _] : modules_) {
    for (int k = 1; k <= static_cast<int>(kChildSlots); ++k) {
      SlotRef s{id, k};
      if (!child_at(s)) out.push_back(std::move(s));
    }
  }
  return out;
}

std::set<std::string> TopologyGraph::subtree(std::string_view root) const {
  require_module(root);
  std::set<std::string> out;
  std::vector<std::string> stack{std::string(root)};
  while (!stack.empty()) {
    auto cur = std::move(stack.back());
    stack.pop_back();
    if (!out.insert(cur).second) continue;
    for (const auto& e : edges_) {
      if (e.parent.module_id == cur) stack.push_back(e.child);
    }
  }
  return out;
}

bool TopologyGraph::is_acyclic() const {
  // Kahn's algorithm over module ids.
  std::map<std::string, int, std::less<>> indegree;
  for (const auto& [id, _] : modules_) indegree[id] = 0;
  for (const auto& e : edges_) ++indegree[e.child];
  std::vector<std::string> ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push_back(id);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    auto cur = std::move(ready.back());
    ready.pop_back();
    ++visited;
    for (const auto& e : edges_) {
      if (e.parent.module_id == cur && --indegree[e.child] == 0) {
        ready.push_back(e.child);
      }
    }
  }
  return visited == indegree.size();
}

namespace {

std::vector<std::pair<SlotRef, std::string>> edge_pairs(
    const std::vector<Edge>& edges) {
  std::vector<std::pair<SlotRef, std::string>> out;
  for (const auto& e : edges) out.emplace_back(e.parent, e.child);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

bool TopologyGraph::same_structure(const TopologyGraph& other) const {
  if (modules_.size() != other.modules_.size()) return false;
  for (const auto& [id, m] : modules_) {
    auto it = other.modules_.find(id);
    if (it == other.modules_.end() || !(it->second == m)) return false;
  }
  return edge_pairs(edges_) == edge_pairs(other.edges_);
}

std::string registry_export(const TopologyGraph& graph) {
  std::ostringstream out;
  for (const auto& m : graph.modules()) {
    out << m.module_id << " L" << m.level << '\n';
  }
  for (const auto& [parent, child] : edge_pairs(graph.edges())) {
    out << parent.module_id << '.' << parent.slot << " -> " << child << '\n';
  }
  return out.str();
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool valid_id(std::string_view id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '-';
  });
}

struct PendingEdge {
  std::size_t line;
  SlotRef parent;
  std::string child;
};

}  // namespace

TopologyGraph registry_import(std::string_view document) {
  TopologyGraph graph;
  std::vector<PendingEdge> pending;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= document.size()) {
    const auto end = document.find('\n', pos);
    const auto raw = document.substr(
        pos, end == std::string_view::npos ? std::string_view::npos
                                           : end - pos);
    pos = end == std::string_view::npos ? document.size() + 1 : end + 1;
    ++line_no;
    auto line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;

    if (const auto arrow = line.find("->"); arrow != std::string_view::npos) {
      const auto lhs = trim(line.substr(0, arrow));
      const auto rhs = trim(line.substr(arrow + 2));
      const auto dot = lhs.rfind('.');
      if (dot == std::string_view::npos) {
        throw RegistryError(line_no, "expected parent_id.slot before '->'");
      }
      const auto parent = lhs.substr(0, dot);
      const auto slot_text = lhs.substr(dot + 1);
      int slot = 0;
      auto [ptr, ec] = std::from_chars(
          slot_text.data(), slot_text.data() + slot_text.size(), slot);
      if (ec != std::errc{} || ptr != slot_text.data() + slot_text.size()) {
        throw RegistryError(line_no, "slot is not an integer");
      }
      if (!valid_id(parent) || !valid_id(rhs)) {
        throw RegistryError(line_no, "malformed module id");
      }
      pending.push_back({line_no, SlotRef{std::string(parent), slot},
                         std::string(rhs)});
      continue;
    }

    std::istringstream words{std::string(line)};
    std::string id, level_text, extra;
    words >> id >> level_text >> extra;
    if (!valid_id(id) || !extra.empty()) {
      throw RegistryError(line_no, "expected 'module_id [L<level>]'");
    }
    int level = 0;
    if (!level_text.empty()) {
      if (level_text.size() < 2 || level_text[0] != 'L') {
        throw RegistryError(line_no, "level must look like L0, L1, ...");
      }
      auto [ptr, ec] = std::from_chars(
          level_text.data() + 1, level_text.data() + level_text.size(), level);
      if (ec != std::errc{} || ptr != level_text.data() + level_text.size() ||
          level < 0) {
        throw RegistryError(line_no, "level must look like L0, L1, ...");
      }
    }
    try {
      graph.add_module(ModuleDescriptor{id, level});
    } catch (const TopologyError& e) {
      throw RegistryError(line_no, e.what());
    }
  }

  for (const auto& p : pending) {
    for (const auto* id : {&p.parent.module_id, &p.child}) {
      if (!graph.has_module(*id)) graph.add_module(ModuleDescriptor{*id, 0});
    }
  }
  std::sort(pending.begin(), pending.end(), [](const auto& a, const auto& b) {
    return std::tie(a.parent, a.child) < std::tie(b.parent, b.child);
  });
  for (const auto& p : pending) {
    try {
      graph.attach(p.parent.module_id, p.parent.slot, p.child);
    } catch (const TopologyError& e) {
      throw RegistryError(p.line, e.what());
    }
  }
  return graph;
}

}  // namespace vmc::topology
