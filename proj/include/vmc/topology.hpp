#pragma once

// Rooted graph of Y-modules and its connectivity registry.
//
// Every module has exactly two child slots (its leaves, numbered 1 and 2) and
// up to three parent plugs on its root node. An edge joins a parent's child
// slot to one of the child's parent plugs and is realised on the channel layer
// by two wires: resource flowing down and successin flowing up.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vmc/core.hpp"

namespace vmc::topology {

struct ModuleDescriptor {
  std::string module_id;
  int level = 0;
  static constexpr std::size_t child_slots = kChildSlots;
  std::size_t parent_plugs = kParentPlugs;

  bool operator==(const ModuleDescriptor&) const = default;
};

/// A child slot of a module; `slot` is 1-based.
struct SlotRef {
  std::string module_id;
  int slot = 1;

  auto operator<=>(const SlotRef&) const = default;
};

struct Edge {
  SlotRef parent;
  std::string child;
  /// 1-based parent plug on the child's root node.
  int child_plug = 1;

  bool operator==(const Edge&) const = default;
};

enum class RejectReason {
  UnknownModule,
  DuplicateModule,
  InvalidSlot,
  SlotOccupied,
  SlotEmpty,
  NoFreePlug,
  Cycle,
};

std::string to_string(RejectReason reason);

class TopologyError : public std::runtime_error {
 public:
  TopologyError(RejectReason reason, const std::string& what)
      : std::runtime_error(what), reason_(reason) {}
  RejectReason reason() const { return reason_; }

 private:
  RejectReason reason_;
};

/// A plug or unplug of one directed wire between two named pins.
struct WireEvent {
  enum class Kind { Plug, Unplug };
  Kind kind = Kind::Plug;
  std::string sender;
  std::string receiver;

  bool operator==(const WireEvent&) const = default;
};

// Pin naming shared by the topology and the runtime.
std::string slot_resource_out(std::string_view module, int slot);
std::string slot_successin_in(std::string_view module, int slot);
std::string plug_resource_in(std::string_view module, int plug);
std::string plug_successin_out(std::string_view module, int plug);

/// "RPN1" + slot 2 -> "RPN1-2".
std::string leaf_id(const SlotRef& slot);
/// Inverse of leaf_id; nullopt when the text is not of that form.
std::optional<SlotRef> parse_leaf_id(std::string_view text);

class TopologyGraph {
 public:
  void add_module(ModuleDescriptor descriptor);
  bool has_module(std::string_view id) const;
  const ModuleDescriptor& module(std::string_view id) const;
  std::vector<ModuleDescriptor> modules() const;
  const std::vector<Edge>& edges() const { return edges_; }

  /// Strong guarantee: on TopologyError the graph is unchanged.
  std::vector<WireEvent> attach(const std::string& parent, int slot,
                                const std::string& child);
  std::vector<WireEvent> detach(const std::string& parent, int slot);

  std::optional<std::string> child_at(const SlotRef& slot) const;
  std::vector<Edge> parent_edges(std::string_view child) const;
  /// Child slots not occupied by another module.
  std::vector<SlotRef> free_leaves() const;
  /// The module and every module reachable below it.
  std::set<std::string> subtree(std::string_view root) const;
  bool is_acyclic() const;

  /// Equality on modules and on (parent slot, child) pairs.
  bool same_structure(const TopologyGraph& other) const;

 private:
  void require_module(std::string_view id) const;
  bool reaches(std::string_view from, std::string_view to) const;

  std::map<std::string, ModuleDescriptor, std::less<>> modules_;
  std::vector<Edge> edges_;
};

class RegistryError : public std::runtime_error {
 public:
  RegistryError(std::size_t line, const std::string& what)
      : std::runtime_error("registry line " + std::to_string(line) + ": " +
                           what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Line-oriented connectivity document: module declarations (`RPN1 L0`)
/// followed by one edge per line (`RPN1.1 -> RPN2`), sorted.
std::string registry_export(const TopologyGraph& graph);

/// Accepts declarations, edges, blank lines and `#` comments in any order.
/// Modules that only appear in edges are added at level 0.
TopologyGraph registry_import(std::string_view document);

}  // namespace vmc::topology
