#include <doctest.h>

#include "support.hpp"
#include "vmc/channel.hpp"
#include "vmc/topology.hpp"

using namespace vmc;
using namespace vmc::topology;
using vmc::test::Gen;

namespace {

TopologyGraph with_modules(std::initializer_list<const char*> ids) {
  TopologyGraph g;
  int level = 0;
  for (const char* id : ids) g.add_module({id, level++});
  return g;
}

RejectReason attach_reason(TopologyGraph& g, const std::string& parent, int slot,
                           const std::string& child) {
  try {
    g.attach(parent, slot, child);
  } catch (const TopologyError& e) {
    return e.reason();
  }
  FAIL("attach was accepted");
  return RejectReason::UnknownModule;
}

// Random valid graph: tree growth plus occasional extra parents.
TopologyGraph random_graph(Gen& gen, int max_modules) {
  TopologyGraph g;
  const int n = gen.integer(0, max_modules);
  for (int i = 0; i < n; ++i) g.add_module({"M" + std::to_string(i), gen.integer(0, 4)});
  for (int child = 1; child < n; ++child) {
    const int links = gen.integer(0, 3);
    for (int k = 0; k < links; ++k) {
      const auto parent = "M" + std::to_string(gen.integer(0, child - 1));
      try {
        g.attach(parent, gen.integer(1, 2), "M" + std::to_string(child));
      } catch (const TopologyError&) {
      }
    }
  }
  return g;
}

}  // namespace

TEST_CASE("attach examples") {
  auto g = with_modules({"RPN1", "RPN2"});
  const auto events = g.attach("RPN1", 1, "RPN2");
  REQUIRE(events.size() == 2);
  CHECK(events[0].kind == WireEvent::Kind::Plug);
  CHECK(events[0].sender == slot_resource_out("RPN1", 1));
  CHECK(events[0].receiver == plug_resource_in("RPN2", 1));
  CHECK(events[1].sender == plug_successin_out("RPN2", 1));
  CHECK(events[1].receiver == slot_successin_in("RPN1", 1));
  CHECK(g.child_at({"RPN1", 1}) == std::optional<std::string>("RPN2"));

  CHECK(attach_reason(g, "RPN1", 1, "RPN2") == RejectReason::SlotOccupied);
  CHECK(attach_reason(g, "RPN1", 2, "RPN1") == RejectReason::Cycle);
  CHECK(attach_reason(g, "RPN2", 1, "RPN1") == RejectReason::Cycle);
  CHECK(attach_reason(g, "RPN1", 3, "RPN2") == RejectReason::InvalidSlot);
  CHECK(attach_reason(g, "RPN9", 1, "RPN2") == RejectReason::UnknownModule);
  CHECK(to_string(RejectReason::SlotOccupied) == "slot-occupied");
}

TEST_CASE("a rejected attach leaves the graph unchanged") {
  auto g = with_modules({"A", "B", "C"});
  g.attach("A", 1, "B");
  g.attach("B", 2, "C");
  const auto before = registry_export(g);
  CHECK_THROWS_AS(g.attach("C", 1, "A"), TopologyError);
  CHECK_THROWS_AS(g.attach("A", 1, "C"), TopologyError);
  CHECK(registry_export(g) == before);
}

TEST_CASE("multi-parent attach uses the next free plug") {
  auto g = with_modules({"A", "B", "C", "D", "E"});
  g.attach("A", 1, "E");
  g.attach("B", 1, "E");
  const auto events = g.attach("C", 2, "E");
  CHECK(events[0].receiver == plug_resource_in("E", 3));
  CHECK(attach_reason(g, "D", 1, "E") == RejectReason::NoFreePlug);
  CHECK(g.parent_edges("E").size() == 3);
  g.detach("B", 1);
  CHECK(g.attach("D", 1, "E")[0].receiver == plug_resource_in("E", 2));
}

TEST_CASE("detach examples") {
  auto g = with_modules({"RPN1", "RPN2"});
  g.attach("RPN1", 1, "RPN2");
  const auto events = g.detach("RPN1", 1);
  REQUIRE(events.size() == 2);
  CHECK(events[0].kind == WireEvent::Kind::Unplug);
  CHECK(events[0].sender == slot_resource_out("RPN1", 1));
  CHECK_FALSE(g.child_at({"RPN1", 1}));
  try {
    g.detach("RPN1", 1);
    FAIL("detach from an empty slot was accepted");
  } catch (const TopologyError& e) {
    CHECK(e.reason() == RejectReason::SlotEmpty);
  }
}

TEST_CASE("free leaves and subtrees") {
  auto g = with_modules({"RPN1", "RPN2", "RPN5", "RPN4"});
  g.attach("RPN1", 1, "RPN2");
  g.attach("RPN2", 2, "RPN5");
  g.attach("RPN2", 1, "RPN4");
  std::vector<std::string> free;
  for (const auto& s : g.free_leaves()) free.push_back(leaf_id(s));
  CHECK(free == std::vector<std::string>{"RPN1-2", "RPN4-1", "RPN4-2", "RPN5-1", "RPN5-2"});
  CHECK(g.subtree("RPN2") == std::set<std::string>{"RPN2", "RPN4", "RPN5"});
  CHECK(parse_leaf_id("RPN5-2") == SlotRef{"RPN5", 2});
  CHECK_FALSE(parse_leaf_id("RPN5"));
}

TEST_CASE("registry export of the four-module tree") {
  auto g = with_modules({"RPN1", "RPN2", "RPN5", "RPN4"});
  g.attach("RPN1", 1, "RPN2");
  g.attach("RPN2", 2, "RPN5");
  g.attach("RPN2", 1, "RPN4");
  const auto doc = registry_export(g);
  CHECK(doc ==
        "RPN1 L0\nRPN2 L1\nRPN4 L3\nRPN5 L2\n"
        "RPN1.1 -> RPN2\nRPN2.1 -> RPN4\nRPN2.2 -> RPN5\n");
  CHECK(registry_import(doc).same_structure(g));
}

TEST_CASE("registry of an empty graph") {
  TopologyGraph g;
  CHECK(registry_export(g).empty());
  CHECK(registry_import("").edges().empty());
  CHECK(registry_import("# nothing here\n\n").modules().empty());
}

TEST_CASE("registry import is order-insensitive and tolerates comments") {
  const auto a = registry_import("RPN2.2 -> RPN5\n# note\nRPN1.1 -> RPN2  # grown\n");
  const auto b = registry_import("RPN1.1 -> RPN2\r\nRPN2.2 -> RPN5\r\n");
  CHECK(a.same_structure(b));
  CHECK(a.edges().size() == 2);
}

TEST_CASE("registry import errors carry the line") {
  auto line_of = [](std::string_view doc) -> std::size_t {
    try {
      registry_import(doc);
    } catch (const RegistryError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("A.1 -> B\nA -> C\n") == 2);
  CHECK(line_of("A.x -> B\n") == 1);
  CHECK(line_of("\n\nA.1 -> B\nB.1 -> A\n") == 4);
  CHECK(line_of("A.1 -> B\nA.1 -> C\n") == 2);
  CHECK(line_of("A.3 -> B\n") == 1);
  CHECK(line_of("A L0\nA L1\n") == 2);
  CHECK(line_of("A Lx\n") == 1);
  CHECK(line_of("A.1 -> B!\n") == 1);
}

TEST_CASE("random graphs round-trip through the registry and stay acyclic") {
  Gen gen(21);
  for (int trial = 0; trial < 500; ++trial) {
    const auto g = random_graph(gen, 15);
    CHECK(g.is_acyclic());
    const auto back = registry_import(registry_export(g));
    CHECK(back.same_structure(g));
    CHECK(registry_export(back) == registry_export(g));
  }
}

TEST_CASE("random attach/detach sequences keep invariants and event parity") {
  Gen gen(22);
  channel::BusConfig cfg;
  cfg.mode = channel::Mode::Ideal;
  for (int trial = 0; trial < 100; ++trial) {
    TopologyGraph g;
    channel::ChannelBus bus(cfg);
    const int n = gen.integer(2, 10);
    for (int i = 0; i < n; ++i) {
      const auto id = "M" + std::to_string(i);
      g.add_module({id, 0});
      for (int s = 1; s <= 2; ++s) {
        bus.add_sender(slot_resource_out(id, s), {});
        bus.add_receiver(slot_successin_in(id, s), {});
      }
      for (int p = 1; p <= 3; ++p) {
        bus.add_receiver(plug_resource_in(id, p), {});
        bus.add_sender(plug_successin_out(id, p), {});
      }
    }
    std::size_t plugs = 0, unplugs = 0;
    for (int op = 0; op < 60; ++op) {
      const auto parent = "M" + std::to_string(gen.integer(0, n - 1));
      const int slot = gen.integer(1, 2);
      std::vector<WireEvent> events;
      try {
        if (gen.integer(0, 2) == 0) {
          events = g.detach(parent, slot);
        } else {
          events = g.attach(parent, slot, "M" + std::to_string(gen.integer(0, n - 1)));
        }
      } catch (const TopologyError&) {
        continue;
      }
      for (const auto& e : events) {
        if (e.kind == WireEvent::Kind::Plug) {
          bus.plug(e.sender, e.receiver, {});
          ++plugs;
        } else {
          bus.unplug(e.sender, e.receiver, {});
          ++unplugs;
        }
      }
      CHECK(g.is_acyclic());
      // each occupied slot relays exactly one child
      std::set<SlotRef> seen;
      for (const auto& e : g.edges()) CHECK(seen.insert(e.parent).second);
      CHECK(2 * g.edges().size() == plugs - unplugs);
    }
    CHECK(bus.plug_events() == plugs);
    CHECK(bus.unplug_events() == unplugs);
  }
}
