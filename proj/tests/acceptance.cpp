// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <fmt/core.h>

#include "vmc/channel.hpp"
#include "vmc/core.hpp"
#include "vmc/scenarios.hpp"

using namespace vmc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string observed;
};

bool close_rel(double a, double b, double rel = 1e-12) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

fs::path work_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / fmt::format("vmc-accept-{}-{}", name, ::getpid());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// --- conservation ---------------------------------------------------------

struct Edge {
  std::size_t parent, slot, child, plug;
};

struct RandomGraph {
  std::size_t n = 0;
  std::vector<Edge> edges;
  std::vector<std::array<std::optional<std::size_t>, kChildSlots>> slot_edge;
  std::vector<std::array<std::optional<std::size_t>, kParentPlugs>> plug_edge;
};

// Modules are numbered so that every parent precedes its children.
RandomGraph random_graph(std::mt19937_64& rng) {
  RandomGraph g;
  g.n = std::uniform_int_distribution<std::size_t>(1, 15)(rng);
  g.slot_edge.resize(g.n);
  g.plug_edge.resize(g.n);
  for (std::size_t c = 1; c < g.n; ++c) {
    std::vector<std::pair<std::size_t, std::size_t>> free;
    for (std::size_t p = 0; p < c; ++p)
      for (std::size_t k = 0; k < kChildSlots; ++k)
        if (!g.slot_edge[p][k]) free.emplace_back(p, k);
    std::shuffle(free.begin(), free.end(), rng);
    // mostly trees, with a fair number of two- and three-parent modules
    const std::size_t want = std::discrete_distribution<std::size_t>({1, 6, 2, 1})(rng);
    for (std::size_t i = 0; i < std::min(want, free.size()); ++i) {
      auto [p, k] = free[i];
      const std::size_t plug = i;
      g.slot_edge[p][k] = g.edges.size();
      g.plug_edge[c][plug] = g.edges.size();
      g.edges.push_back({p, k, c, plug});
    }
  }
  return g;
}

Outcome conservation() {
  std::mt19937_64 rng(2018);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Genome genome = Genome::reference();
  std::size_t junction_checks = 0, multi_parent = 0;
  double worst = 0.0;
  std::string failure;

  auto note = [&](double a, double b, const std::string& what) {
    const double scale = std::max(std::abs(a), std::abs(b));
    if (scale > 0) worst = std::max(worst, std::abs(a - b) / scale);
    if (!close_rel(a, b) && failure.empty()) failure = fmt::format("{}: {} vs {}", what, a, b);
    ++junction_checks;
  };

  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = random_graph(rng);
    StepParams params;
    params.root_generation = 0.05 + unit(rng);
    std::vector<NodeVmcState> state(g.n, NodeVmcState::cold_start());
    std::vector<std::array<SensorFrame, kChildSlots>> leaves(g.n);
    for (auto& l : leaves)
      for (auto& f : l) f = SensorFrame::clamped(unit(rng), unit(rng));
    std::vector<double> edge_resource(g.edges.size(), 0.0);
    std::vector<double> edge_successin(g.edges.size(), 0.0);
    for (const auto& e : g.edges)
      if (e.plug > 0) ++multi_parent;

    for (int round = 0; round < 25; ++round) {
      double generated = 0.0, at_leaves = 0.0;
      std::vector<double> next_successin(g.edges.size(), 0.0);
      for (std::size_t m = 0; m < g.n; ++m) {
        NodeInputs in;
        in.parent_resource.resize(kParentPlugs);
        for (std::size_t p = 0; p < kParentPlugs; ++p)
          if (auto e = g.plug_edge[m][p]) in.parent_resource[p] = edge_resource[*e];
        in.child_successin.resize(kChildSlots);
        for (std::size_t k = 0; k < kChildSlots; ++k)
          if (auto e = g.slot_edge[m][k]) in.child_successin[k] = edge_successin[*e];
        in.leaf_sensors.assign(leaves[m].begin(), leaves[m].end());
        in.node_sensors = mean_frame(in.leaf_sensors);

        const auto r = node_step(state[m], in, genome, params);
        state[m] = r.state;
        generated += r.resource_generated;

        double to_children = 0.0;
        for (double x : r.resource_to_children) to_children += x;
        note(to_children, r.resource_in, "resource at a junction");
        double to_parents = 0.0;
        for (double x : r.successin_to_parents) to_parents += x;
        if (r.resource_generated == 0.0) note(to_parents, r.state.successin_out, "successin at a junction");

        for (std::size_t k = 0; k < kChildSlots; ++k) {
          if (auto e = g.slot_edge[m][k]) {
            edge_resource[*e] = r.resource_to_children[k];
          } else {
            at_leaves += r.resource_to_children[k];
          }
        }
        for (std::size_t p = 0; p < kParentPlugs; ++p)
          if (auto e = g.plug_edge[m][p]) next_successin[*e] = r.successin_to_parents[p];
      }
      // parents run first, so every unit generated this round reaches a leaf
      note(at_leaves, generated, "generated vs delivered");
      edge_successin = next_successin;
    }
  }
  if (!failure.empty()) return {false, failure};
  return {true, fmt::format("{} checks, {} extra parent plugs, worst rel error {:.2e}",
                            junction_checks, multi_parent, worst)};
}

// --- vessel fixed point -----------------------------------------------------

Outcome vessel_fixed_point() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Genome genome = Genome::reference();
  double worst = 0.0, worst_ratio = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double v0 = unit(rng), s = unit(rng);
    const double target = std::pow(s, genome.beta);
    double v = v0;
    for (int step = 0; step < 200; ++step) {
      const double next = update_vessel(v, s, genome);
      // the distance to the fixed point shrinks by exactly alpha
      if (step < 20 && std::abs(v - target) > 1e-9) {
        worst_ratio = std::max(worst_ratio, std::abs((next - target) / (v - target) - genome.alpha));
      }
      v = next;
    }
    worst = std::max(worst, std::abs(v - target));
  }
  return {worst < 1e-6 && worst_ratio < 1e-6,
          fmt::format("max |V-S^b| after 200 steps {:.2e}, max ratio deviation {:.2e}", worst, worst_ratio)};
}

// --- channel accuracy -------------------------------------------------------

Outcome channel_accuracy() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int inside = 0, live = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    channel::BusConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(t) + 1;
    channel::ChannelBus bus(cfg);
    const SimTime zero{0};
    bus.add_sender("tx", zero);
    bus.add_receiver("rx", zero);
    bus.plug("tx", "rx", zero);
    bus.set_online("tx", true, zero);
    // every tenth trial sends an endpoint value
    const double value = t % 10 == 0 ? (t % 20 == 0 ? 0.0 : 1.0) : unit(rng);
    bus.transmit("tx", value, zero);
    const auto d = bus.read("rx", std::chrono::milliseconds(channel::kQueueCapacity));
    if (d.live()) ++live;
    if (d.live() && std::abs(d.value - value) <= 0.01) ++inside;
  }
  const double rate = static_cast<double>(inside) / trials;
  return {rate >= 0.99 && live == trials,
          fmt::format("{:.2f}% within 0.01, {}/{} live", 100 * rate, live, trials)};
}

// --- scenarios --------------------------------------------------------------

std::string failed_checks(const scenarios::Report& r) {
  std::string out;
  for (const auto& c : r.checks)
    if (!c.passed) out += fmt::format("; {} ({})", c.name, c.observed);
  return out;
}

double leaf_share(const runtime::StateSummary* s, const std::string& leaf) {
  if (!s) return -1.0;
  for (const auto& l : s->advice)
    if (l.leaf_id == leaf) return l.share;
  return 0.0;
}

Outcome characterization(const fs::path& fixtures) {
  const auto r = scenarios::run_characterization(fixtures, work_dir("char"));
  const double a = leaf_share(r.state("A"), "RPN1-1");
  const double b = leaf_share(r.state("B"), "RPN1-1");
  const bool even = std::abs(a - 0.5) <= 0.05 && std::abs(b - 0.5) <= 0.05;
  std::size_t ok = 0;
  for (const auto& c : r.checks) ok += c.passed;
  return {r.passed() && even && r.wall_seconds < 60.0,
          fmt::format("{}/{} checks, A {:.3f} B {:.3f}, {:.1f} s{}", ok, r.checks.size(), a, b,
                      r.wall_seconds, failed_checks(r))};
}

std::string advice_order(const runtime::StateSummary* s) {
  std::string out;
  if (!s) return "none";
  for (const auto& l : s->advice) out += (out.empty() ? "" : " ") + l.leaf_id;
  return out;
}

struct GrowthRun {
  scenarios::Report report;
  fs::path dir;
};

GrowthRun growth_run(const fs::path& fixtures, const std::string& name, std::uint64_t seed,
                     std::vector<runtime::TimedEvent> extra = {}) {
  scenarios::RunOptions opt;
  opt.seed = seed;
  opt.extra_events = std::move(extra);
  GrowthRun g;
  g.dir = work_dir(name);
  g.report = scenarios::run_interactive_growth(fixtures, g.dir, opt);
  return g;
}

Outcome growth(const GrowthRun& g) {
  const auto& r = g.report;
  std::size_t ok = 0;
  for (const auto& c : r.checks) ok += c.passed;
  std::string advised;
  for (const char* s : {"A", "B", "C", "D"}) {
    const auto* st = r.state(s);
    advised += fmt::format("{}{}:{}", advised.empty() ? "" : " ", s,
                           st && !st->advice.empty() ? st->advice.front().leaf_id : "-");
  }
  return {r.passed() && r.wall_seconds < 120.0,
          fmt::format("{}/{} checks, top advice {}, {:.1f} s{}", ok, r.checks.size(), advised,
                      r.wall_seconds, failed_checks(r))};
}

Outcome crash_resume(const fs::path& fixtures, const GrowthRun& seed1_reference) {
  struct Crash {
    std::uint64_t seed;
    std::string module;
    double at;
  };
  const std::vector<Crash> crashes{{1, "RPN1", 900},  {2, "RPN1", 1500}, {3, "RPN2", 1500},
                                   {4, "RPN5", 2100}, {5, "RPN4", 2700}};
  std::string observed;
  bool all = true;
  for (const auto& c : crashes) {
    const auto reference = c.seed == 1 ? seed1_reference
                                       : growth_run(fixtures, fmt::format("ref{}", c.seed), c.seed);
    const auto crashed = growth_run(fixtures, fmt::format("crash{}", c.seed), c.seed,
                                    {{c.at, runtime::KillAction{c.module}},
                                     {c.at + 30, runtime::RestartAction{c.module}}});
    const auto want = advice_order(reference.report.state("E"));
    const auto got = advice_order(crashed.report.state("E"));
    const bool same = want == got && want != "none";
    all = all && same;
    observed += fmt::format("{}seed {} kill {}@{}: {}", observed.empty() ? "" : "; ", c.seed,
                            c.module, c.at, same ? "same order" : "[" + got + "] vs [" + want + "]");
  }
  return {all, observed};
}

Outcome determinism(const fs::path& fixtures, const GrowthRun& first) {
  const auto second = growth_run(fixtures, "det", first.report.seed);
  const auto a = slurp(first.dir / "telemetry.csv");
  const auto b = slurp(second.dir / "telemetry.csv");
  return {!a.empty() && a == b,
          fmt::format("{} bytes vs {} bytes, {}", a.size(), b.size(), a == b ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path fixtures = argc > 1 ? fs::path(argv[1]) : fs::path(VMC_SCENARIO_DIR);
  int failures = 0;
  auto report = [&](const std::string& name, double limit_s, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && secs >= limit_s) {
      o.passed = false;
      o.observed += fmt::format(" (over the {:.0f} s budget)", limit_s);
    }
    failures += !o.passed;
    fmt::print("{} {} [{:.1f} s] {}\n", o.passed ? "PASS" : "FAIL", name, secs, o.observed);
    std::fflush(stdout);
  };

  report("conservation", 10, conservation);
  report("vessel-fixed-point", 0, vessel_fixed_point);
  report("channel-accuracy", 30, channel_accuracy);
  report("characterization", 60, [&] { return characterization(fixtures); });

  std::optional<GrowthRun> reference;
  report("growth", 120, [&] {
    reference = growth_run(fixtures, "growth", 1);
    return growth(*reference);
  });
  report("crash-resume", 0, [&] {
    if (!reference) return Outcome{false, "no reference run"};
    return crash_resume(fixtures, *reference);
  });
  report("determinism", 0, [&] {
    if (!reference) return Outcome{false, "no reference run"};
    return determinism(fixtures, *reference);
  });
  return failures == 0 ? 0 : 1;
}
