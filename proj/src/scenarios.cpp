#include "vmc/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include <fmt/format.h>

namespace vmc::scenarios {

using nlohmann::json;
using runtime::Assertion;
using runtime::StateSummary;
using runtime::Subject;

bool Report::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.passed; });
}

const StateSummary* Report::state(const std::string& label) const {
  for (const auto& s : states) {
    if (s.label == label) return &s;
  }
  return nullptr;
}

std::string Report::text() const {
  std::string out = fmt::format("scenario {} (seed {}), {:.1f} s wall\n", scenario,
                                seed, wall_seconds);
  for (const auto& s : states) {
    out += fmt::format("state {} at t={:.0f}s:", s.label, s.at);
    for (const auto& l : s.advice) {
      out += fmt::format(" {}={:.1f}%", l.leaf_id, 100.0 * l.share);
    }
    out += "\n";
  }
  for (const auto& c : checks) {
    out += fmt::format("{} {}: {}\n", c.passed ? "ok  " : "FAIL", c.name, c.observed);
  }
  out += passed() ? "all checks passed\n" : "some checks failed\n";
  return out;
}

json Report::to_json() const {
  json j;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["wall_seconds"] = wall_seconds;
  j["passed"] = passed();
  j["states"] = json::array();
  for (const auto& s : states) {
    json advice = json::array();
    for (const auto& l : s.advice) {
      advice.push_back({{"leaf", l.leaf_id}, {"resource", l.resource}, {"share", l.share}});
    }
    j["states"].push_back({{"label", s.label}, {"t", s.at}, {"advice", advice}});
  }
  j["checks"] = json::array();
  for (const auto& c : checks) {
    j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"observed", c.observed}});
  }
  return j;
}

namespace {

const StateSummary* find_state(std::span<const StateSummary> states,
                               const std::string& label) {
  for (const auto& s : states) {
    if (s.label == label) return &s;
  }
  return nullptr;
}

std::string pct(double share) { return fmt::format("{:.1f}%", 100.0 * share); }

}  // namespace

std::vector<CheckResult> check_assertions(const runtime::Scenario& scenario,
                                          std::span<const StateSummary> states) {
  std::vector<CheckResult> out;
  for (const auto& a : scenario.assertions) {
    CheckResult r;
    const auto* st = find_state(states, a.state);
    switch (a.kind) {
      case Assertion::Kind::ShareRange:
        r.name = fmt::format("{}: share({}) in [{}, {}]", a.state, a.subject.describe(),
                             pct(a.min), pct(a.max));
        break;
      case Assertion::Kind::AdviceTop:
        r.name = fmt::format("{}: advice top is {}", a.state, a.leaf);
        break;
      case Assertion::Kind::Greater:
        r.name = fmt::format("{}: share({}) > share({})", a.state, a.subject.describe(),
                             a.other.describe());
        break;
      case Assertion::Kind::Decreases:
        r.name = fmt::format("share({}) drops from {} to {}", a.subject.describe(),
                             a.state, a.to_state);
        break;
    }
    if (!a.note.empty()) r.name += " (" + a.note + ")";
    if (!st) {
      r.observed = "state " + a.state + " never reached";
      out.push_back(std::move(r));
      continue;
    }
    switch (a.kind) {
      case Assertion::Kind::ShareRange: {
        const double v = runtime::share_of(*st, a.subject);
        r.passed = v >= a.min && v <= a.max;
        r.observed = pct(v);
        break;
      }
      case Assertion::Kind::AdviceTop:
        if (st->advice.empty()) {
          r.observed = "no advice";
        } else {
          r.passed = st->advice.front().leaf_id == a.leaf;
          r.observed = fmt::format("{} ({})", st->advice.front().leaf_id,
                                   pct(st->advice.front().share));
        }
        break;
      case Assertion::Kind::Greater: {
        const double v = runtime::share_of(*st, a.subject);
        const double w = runtime::share_of(*st, a.other);
        r.passed = v > w;
        r.observed = fmt::format("{} vs {}", pct(v), pct(w));
        break;
      }
      case Assertion::Kind::Decreases: {
        const auto* to = find_state(states, a.to_state);
        if (!to) {
          r.observed = "state " + a.to_state + " never reached";
          break;
        }
        const double v = runtime::share_of(*st, a.subject);
        const double w = runtime::share_of(*to, a.subject);
        r.passed = w < v;
        r.observed = fmt::format("{} -> {}", pct(v), pct(w));
        break;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CheckResult> check_apical_dominance(
    std::span<const runtime::ActionLogEntry> log, std::span<const StateSummary> states) {
  std::vector<CheckResult> out;
  for (const auto& entry : log) {
    const auto* a = std::get_if<runtime::AttachAction>(&entry.action);
    if (!a || !entry.ack.ok || !a->slot) continue;
    const StateSummary* before = nullptr;
    const StateSummary* after = nullptr;
    for (const auto& s : states) {
      if (s.at <= entry.at) before = &s;
      if (s.at > entry.at && !after) after = &s;
    }
    const topology::SlotRef grown{a->parent, *a->slot};
    const topology::SlotRef sibling{a->parent, 3 - *a->slot};
    CheckResult r;
    r.name = fmt::format("apical dominance: {} at {} depletes {}", a->child,
                         topology::leaf_id(grown), topology::leaf_id(sibling));
    if (!before || !after) {
      r.observed = "no state before and after the attachment";
      out.push_back(std::move(r));
      continue;
    }
    Subject subject;
    if (auto child = after->graph.child_at(sibling)) {
      subject.branch = *child;
    } else {
      subject.leaves.push_back(topology::leaf_id(sibling));
    }
    const double v = runtime::share_of(*before, subject);
    const double w = runtime::share_of(*after, subject);
    r.passed = w < v;
    r.observed = fmt::format("{} {} ({}) -> {} ({})", subject.describe(), pct(v),
                             before->label, pct(w), after->label);
    out.push_back(std::move(r));
  }
  return out;
}

runtime::Scenario with_options(runtime::Scenario scenario, const RunOptions& options) {
  if (options.seed) scenario.runtime.iteration.seed = *options.seed;
  if (options.mode) scenario.runtime.iteration.mode = *options.mode;
  if (options.duration) scenario.runtime.duration = *options.duration;
  if (!options.extra_events.empty()) {
    auto& ev = scenario.events;
    ev.insert(ev.end(), options.extra_events.begin(), options.extra_events.end());
    std::stable_sort(ev.begin(), ev.end(), [](const auto& x, const auto& y) {
      return x.at < y.at;
    });
  }
  runtime::validate(scenario);
  return scenario;
}

Report run(const runtime::Scenario& base, const std::filesystem::path& out_dir,
           const RunOptions& options) {
  const auto scenario = with_options(base, options);
  const auto t0 = std::chrono::steady_clock::now();
  runtime::Simulation sim(scenario, out_dir);
  sim.run();

  Report report;
  report.scenario = scenario.name;
  report.seed = scenario.runtime.iteration.seed;
  report.states = sim.summaries();
  report.checks = check_assertions(scenario, report.states);
  const auto log = sim.action_log();
  for (auto& c : check_apical_dominance(log, report.states)) {
    report.checks.push_back(std::move(c));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ofstream(out_dir / "report.txt") << report.text();
  std::ofstream(out_dir / "report.json") << report.to_json().dump(2) << '\n';
  return report;
}

Report run_characterization(const std::filesystem::path& scenario_dir,
                            const std::filesystem::path& out_dir,
                            const RunOptions& options) {
  return run(runtime::load_scenario(scenario_dir / "characterization.json"), out_dir,
             options);
}

Report run_interactive_growth(const std::filesystem::path& scenario_dir,
                              const std::filesystem::path& out_dir,
                              const RunOptions& options) {
  return run(runtime::load_scenario(scenario_dir / "growth.json"), out_dir, options);
}

}  // namespace vmc::scenarios
