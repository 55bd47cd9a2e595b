#pragma once

// Scripted experiments: run a scenario, then check its assertions against
// the state summaries taken at each mark.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmc/runtime.hpp"
#include "vmc/scenario.hpp"

namespace vmc::scenarios {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string observed;
};

struct Report {
  std::string scenario;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::vector<runtime::StateSummary> states;
  std::vector<CheckResult> checks;

  bool passed() const;
  const runtime::StateSummary* state(const std::string& label) const;
  std::string text() const;
  nlohmann::json to_json() const;
};

/// Checks the scenario's declared assertions.
std::vector<CheckResult> check_assertions(
    const runtime::Scenario& scenario,
    std::span<const runtime::StateSummary> states);

/// For every accepted attachment, the sibling of the grown leaf (the leaf
/// itself, or the subtree hanging there) must hold a strictly smaller share
/// in the next state than in the previous one.
std::vector<CheckResult> check_apical_dominance(
    std::span<const runtime::ActionLogEntry> log,
    std::span<const runtime::StateSummary> states);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<runtime::Mode> mode;
  std::optional<double> duration;
  /// Extra scripted actions merged into the scenario's own (stable by time).
  std::vector<runtime::TimedEvent> extra_events;
};

runtime::Scenario with_options(runtime::Scenario scenario, const RunOptions& options);

/// Runs the scenario into `out_dir`, evaluates it and writes report.txt and
/// report.json next to the telemetry.
Report run(const runtime::Scenario& scenario, const std::filesystem::path& out_dir,
           const RunOptions& options = {});

/// The single-module light and tilt characterization.
Report run_characterization(const std::filesystem::path& scenario_dir,
                            const std::filesystem::path& out_dir,
                            const RunOptions& options = {});

/// Advice-driven growth from one module to four, with a tilt perturbation.
Report run_interactive_growth(const std::filesystem::path& scenario_dir,
                              const std::filesystem::path& out_dir,
                              const RunOptions& options = {});

}  // namespace vmc::scenarios
