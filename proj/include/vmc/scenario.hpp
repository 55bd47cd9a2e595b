#pragma once

// Scenario documents: genome, modules, scene, timed event script, runtime
// settings and post-run assertions, stored as one JSON file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vmc/channel.hpp"
#include "vmc/core.hpp"
#include "vmc/environment.hpp"
#include "vmc/topology.hpp"

namespace vmc::runtime {

enum class Mode { RealTime, FastForward };

struct IterationConfig {
  double min_wait = 0.8;  ///< seconds
  double max_wait = 1.2;  ///< seconds
  std::uint64_t seed = 1;
  Mode mode = Mode::FastForward;

  /// Throws std::invalid_argument unless 0 < min_wait <= max_wait.
  void validate() const;
};

struct RuntimeSettings {
  IterationConfig iteration;
  channel::Mode channel = channel::Mode::Pwm;
  double sample_rate_hz = 1000.0;
  /// L: the most leaves the structure is expected to grow; leaf production
  /// is scaled by 1/L so summed successin stays on the wire range.
  int max_leaves = 6;
  std::size_t advice_window = 20;
  double aggregate_interval = 1.0;  ///< seconds
  /// Run length in seconds; 0 means "last event time".
  double duration = 0.0;
  /// Simulated seconds per wall-clock second in real-time mode.
  double time_scale = 1.0;
  double sensor_jitter = env::kSensorJitterSigma;
  double root_generation = 1.0;
  /// Unix time that simulated t = 0 maps to in telemetry timestamps.
  std::int64_t epoch = 1514764800;
};

struct AttachAction {
  /// May be empty when `slot` is advised; otherwise restricts the advice to
  /// this module's leaves.
  std::string parent;
  /// nullopt: the leaf currently ranked first by the growth advice.
  std::optional<int> slot;
  std::string child;
};
struct DetachAction {
  std::string parent;
  int slot = 1;
};
struct SceneAction {
  env::SceneEvent event;
};
struct KillAction {
  std::string module;
};
struct RestartAction {
  std::string module;
};
struct PauseAction {};
struct ResumeAction {};
/// Closes the current scenario state and opens a new one.
struct MarkAction {
  std::string label;
};

using Action = std::variant<AttachAction, DetachAction, SceneAction, KillAction,
                            RestartAction, PauseAction, ResumeAction, MarkAction>;

struct TimedEvent {
  double at = 0.0;  ///< seconds
  Action action;
};

struct InitialAttachment {
  std::string parent;
  int slot = 1;
  std::string child;
};

/// A set of leaves whose shares are summed: explicit leaf ids, or every free
/// leaf below a module.
struct Subject {
  std::vector<std::string> leaves;
  std::string branch;

  std::string describe() const;
};

struct Assertion {
  enum class Kind {
    ShareRange,  ///< min <= share(subject) <= max in `state`
    AdviceTop,   ///< first advised leaf in `state` equals `leaf`
    Greater,     ///< share(subject) > share(other) in `state`
    Decreases,   ///< share(subject) in `to_state` < in `state`
  };
  Kind kind = Kind::ShareRange;
  std::string state;
  std::string to_state;
  Subject subject;
  Subject other;
  std::string leaf;
  double min = 0.0;
  double max = 1.0;
  std::string note;
};

struct Scenario {
  std::string name;
  Genome genome;
  std::vector<topology::ModuleDescriptor> modules;
  /// Modules that stay powered off until they are first attached.
  std::set<std::string> dormant;
  std::vector<InitialAttachment> attachments;
  env::Scene scene;
  std::vector<TimedEvent> events;
  std::vector<Assertion> assertions;
  RuntimeSettings runtime;

  /// End of the run in seconds.
  double end_time() const;
};

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string location, const std::string& what)
      : std::runtime_error(location + ": " + what),
        location_(std::move(location)) {}
  const std::string& location() const { return location_; }

 private:
  std::string location_;
};

/// Parses and validates. Error locations are JSON pointers.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

/// Cross-checks ids, ordering and ranges; throws ScenarioError.
void validate(const Scenario& scenario);

/// Shared with the command stream.
Action parse_action(const nlohmann::json& j, const std::string& where = "");
nlohmann::json to_json(const Action& action);
env::SceneEvent parse_scene_event(const nlohmann::json& j,
                                  const std::string& where = "");
nlohmann::json to_json(const env::SceneEvent& event);
nlohmann::json to_json(const env::Scene& scene);

std::string describe(const Action& action);

}  // namespace vmc::runtime
