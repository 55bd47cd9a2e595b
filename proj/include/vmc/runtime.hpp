#pragma once

// Module processes, the simulation that wires them together and the two
// schedulers driving it: a seeded discrete-event loop (fast-forward) and one
// thread per module (real time).

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vmc/advice.hpp"
#include "vmc/channel.hpp"
#include "vmc/clock.hpp"
#include "vmc/core.hpp"
#include "vmc/environment.hpp"
#include "vmc/scenario.hpp"
#include "vmc/snapshot.hpp"
#include "vmc/telemetry.hpp"
#include "vmc/topology.hpp"

namespace vmc::runtime {

/// Reply to an action. `reason` is a stable code such as "slot-occupied".
struct Ack {
  bool ok = true;
  std::string reason;
  std::string detail;

  static Ack accepted(std::string detail = {}) { return {true, {}, std::move(detail)}; }
  static Ack rejected(std::string reason, std::string detail) {
    return {false, std::move(reason), std::move(detail)};
  }
  nlohmann::json to_json() const;
};

/// What the run looked like when a state was closed.
struct StateSummary {
  std::string label;
  double at = 0.0;  ///< seconds
  std::vector<LeafShare> advice;
  topology::TopologyGraph graph;
  env::Scene scene;
};

/// Sum of shares of the subject's free leaves.
double share_of(const StateSummary& summary, const Subject& subject);

struct ActionLogEntry {
  double at = 0.0;
  /// As applied: an advised attachment carries the leaf it resolved to.
  Action action;
  Ack ack;
};

enum class ModuleStatus { Dormant, Running, Killed, Halted };
std::string to_string(ModuleStatus status);

/// Everything a module needs from its surroundings. Shared by all modules;
/// each member is either immutable during the run or internally locked.
struct ModuleContext {
  Genome genome;
  StepParams params;
  std::uint64_t seed = 1;
  double sensor_jitter = env::kSensorJitterSigma;
  std::int64_t epoch = 0;
  IterationConfig iteration;
  channel::ChannelBus* bus = nullptr;
  SnapshotStore* store = nullptr;
  telemetry::RecordSink* sink = nullptr;
  std::filesystem::path module_csv_dir;
  /// Current scene; must be safe to call from any thread.
  std::function<std::shared_ptr<const env::Scene>()> scene;
  std::function<void(const std::string&)> warn;
};

/// One Y-module: a root node with three parent plugs and two leaf slots.
class ModuleProcess {
 public:
  ModuleProcess(topology::ModuleDescriptor descriptor, ModuleContext& context);

  const std::string& id() const { return descriptor_.module_id; }
  ModuleStatus status() const { return status_; }
  std::uint64_t iteration() const { return iteration_; }
  const NodeVmcState& state() const { return state_; }

  /// Loads the snapshot (cold start when missing or corrupt) and brings the
  /// sender pins online.
  void start(SimTime now);
  /// Drives every sender pin low, as a crashed or unplugged board would.
  void stop(SimTime now, ModuleStatus why = ModuleStatus::Killed);

  /// One pass of the chronology: read wires, step, write wires, log, persist.
  telemetry::TelemetryRecord iterate(SimTime now);

  /// Next uniform wait from this module's own random stream.
  SimTime next_wait();

 private:
  void persist(const StepResult& result,
               const std::array<bool, kChildSlots>& occupied,
               const std::array<bool, kParentPlugs>& live, SimTime now);

  topology::ModuleDescriptor descriptor_;
  ModuleContext& ctx_;
  std::atomic<ModuleStatus> status_{ModuleStatus::Dormant};
  NodeVmcState state_ = NodeVmcState::cold_start();
  std::uint64_t iteration_ = 0;
  std::mt19937_64 wait_rng_;
  env::Jitter jitter_;
  std::optional<telemetry::CsvWriter> csv_;
};

class Simulation {
 public:
  /// Prepares `out_dir`: files owned by a previous run there are replaced.
  Simulation(Scenario scenario, std::filesystem::path out_dir);
  ~Simulation();

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const Scenario& scenario() const { return scenario_; }
  const std::filesystem::path& out_dir() const { return out_dir_; }

  /// Plays the scenario script to its end in the configured mode.
  void run();
  /// Real-time mode only: ends run() early from another thread.
  void stop();

  /// Applies an action at the current time. Thread-safe; used by the script,
  /// the command stream and tests.
  Ack apply(const Action& action);

  SimTime now() const;
  std::vector<LeafShare> advice();
  topology::TopologyGraph topology() const;
  std::shared_ptr<const env::Scene> scene() const;
  ModuleStatus status(const std::string& module_id) const;
  std::string registry_document() const;

  /// Additional sink for every record (network publishers).
  void add_sink(telemetry::RecordSink* sink);

  std::vector<StateSummary> summaries() const;
  std::vector<ActionLogEntry> action_log() const;
  std::vector<std::string> warnings() const;
  std::vector<telemetry::TelemetryRecord> rows();

  /// Writes run.json: settings, action log, state summaries and warnings.
  void write_run_manifest() const;

 private:
  struct Event {
    enum class Kind { Iterate, Script, Flush };
    SimTime at{0};
    std::uint64_t seq = 0;
    Kind kind = Kind::Iterate;
    std::string module;
    std::uint64_t generation = 0;
    std::size_t script_index = 0;

    bool operator>(const Event& o) const {
      return at != o.at ? at > o.at : seq > o.seq;
    }
  };

  void run_fast_forward();
  void run_real_time();
  void start_module(ModuleProcess& m);
  void stop_module(ModuleProcess& m, ModuleStatus why);
  void spawn_thread(ModuleProcess& m);
  void join_thread(const std::string& id);
  void schedule_iteration(ModuleProcess& m, SimTime after);
  void write_registry();
  void flush();
  /// Resolves advised attachments in place so the log shows the real leaf.
  Ack apply_locked(Action& action);
  void warn(const std::string& message);

  Scenario scenario_;
  std::filesystem::path out_dir_;
  channel::ChannelBus bus_;
  SnapshotStore store_;
  telemetry::Aggregator aggregator_;
  telemetry::FanOut fanout_;
  ModuleContext ctx_;

  mutable std::recursive_mutex mutex_;  // topology, modules, logs
  topology::TopologyGraph graph_;
  mutable std::mutex scene_mutex_;
  std::shared_ptr<const env::Scene> scene_;
  mutable std::mutex warn_mutex_;
  std::map<std::string, std::unique_ptr<ModuleProcess>, std::less<>> modules_;
  std::vector<StateSummary> summaries_;
  std::vector<ActionLogEntry> log_;
  std::vector<std::string> warnings_;
  std::atomic<bool> paused_{false};

  // fast-forward scheduler
  SimTime now_{0};
  std::uint64_t seq_ = 0;
  std::map<std::string, std::uint64_t, std::less<>> generation_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;

  // real-time mode
  bool real_time_ = false;
  std::chrono::steady_clock::time_point wall_start_;
  std::map<std::string, std::jthread, std::less<>> threads_;
  std::mutex wake_mutex_;
  std::condition_variable_any wake_;
  std::atomic<bool> stop_requested_{false};
};

}  // namespace vmc::runtime
