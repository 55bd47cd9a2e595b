#include "vmc/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

namespace vmc::runtime {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSnapshotAttempts = 3;

double seconds(SimTime t) { return to_seconds(t); }

void write_atomically(const fs::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

const fs::path& prepare(const fs::path& dir) {
  fs::create_directories(dir);
  for (const char* name : {"telemetry.csv", "connectivity.txt", "run.json",
                           "genome.json"}) {
    fs::remove(dir / name);
  }
  fs::remove_all(dir / "state");
  fs::remove_all(dir / "modules");
  return dir;
}

channel::BusConfig bus_config(const Scenario& s) {
  channel::BusConfig c;
  c.mode = s.runtime.channel;
  c.sample_rate_hz = s.runtime.sample_rate_hz;
  c.seed = channel::stable_hash("channel", s.runtime.iteration.seed);
  return c;
}

}  // namespace

json Ack::to_json() const {
  json j{{"ok", ok}};
  if (!reason.empty()) j["reason"] = reason;
  if (!detail.empty()) j["detail"] = detail;
  return j;
}

double share_of(const StateSummary& summary, const Subject& subject) {
  double total = 0.0;
  if (!subject.branch.empty()) {
    if (!summary.graph.has_module(subject.branch)) return 0.0;
    const auto below = summary.graph.subtree(subject.branch);
    for (const auto& leaf : summary.advice) {
      const auto ref = topology::parse_leaf_id(leaf.leaf_id);
      if (ref && below.contains(ref->module_id)) total += leaf.share;
    }
    return total;
  }
  for (const auto& leaf : summary.advice) {
    if (std::find(subject.leaves.begin(), subject.leaves.end(), leaf.leaf_id) !=
        subject.leaves.end()) {
      total += leaf.share;
    }
  }
  return total;
}

std::string to_string(ModuleStatus status) {
  switch (status) {
    case ModuleStatus::Dormant: return "dormant";
    case ModuleStatus::Running: return "running";
    case ModuleStatus::Killed: return "killed";
    case ModuleStatus::Halted: return "halted";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

ModuleProcess::ModuleProcess(topology::ModuleDescriptor descriptor,
                             ModuleContext& context)
    : descriptor_(std::move(descriptor)),
      ctx_(context),
      wait_rng_(channel::stable_hash(descriptor_.module_id, ctx_.seed)),
      jitter_(channel::stable_hash(descriptor_.module_id + "/sensors", ctx_.seed),
              ctx_.sensor_jitter) {}

void ModuleProcess::start(SimTime now) {
  auto loaded = ctx_.store->load(id());
  if (loaded.status == LoadStatus::Corrupt && ctx_.warn) {
    ctx_.warn(id() + ": " + loaded.warning);
  }
  state_ = loaded.snapshot.state;
  iteration_ = loaded.snapshot.iteration;
  if (!csv_) csv_.emplace(ctx_.module_csv_dir / (id() + ".csv"));

  auto& bus = *ctx_.bus;
  for (int k = 1; k <= static_cast<int>(kChildSlots); ++k) {
    const auto pin = topology::slot_resource_out(id(), k);
    bus.transmit(pin, 0.0, now);
    bus.set_online(pin, true, now);
  }
  for (int p = 1; p <= static_cast<int>(descriptor_.parent_plugs); ++p) {
    const auto pin = topology::plug_successin_out(id(), p);
    bus.transmit(pin, 0.0, now);
    bus.set_online(pin, true, now);
  }
  status_ = ModuleStatus::Running;
}

void ModuleProcess::stop(SimTime now, ModuleStatus why) {
  auto& bus = *ctx_.bus;
  for (int k = 1; k <= static_cast<int>(kChildSlots); ++k) {
    bus.set_online(topology::slot_resource_out(id(), k), false, now);
  }
  for (int p = 1; p <= static_cast<int>(descriptor_.parent_plugs); ++p) {
    bus.set_online(topology::plug_successin_out(id(), p), false, now);
  }
  if (csv_) csv_->flush();
  status_ = why;
}

SimTime ModuleProcess::next_wait() {
  std::uniform_real_distribution<double> wait(ctx_.iteration.min_wait,
                                              ctx_.iteration.max_wait);
  return from_seconds(wait(wait_rng_));
}

telemetry::TelemetryRecord ModuleProcess::iterate(SimTime now) {
  auto& bus = *ctx_.bus;
  const auto plugs = descriptor_.parent_plugs;

  NodeInputs in;
  std::array<bool, kParentPlugs> plug_live{};
  in.parent_resource.resize(plugs);
  for (std::size_t p = 0; p < plugs; ++p) {
    const auto d =
        bus.read(topology::plug_resource_in(id(), static_cast<int>(p + 1)), now);
    if (d.live()) {
      in.parent_resource[p] = d.value;
      plug_live[p] = true;
    }
  }
  std::array<bool, kChildSlots> occupied{};
  in.child_successin.resize(kChildSlots);
  for (std::size_t k = 0; k < kChildSlots; ++k) {
    const auto d =
        bus.read(topology::slot_successin_in(id(), static_cast<int>(k + 1)), now);
    if (d.live()) {
      in.child_successin[k] = d.value;
      occupied[k] = true;
    }
  }
  const auto scene = ctx_.scene();
  for (std::size_t k = 0; k < kChildSlots; ++k) {
    const auto leaf = topology::leaf_id({id(), static_cast<int>(k + 1)});
    in.leaf_sensors.push_back(env::sample_sensors(
        *scene, leaf, jitter_.enabled() ? &jitter_ : nullptr));
  }
  in.node_sensors = mean_frame(in.leaf_sensors);

  const auto result = node_step(state_, in, ctx_.genome, ctx_.params);

  for (std::size_t k = 0; k < kChildSlots; ++k) {
    bus.transmit(topology::slot_resource_out(id(), static_cast<int>(k + 1)),
                 result.resource_to_children[k], now);
  }
  for (std::size_t p = 0; p < plugs; ++p) {
    bus.transmit(topology::plug_successin_out(id(), static_cast<int>(p + 1)),
                 result.successin_to_parents[p], now);
  }
  state_ = result.state;
  ++iteration_;

  telemetry::TelemetryRecord rec;
  rec.timestamp = telemetry::iso8601(now, ctx_.epoch);
  rec.module = id();
  rec.iteration = iteration_;
  rec.r_in = result.resource_in;
  rec.r_gen = result.resource_generated;
  rec.s_out = state_.successin_out;
  for (std::size_t k = 0; k < kChildSlots; ++k) {
    auto& slot = rec.slots[k];
    slot.successin = result.slot_successin[k];
    slot.vessel = state_.vessels[k];
    slot.resource = result.resource_to_children[k];
    slot.live = occupied[k];
    slot.light = in.leaf_sensors[k].light;
    slot.upright = in.leaf_sensors[k].uprightness;
  }
  csv_->append(rec);
  if (ctx_.sink) ctx_.sink->publish(rec);
  persist(result, occupied, plug_live, now);
  return rec;
}

void ModuleProcess::persist(const StepResult&,
                            const std::array<bool, kChildSlots>& occupied,
                            const std::array<bool, kParentPlugs>& live,
                            SimTime now) {
  StateSnapshot snap;
  snap.module_id = id();
  snap.state = state_;
  snap.slot_occupied = occupied;
  snap.plug_live = live;
  snap.iteration = iteration_;
  snap.written_at = telemetry::iso8601(now, ctx_.epoch);
  std::string error;
  for (int attempt = 0; attempt < kSnapshotAttempts; ++attempt) {
    try {
      ctx_.store->write(snap);
      return;
    } catch (const std::exception& e) {
      error = e.what();
    }
  }
  if (ctx_.warn) ctx_.warn(id() + ": snapshot write failed, halting: " + error);
  stop(now, ModuleStatus::Halted);
}

// ---------------------------------------------------------------------------

Simulation::Simulation(Scenario scenario, fs::path out_dir)
    : scenario_(std::move(scenario)),
      out_dir_(prepare(out_dir)),
      bus_(bus_config(scenario_)),
      store_(out_dir_ / "state"),
      aggregator_(out_dir_ / "telemetry.csv", out_dir_ / "connectivity.txt") {
  validate(scenario_);
  const auto& rt = scenario_.runtime;
  write_genome_file(out_dir_ / "genome.json", scenario_.genome);

  fanout_.add(&aggregator_);
  ctx_.genome = scenario_.genome;
  ctx_.params.root_generation = rt.root_generation;
  ctx_.params.leaf_cap = 1.0 / rt.max_leaves;
  ctx_.seed = rt.iteration.seed;
  ctx_.sensor_jitter = rt.sensor_jitter;
  ctx_.epoch = rt.epoch;
  ctx_.iteration = rt.iteration;
  ctx_.bus = &bus_;
  ctx_.store = &store_;
  ctx_.sink = &fanout_;
  ctx_.module_csv_dir = out_dir_ / "modules";
  ctx_.scene = [this] { return scene(); };
  ctx_.warn = [this](const std::string& m) { warn(m); };

  scene_ = std::make_shared<const env::Scene>(scenario_.scene);
  const SimTime t0{0};
  for (const auto& d : scenario_.modules) {
    graph_.add_module(d);
    for (int k = 1; k <= static_cast<int>(kChildSlots); ++k) {
      bus_.add_sender(topology::slot_resource_out(d.module_id, k), t0);
      bus_.add_receiver(topology::slot_successin_in(d.module_id, k), t0);
    }
    for (int p = 1; p <= static_cast<int>(d.parent_plugs); ++p) {
      bus_.add_sender(topology::plug_successin_out(d.module_id, p), t0);
      bus_.add_receiver(topology::plug_resource_in(d.module_id, p), t0);
    }
    modules_.emplace(d.module_id, std::make_unique<ModuleProcess>(d, ctx_));
  }
  for (const auto& a : scenario_.attachments) {
    for (const auto& w : graph_.attach(a.parent, a.slot, a.child)) {
      bus_.plug(w.sender, w.receiver, t0);
    }
  }
  write_registry();
}

Simulation::~Simulation() {
  stop_requested_ = true;
  wake_.notify_all();
  threads_.clear();
}

SimTime Simulation::now() const {
  if (!real_time_) return now_;
  const auto wall = std::chrono::steady_clock::now() - wall_start_;
  return std::chrono::duration_cast<SimTime>(
      std::chrono::duration<double, std::micro>(
          std::chrono::duration<double, std::micro>(wall).count() *
          scenario_.runtime.time_scale));
}

std::shared_ptr<const env::Scene> Simulation::scene() const {
  std::lock_guard lock(scene_mutex_);
  return scene_;
}

topology::TopologyGraph Simulation::topology() const {
  std::lock_guard lock(mutex_);
  return graph_;
}

std::string Simulation::registry_document() const {
  std::lock_guard lock(mutex_);
  return topology::registry_export(graph_);
}

ModuleStatus Simulation::status(const std::string& module_id) const {
  std::lock_guard lock(mutex_);
  auto it = modules_.find(module_id);
  if (it == modules_.end()) throw std::out_of_range("unknown module " + module_id);
  return it->second->status();
}

void Simulation::add_sink(telemetry::RecordSink* sink) { fanout_.add(sink); }

void Simulation::warn(const std::string& message) {
  std::lock_guard lock(warn_mutex_);
  warnings_.push_back(message);
}

std::vector<std::string> Simulation::warnings() const {
  std::lock_guard lock(warn_mutex_);
  return warnings_;
}

std::vector<StateSummary> Simulation::summaries() const {
  std::lock_guard lock(mutex_);
  return summaries_;
}

std::vector<ActionLogEntry> Simulation::action_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

void Simulation::flush() { aggregator_.flush(); }

std::vector<telemetry::TelemetryRecord> Simulation::rows() {
  flush();
  return aggregator_.rows();
}

std::vector<LeafShare> Simulation::advice() {
  const auto all = rows();
  return growth_advice(all, scenario_.runtime.advice_window);
}

void Simulation::write_registry() {
  write_atomically(out_dir_ / "connectivity.txt",
                   "# parent_id.slot -> child_id\n" +
                       topology::registry_export(graph_));
}

void Simulation::schedule_iteration(ModuleProcess& m, SimTime after) {
  queue_.push(Event{now_ + after, seq_++, Event::Kind::Iterate, m.id(),
                    generation_[m.id()], 0});
}

void Simulation::start_module(ModuleProcess& m) {
  m.start(now());
  if (real_time_) {
    spawn_thread(m);
  } else {
    ++generation_[m.id()];
    schedule_iteration(m, m.next_wait());
  }
}

void Simulation::stop_module(ModuleProcess& m, ModuleStatus why) {
  if (real_time_) join_thread(m.id());
  ++generation_[m.id()];
  m.stop(now(), why);
}

void Simulation::spawn_thread(ModuleProcess& m) {
  join_thread(m.id());
  threads_[m.id()] = std::jthread([this, &m](std::stop_token st) {
    const double scale = scenario_.runtime.time_scale;
    while (!st.stop_requested() && !stop_requested_) {
      const auto wait = std::chrono::duration<double>(seconds(m.next_wait()) / scale);
      {
        std::unique_lock lock(wake_mutex_);
        wake_.wait_for(lock, st, wait, [this] { return stop_requested_.load(); });
      }
      if (st.stop_requested() || stop_requested_) break;
      if (paused_) continue;
      m.iterate(now());
      if (m.status() != ModuleStatus::Running) break;
    }
  });
}

void Simulation::join_thread(const std::string& id) {
  auto it = threads_.find(id);
  if (it == threads_.end()) return;
  it->second.request_stop();
  wake_.notify_all();
  if (it->second.joinable()) it->second.join();
  threads_.erase(it);
}

Ack Simulation::apply(const Action& action) {
  std::lock_guard lock(mutex_);
  Ack ack;
  Action resolved = action;
  try {
    ack = apply_locked(resolved);
  } catch (const std::exception& e) {
    ack = Ack::rejected("error", e.what());
  }
  log_.push_back({seconds(now()), std::move(resolved), ack});
  return ack;
}

Ack Simulation::apply_locked(Action& action) {
  const auto t = now();
  auto find = [&](const std::string& id) -> ModuleProcess* {
    auto it = modules_.find(id);
    return it == modules_.end() ? nullptr : it->second.get();
  };
  auto unknown = [](const std::string& id) {
    return Ack::rejected("unknown-module", "unknown module " + id);
  };

  if (auto* a = std::get_if<AttachAction>(&action)) {
    std::string parent = a->parent;
    int slot = a->slot.value_or(0);
    if (!a->slot) {
      const auto ranked = advice();
      auto it = std::find_if(ranked.begin(), ranked.end(), [&](const LeafShare& l) {
        const auto ref = topology::parse_leaf_id(l.leaf_id);
        return ref && (parent.empty() || ref->module_id == parent);
      });
      if (it == ranked.end()) return Ack::rejected("no-advice", "no free leaf to advise");
      const auto ref = topology::parse_leaf_id(it->leaf_id);
      parent = ref->module_id;
      slot = ref->slot;
    }
    std::vector<topology::WireEvent> wires;
    try {
      wires = graph_.attach(parent, slot, a->child);
    } catch (const topology::TopologyError& e) {
      return Ack::rejected(topology::to_string(e.reason()), e.what());
    }
    for (const auto& w : wires) bus_.plug(w.sender, w.receiver, t);
    write_registry();
    a->parent = parent;
    a->slot = slot;
    auto* child = find(a->child);
    if (child->status() == ModuleStatus::Dormant) start_module(*child);
    return Ack::accepted(a->child + " at " + topology::leaf_id({parent, slot}));
  }
  if (const auto* a = std::get_if<DetachAction>(&action)) {
    std::vector<topology::WireEvent> wires;
    try {
      wires = graph_.detach(a->parent, a->slot);
    } catch (const topology::TopologyError& e) {
      return Ack::rejected(topology::to_string(e.reason()), e.what());
    }
    for (const auto& w : wires) bus_.unplug(w.sender, w.receiver, t);
    write_registry();
    return Ack::accepted();
  }
  if (const auto* a = std::get_if<SceneAction>(&action)) {
    std::lock_guard lock(scene_mutex_);
    try {
      scene_ = std::make_shared<const env::Scene>(env::apply_event(*scene_, a->event));
    } catch (const env::UnknownEntity& e) {
      return Ack::rejected("unknown-entity", e.what());
    } catch (const std::invalid_argument& e) {
      return Ack::rejected("invalid-value", e.what());
    }
    return Ack::accepted(env::describe(a->event));
  }
  if (const auto* a = std::get_if<KillAction>(&action)) {
    auto* m = find(a->module);
    if (!m) return unknown(a->module);
    if (m->status() != ModuleStatus::Running) {
      return Ack::rejected("not-running", a->module + " is " + to_string(m->status()));
    }
    stop_module(*m, ModuleStatus::Killed);
    return Ack::accepted();
  }
  if (const auto* a = std::get_if<RestartAction>(&action)) {
    auto* m = find(a->module);
    if (!m) return unknown(a->module);
    if (m->status() == ModuleStatus::Running) {
      return Ack::rejected("already-running", a->module + " is running");
    }
    start_module(*m);
    return Ack::accepted(fmt::format("resumed at iteration {}", m->iteration()));
  }
  if (std::holds_alternative<PauseAction>(action)) {
    paused_ = true;
    return Ack::accepted();
  }
  if (std::holds_alternative<ResumeAction>(action)) {
    paused_ = false;
    return Ack::accepted();
  }
  const auto& mark = std::get<MarkAction>(action);
  StateSummary summary;
  summary.label = mark.label;
  summary.at = seconds(t);
  summary.advice = advice();
  summary.graph = graph_;
  summary.scene = *scene();
  summaries_.push_back(std::move(summary));
  return Ack::accepted();
}

void Simulation::run() {
  real_time_ = scenario_.runtime.iteration.mode == Mode::RealTime;
  if (real_time_) {
    run_real_time();
  } else {
    run_fast_forward();
  }
  flush();
  write_run_manifest();
}

void Simulation::stop() {
  stop_requested_ = true;
  wake_.notify_all();
}

void Simulation::run_fast_forward() {
  const SimTime end = from_seconds(scenario_.end_time());
  const SimTime flush_every = from_seconds(scenario_.runtime.aggregate_interval);
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < scenario_.events.size(); ++i) {
      queue_.push(Event{from_seconds(scenario_.events[i].at), seq_++,
                        Event::Kind::Script, {}, 0, i});
    }
    queue_.push(Event{flush_every, seq_++, Event::Kind::Flush, {}, 0, 0});
    std::set<std::string> powered;
    for (const auto& d : scenario_.modules) {
      if (!scenario_.dormant.contains(d.module_id)) powered.insert(d.module_id);
    }
    for (const auto& a : scenario_.attachments) powered.insert(a.child);
    for (const auto& id : powered) start_module(*modules_.at(id));
  }

  while (!queue_.empty() && !stop_requested_) {
    std::lock_guard lock(mutex_);
    const Event ev = queue_.top();
    if (ev.at > end) break;
    queue_.pop();
    now_ = ev.at;
    switch (ev.kind) {
      case Event::Kind::Script:
        apply(scenario_.events[ev.script_index].action);
        break;
      case Event::Kind::Flush:
        flush();
        queue_.push(Event{now_ + flush_every, seq_++, Event::Kind::Flush, {}, 0, 0});
        break;
      case Event::Kind::Iterate: {
        auto& m = *modules_.at(ev.module);
        if (ev.generation != generation_[ev.module] ||
            m.status() != ModuleStatus::Running) {
          break;
        }
        if (!paused_) m.iterate(now_);
        if (m.status() == ModuleStatus::Running) schedule_iteration(m, m.next_wait());
        break;
      }
    }
  }
  now_ = std::max(now_, end);
}

void Simulation::run_real_time() {
  using clock = std::chrono::steady_clock;
  const double scale = scenario_.runtime.time_scale;
  const double end = scenario_.end_time();
  wall_start_ = clock::now();
  {
    std::lock_guard lock(mutex_);
    for (const auto& d : scenario_.modules) {
      const bool attached = std::any_of(
          scenario_.attachments.begin(), scenario_.attachments.end(),
          [&](const InitialAttachment& a) { return a.child == d.module_id; });
      if (!scenario_.dormant.contains(d.module_id) || attached) {
        start_module(*modules_.at(d.module_id));
      }
    }
  }
  auto wall_at = [&](double sim_seconds) {
    return wall_start_ + std::chrono::duration_cast<clock::duration>(
                             std::chrono::duration<double>(sim_seconds / scale));
  };
  std::size_t next_event = 0;
  double next_flush = scenario_.runtime.aggregate_interval;
  while (!stop_requested_) {
    double next = std::min(next_flush, end);
    if (next_event < scenario_.events.size()) {
      next = std::min(next, scenario_.events[next_event].at);
    }
    {
      std::unique_lock lock(wake_mutex_);
      wake_.wait_until(lock, wall_at(next), [this] { return stop_requested_.load(); });
    }
    if (stop_requested_) break;
    const double t = seconds(now());
    while (next_event < scenario_.events.size() &&
           scenario_.events[next_event].at <= t) {
      apply(scenario_.events[next_event++].action);
    }
    if (next_flush <= t) {
      flush();
      next_flush += scenario_.runtime.aggregate_interval;
    }
    if (t >= end) break;
  }
  std::lock_guard lock(mutex_);
  for (auto& [id, m] : modules_) {
    join_thread(id);
  }
}

void Simulation::write_run_manifest() const {
  std::lock_guard lock(mutex_);
  const auto& rt = scenario_.runtime;
  json j;
  j["scenario"] = scenario_.name;
  j["telemetry_schema"] = telemetry::kSchemaVersion;
  j["seed"] = rt.iteration.seed;
  j["mode"] = rt.iteration.mode == Mode::FastForward ? "fast-forward" : "real-time";
  j["channel"] = rt.channel == channel::Mode::Pwm ? "pwm" : "ideal";
  j["min_wait"] = rt.iteration.min_wait;
  j["max_wait"] = rt.iteration.max_wait;
  j["max_leaves"] = rt.max_leaves;
  j["advice_window"] = rt.advice_window;
  j["end_time"] = scenario_.end_time();
  j["genome"] = to_json(scenario_.genome);
  j["actions"] = json::array();
  for (const auto& e : log_) {
    j["actions"].push_back({{"t", e.at}, {"action", to_json(e.action)},
                            {"ack", e.ack.to_json()}});
  }
  j["states"] = json::array();
  for (const auto& s : summaries_) {
    json advice = json::array();
    for (const auto& l : s.advice) {
      advice.push_back({{"leaf", l.leaf_id}, {"resource", l.resource}, {"share", l.share}});
    }
    j["states"].push_back({{"label", s.label},
                           {"t", s.at},
                           {"advice", advice},
                           {"registry", topology::registry_export(s.graph)}});
  }
  j["modules"] = json::object();
  for (const auto& [id, m] : modules_) {
    j["modules"][id] = {{"status", to_string(m->status())}, {"iterations", m->iteration()}};
  }
  j["warnings"] = warnings();
  write_atomically(out_dir_ / "run.json", j.dump(2) + "\n");
}

}  // namespace vmc::runtime
