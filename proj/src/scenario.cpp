#include "vmc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "vmc/snapshot.hpp"

namespace vmc::runtime {

using nlohmann::json;

void IterationConfig::validate() const {
  if (!(std::isfinite(min_wait) && min_wait > 0.0 && max_wait >= min_wait &&
        std::isfinite(max_wait))) {
    throw std::invalid_argument("waits must satisfy 0 < min_wait <= max_wait");
  }
}

std::string Subject::describe() const {
  if (!branch.empty()) return "branch " + branch;
  std::string out;
  for (const auto& l : leaves) {
    if (!out.empty()) out += "+";
    out += l;
  }
  return out;
}

double Scenario::end_time() const {
  if (runtime.duration > 0.0) return runtime.duration;
  double t = 0.0;
  for (const auto& e : events) t = std::max(t, e.at);
  return t;
}

namespace {

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ScenarioError(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) {
    throw ScenarioError(where + "/" + key, "missing field");
  }
  return *it;
}

double number(const json& j, const char* key, const std::string& where) {
  const auto& v = field(j, key, where);
  if (!v.is_number()) throw ScenarioError(where + "/" + key, "expected a number");
  return v.get<double>();
}

double number_or(const json& j, const char* key, double fallback,
                 const std::string& where) {
  if (!j.contains(key)) return fallback;
  return number(j, key, where);
}

std::string text(const json& j, const char* key, const std::string& where) {
  const auto& v = field(j, key, where);
  if (!v.is_string()) throw ScenarioError(where + "/" + key, "expected a string");
  return v.get<std::string>();
}

int integer(const json& j, const char* key, const std::string& where) {
  const auto& v = field(j, key, where);
  if (!v.is_number_integer()) {
    throw ScenarioError(where + "/" + key, "expected an integer");
  }
  return v.get<int>();
}

env::Point point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3 ||
      !std::all_of(j.begin(), j.end(), [](const json& x) { return x.is_number(); })) {
    throw ScenarioError(where, "expected [x, y, z]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

env::Scene parse_scene(const json& j, const std::string& where) {
  env::Scene scene;
  scene.ambient = number_or(j, "ambient", 0.0, where);
  scene.softening = number_or(j, "softening", 1.0, where);
  if (j.contains("lamps")) {
    const auto& lamps = j.at("lamps");
    for (std::size_t i = 0; i < lamps.size(); ++i) {
      const auto w = fmt::format("{}/lamps/{}", where, i);
      env::Lamp lamp;
      lamp.lamp_id = text(lamps[i], "id", w);
      lamp.position = point(field(lamps[i], "position", w), w + "/position");
      lamp.intensity = number(lamps[i], "intensity", w);
      scene.lamps.push_back(std::move(lamp));
    }
  }
  if (j.contains("shades")) {
    for (const auto& [leaf, att] : j.at("shades").items()) {
      if (!att.is_number()) {
        throw ScenarioError(where + "/shades/" + leaf, "expected a number");
      }
      scene.shades[leaf] = att.get<double>();
    }
  }
  if (j.contains("tilts")) {
    for (const auto& [target, deg] : j.at("tilts").items()) {
      if (!deg.is_number()) {
        throw ScenarioError(where + "/tilts/" + target, "expected a number");
      }
      scene.tilts[target] = deg.get<double>();
    }
  }
  if (j.contains("poses")) {
    for (const auto& [leaf, pose] : j.at("poses").items()) {
      const auto w = where + "/poses/" + leaf;
      env::LeafPose p;
      p.position = point(field(pose, "position", w), w + "/position");
      if (pose.contains("orientation")) {
        p.orientation = point(pose.at("orientation"), w + "/orientation");
        if (p.orientation.norm() == 0.0) {
          throw ScenarioError(w + "/orientation", "zero vector");
        }
        p.orientation.normalize();
      }
      scene.poses[leaf] = p;
    }
  }
  try {
    scene.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(where, e.what());
  }
  return scene;
}

Subject parse_subject(const json& j, const std::string& where) {
  Subject s;
  if (j.contains("leaf")) {
    s.leaves.push_back(text(j, "leaf", where));
  } else if (j.contains("leaves")) {
    const auto& leaves = j.at("leaves");
    if (!leaves.is_array() || leaves.empty()) {
      throw ScenarioError(where + "/leaves", "expected a non-empty array");
    }
    for (const auto& l : leaves) s.leaves.push_back(l.get<std::string>());
  } else if (j.contains("branch")) {
    s.branch = text(j, "branch", where);
  } else {
    throw ScenarioError(where, "subject needs leaf, leaves or branch");
  }
  return s;
}

Assertion parse_assertion(const json& j, const std::string& where) {
  Assertion a;
  const auto kind = text(j, "kind", where);
  a.note = j.value("note", "");
  a.state = text(j, "state", where);
  if (kind == "share_range") {
    a.kind = Assertion::Kind::ShareRange;
    a.subject = parse_subject(field(j, "subject", where), where + "/subject");
    a.min = number_or(j, "min", 0.0, where);
    a.max = number_or(j, "max", 1.0, where);
    if (a.min > a.max) throw ScenarioError(where, "min exceeds max");
  } else if (kind == "advice_top") {
    a.kind = Assertion::Kind::AdviceTop;
    a.leaf = text(j, "leaf", where);
  } else if (kind == "greater") {
    a.kind = Assertion::Kind::Greater;
    a.subject = parse_subject(field(j, "subject", where), where + "/subject");
    a.other = parse_subject(field(j, "other", where), where + "/other");
  } else if (kind == "decreases") {
    a.kind = Assertion::Kind::Decreases;
    a.to_state = text(j, "to_state", where);
    a.subject = parse_subject(field(j, "subject", where), where + "/subject");
  } else {
    throw ScenarioError(where + "/kind", "unknown assertion kind " + kind);
  }
  return a;
}

RuntimeSettings parse_runtime(const json& j, const std::string& where) {
  RuntimeSettings r;
  r.iteration.seed = static_cast<std::uint64_t>(number_or(j, "seed", 1, where));
  if (j.contains("mode")) {
    const auto mode = text(j, "mode", where);
    if (mode == "fast-forward") {
      r.iteration.mode = Mode::FastForward;
    } else if (mode == "real-time") {
      r.iteration.mode = Mode::RealTime;
    } else {
      throw ScenarioError(where + "/mode", "expected fast-forward or real-time");
    }
  }
  r.iteration.min_wait = number_or(j, "min_wait", r.iteration.min_wait, where);
  r.iteration.max_wait = number_or(j, "max_wait", r.iteration.max_wait, where);
  try {
    r.iteration.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(where, e.what());
  }
  if (j.contains("channel")) {
    const auto ch = text(j, "channel", where);
    if (ch == "pwm") {
      r.channel = channel::Mode::Pwm;
    } else if (ch == "ideal") {
      r.channel = channel::Mode::Ideal;
    } else {
      throw ScenarioError(where + "/channel", "expected pwm or ideal");
    }
  }
  r.sample_rate_hz = number_or(j, "sample_rate_hz", r.sample_rate_hz, where);
  if (!(r.sample_rate_hz > 0)) {
    throw ScenarioError(where + "/sample_rate_hz", "must be positive");
  }
  r.max_leaves = static_cast<int>(number_or(j, "max_leaves", r.max_leaves, where));
  if (r.max_leaves < 1) throw ScenarioError(where + "/max_leaves", "must be >= 1");
  r.advice_window = static_cast<std::size_t>(
      number_or(j, "advice_window", static_cast<double>(r.advice_window), where));
  if (r.advice_window < 1) {
    throw ScenarioError(where + "/advice_window", "must be >= 1");
  }
  r.aggregate_interval =
      number_or(j, "aggregate_interval", r.aggregate_interval, where);
  if (!(r.aggregate_interval > 0)) {
    throw ScenarioError(where + "/aggregate_interval", "must be positive");
  }
  r.duration = number_or(j, "duration", r.duration, where);
  if (r.duration < 0) throw ScenarioError(where + "/duration", "must be >= 0");
  r.time_scale = number_or(j, "time_scale", r.time_scale, where);
  if (!(r.time_scale > 0)) {
    throw ScenarioError(where + "/time_scale", "must be positive");
  }
  r.sensor_jitter = number_or(j, "sensor_jitter", r.sensor_jitter, where);
  if (r.sensor_jitter < 0) {
    throw ScenarioError(where + "/sensor_jitter", "must be >= 0");
  }
  r.root_generation = number_or(j, "root_generation", r.root_generation, where);
  if (!(r.root_generation > 0)) {
    throw ScenarioError(where + "/root_generation", "must be positive");
  }
  r.epoch = static_cast<std::int64_t>(
      number_or(j, "epoch", static_cast<double>(r.epoch), where));
  return r;
}

}  // namespace

json to_json(const env::Scene& s) {
  json j;
  j["ambient"] = s.ambient;
  j["softening"] = s.softening;
  j["lamps"] = json::array();
  for (const auto& l : s.lamps) {
    j["lamps"].push_back({{"id", l.lamp_id},
                          {"position", {l.position.x(), l.position.y(), l.position.z()}},
                          {"intensity", l.intensity}});
  }
  j["shades"] = json::object();
  for (const auto& [k, v] : s.shades) j["shades"][k] = v;
  j["tilts"] = json::object();
  for (const auto& [k, v] : s.tilts) j["tilts"][k] = v;
  j["poses"] = json::object();
  for (const auto& [k, p] : s.poses) {
    j["poses"][k] = {
        {"position", {p.position.x(), p.position.y(), p.position.z()}},
        {"orientation", {p.orientation.x(), p.orientation.y(), p.orientation.z()}}};
  }
  return j;
}

env::SceneEvent parse_scene_event(const json& j, const std::string& where) {
  const auto type = text(j, "type", where);
  if (type == "lamp") {
    env::MoveLamp e;
    e.lamp_id = text(j, "lamp", where);
    if (j.contains("position")) {
      e.position = point(j.at("position"), where + "/position");
    }
    if (j.contains("intensity")) e.intensity = number(j, "intensity", where);
    if (!e.position && !e.intensity) {
      throw ScenarioError(where, "lamp event needs position or intensity");
    }
    return e;
  }
  if (type == "shade") {
    return env::SetShade{text(j, "leaf", where), number(j, "attenuation", where)};
  }
  if (type == "unshade") return env::RemoveShade{text(j, "leaf", where)};
  if (type == "tilt") {
    return env::SetTilt{text(j, "target", where), number(j, "degrees", where)};
  }
  if (type == "ambient") return env::SetAmbient{number(j, "value", where)};
  throw ScenarioError(where + "/type", "unknown scene event " + type);
}

json to_json(const env::SceneEvent& event) {
  struct V {
    json operator()(const env::MoveLamp& e) const {
      json j{{"type", "lamp"}, {"lamp", e.lamp_id}};
      if (e.position) {
        j["position"] = {e.position->x(), e.position->y(), e.position->z()};
      }
      if (e.intensity) j["intensity"] = *e.intensity;
      return j;
    }
    json operator()(const env::SetShade& e) const {
      return {{"type", "shade"}, {"leaf", e.leaf_id}, {"attenuation", e.attenuation}};
    }
    json operator()(const env::RemoveShade& e) const {
      return {{"type", "unshade"}, {"leaf", e.leaf_id}};
    }
    json operator()(const env::SetTilt& e) const {
      return {{"type", "tilt"}, {"target", e.target}, {"degrees", e.degrees}};
    }
    json operator()(const env::SetAmbient& e) const {
      return {{"type", "ambient"}, {"value", e.ambient}};
    }
  };
  return std::visit(V{}, event);
}

Action parse_action(const json& j, const std::string& where) {
  const auto name = text(j, "action", where);
  if (name == "attach") {
    AttachAction a;
    a.child = text(j, "child", where);
    const auto& slot = field(j, "slot", where);
    if (slot.is_string() && slot.get<std::string>() == "advised") {
      a.slot = std::nullopt;
      if (j.contains("parent")) a.parent = text(j, "parent", where);
    } else if (slot.is_number_integer()) {
      a.slot = slot.get<int>();
      a.parent = text(j, "parent", where);
    } else {
      throw ScenarioError(where + "/slot", "expected an integer or \"advised\"");
    }
    return a;
  }
  if (name == "detach") {
    return DetachAction{text(j, "parent", where), integer(j, "slot", where)};
  }
  if (name == "scene_event") {
    return SceneAction{
        parse_scene_event(field(j, "event", where), where + "/event")};
  }
  if (name == "kill") return KillAction{text(j, "module", where)};
  if (name == "restart") return RestartAction{text(j, "module", where)};
  if (name == "pause") return PauseAction{};
  if (name == "resume") return ResumeAction{};
  if (name == "mark") return MarkAction{text(j, "label", where)};
  throw ScenarioError(where + "/action", "unknown action " + name);
}

json to_json(const Action& action) {
  struct V {
    json operator()(const AttachAction& a) const {
      json j{{"action", "attach"}, {"child", a.child}};
      if (!a.parent.empty()) j["parent"] = a.parent;
      if (a.slot) {
        j["slot"] = *a.slot;
      } else {
        j["slot"] = "advised";
      }
      return j;
    }
    json operator()(const DetachAction& a) const {
      return {{"action", "detach"}, {"parent", a.parent}, {"slot", a.slot}};
    }
    json operator()(const SceneAction& a) const {
      return {{"action", "scene_event"}, {"event", to_json(a.event)}};
    }
    json operator()(const KillAction& a) const {
      return {{"action", "kill"}, {"module", a.module}};
    }
    json operator()(const RestartAction& a) const {
      return {{"action", "restart"}, {"module", a.module}};
    }
    json operator()(const PauseAction&) const { return {{"action", "pause"}}; }
    json operator()(const ResumeAction&) const { return {{"action", "resume"}}; }
    json operator()(const MarkAction& a) const {
      return {{"action", "mark"}, {"label", a.label}};
    }
  };
  return std::visit(V{}, action);
}

std::string describe(const Action& action) {
  struct V {
    std::string operator()(const AttachAction& a) const {
      if (a.slot) {
        return "attach " + a.child + " at " + a.parent + "-" +
               std::to_string(*a.slot);
      }
      return "attach " + a.child + " at advised leaf" +
             (a.parent.empty() ? std::string() : " of " + a.parent);
    }
    std::string operator()(const DetachAction& a) const {
      return "detach " + a.parent + "-" + std::to_string(a.slot);
    }
    std::string operator()(const SceneAction& a) const {
      return env::describe(a.event);
    }
    std::string operator()(const KillAction& a) const { return "kill " + a.module; }
    std::string operator()(const RestartAction& a) const {
      return "restart " + a.module;
    }
    std::string operator()(const PauseAction&) const { return "pause"; }
    std::string operator()(const ResumeAction&) const { return "resume"; }
    std::string operator()(const MarkAction& a) const { return "state " + a.label; }
  };
  return std::visit(V{}, action);
}

Scenario parse_scenario(std::string_view text_in) {
  json root;
  try {
    root = json::parse(text_in);
  } catch (const json::parse_error& e) {
    throw ScenarioError(fmt::format("byte {}", e.byte), e.what());
  }
  Scenario s;
  s.name = root.value("name", "scenario");
  if (root.contains("genome")) {
    try {
      s.genome = genome_from_json(root.at("genome"));
    } catch (const std::exception& e) {
      throw ScenarioError("/genome", e.what());
    }
  }
  const auto& modules = field(root, "modules", "");
  if (!modules.is_array()) throw ScenarioError("/modules", "expected an array");
  for (std::size_t i = 0; i < modules.size(); ++i) {
    const auto w = fmt::format("/modules/{}", i);
    topology::ModuleDescriptor d;
    d.module_id = text(modules[i], "id", w);
    d.level = static_cast<int>(number_or(modules[i], "level", 0, w));
    d.parent_plugs = static_cast<std::size_t>(
        number_or(modules[i], "parent_plugs", kParentPlugs, w));
    if (modules[i].value("dormant", false)) s.dormant.insert(d.module_id);
    s.modules.push_back(std::move(d));
  }
  if (root.contains("attachments")) {
    const auto& at = root.at("attachments");
    for (std::size_t i = 0; i < at.size(); ++i) {
      const auto w = fmt::format("/attachments/{}", i);
      s.attachments.push_back({text(at[i], "parent", w), integer(at[i], "slot", w),
                               text(at[i], "child", w)});
    }
  }
  if (root.contains("scene")) s.scene = parse_scene(root.at("scene"), "/scene");
  if (root.contains("runtime")) {
    s.runtime = parse_runtime(root.at("runtime"), "/runtime");
  }
  if (root.contains("events")) {
    const auto& ev = root.at("events");
    for (std::size_t i = 0; i < ev.size(); ++i) {
      const auto w = fmt::format("/events/{}", i);
      s.events.push_back({number(ev[i], "t", w), parse_action(ev[i], w)});
    }
  }
  if (root.contains("assertions")) {
    const auto& as = root.at("assertions");
    for (std::size_t i = 0; i < as.size(); ++i) {
      s.assertions.push_back(
          parse_assertion(as[i], fmt::format("/assertions/{}", i)));
    }
  }
  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(path.string(), "cannot open scenario file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ":" + e.location(),
                        std::string(e.what()).substr(e.location().size() + 2));
  }
}

void validate(const Scenario& s) {
  try {
    s.genome.validate();
  } catch (const std::domain_error& e) {
    throw ScenarioError("/genome", e.what());
  }
  topology::TopologyGraph graph;
  for (std::size_t i = 0; i < s.modules.size(); ++i) {
    try {
      graph.add_module(s.modules[i]);
    } catch (const topology::TopologyError& e) {
      throw ScenarioError(fmt::format("/modules/{}", i), e.what());
    }
    for (int k = 1; k <= static_cast<int>(kChildSlots); ++k) {
      const auto leaf = topology::leaf_id({s.modules[i].module_id, k});
      if (s.scene.poses.find(leaf) == s.scene.poses.end()) {
        throw ScenarioError("/scene/poses", "no pose for leaf " + leaf);
      }
    }
  }
  for (std::size_t i = 0; i < s.attachments.size(); ++i) {
    const auto& a = s.attachments[i];
    try {
      graph.attach(a.parent, a.slot, a.child);
    } catch (const topology::TopologyError& e) {
      throw ScenarioError(fmt::format("/attachments/{}", i), e.what());
    }
  }
  for (const auto& [leaf, _] : s.scene.shades) {
    if (s.scene.poses.find(leaf) == s.scene.poses.end()) {
      throw ScenarioError("/scene/shades/" + leaf, "unknown leaf");
    }
  }
  for (const auto& [target, _] : s.scene.tilts) {
    if (!s.scene.knows_target(target)) {
      throw ScenarioError("/scene/tilts/" + target, "unknown module or leaf");
    }
  }

  std::set<std::string> labels;
  double last = 0.0;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto w = fmt::format("/events/{}", i);
    const auto& e = s.events[i];
    if (!std::isfinite(e.at) || e.at < 0.0) throw ScenarioError(w + "/t", "negative time");
    if (e.at < last) throw ScenarioError(w + "/t", "events must be sorted by time");
    last = e.at;
    auto known = [&](const std::string& id, const char* key) {
      if (!graph.has_module(id)) {
        throw ScenarioError(w + "/" + key, "unknown module " + id);
      }
    };
    std::visit(
        [&](const auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, AttachAction>) {
            if (!a.parent.empty()) known(a.parent, "parent");
            known(a.child, "child");
          } else if constexpr (std::is_same_v<T, DetachAction>) {
            known(a.parent, "parent");
          } else if constexpr (std::is_same_v<T, KillAction> ||
                               std::is_same_v<T, RestartAction>) {
            known(a.module, "module");
          } else if constexpr (std::is_same_v<T, MarkAction>) {
            if (!labels.insert(a.label).second) {
              throw ScenarioError(w + "/label", "duplicate state label " + a.label);
            }
          } else if constexpr (std::is_same_v<T, SceneAction>) {
            if (const auto* lamp = std::get_if<env::MoveLamp>(&a.event)) {
              if (!s.scene.find_lamp(lamp->lamp_id)) {
                throw ScenarioError(w + "/event/lamp", "unknown lamp " + lamp->lamp_id);
              }
            } else if (const auto* sh = std::get_if<env::SetShade>(&a.event)) {
              if (s.scene.poses.find(sh->leaf_id) == s.scene.poses.end()) {
                throw ScenarioError(w + "/event/leaf", "unknown leaf " + sh->leaf_id);
              }
            } else if (const auto* t = std::get_if<env::SetTilt>(&a.event)) {
              if (!s.scene.knows_target(t->target)) {
                throw ScenarioError(w + "/event/target", "unknown target " + t->target);
              }
            }
          }
        },
        e.action);
  }

  auto check_subject = [&](const Subject& sub, const std::string& w) {
    for (const auto& leaf : sub.leaves) {
      if (s.scene.poses.find(leaf) == s.scene.poses.end()) {
        throw ScenarioError(w, "unknown leaf " + leaf);
      }
    }
    if (!sub.branch.empty() && !graph.has_module(sub.branch)) {
      throw ScenarioError(w, "unknown module " + sub.branch);
    }
  };
  for (std::size_t i = 0; i < s.assertions.size(); ++i) {
    const auto w = fmt::format("/assertions/{}", i);
    const auto& a = s.assertions[i];
    if (!labels.contains(a.state)) {
      throw ScenarioError(w + "/state", "no state labelled " + a.state);
    }
    if (a.kind == Assertion::Kind::Decreases && !labels.contains(a.to_state)) {
      throw ScenarioError(w + "/to_state", "no state labelled " + a.to_state);
    }
    if (a.kind == Assertion::Kind::AdviceTop &&
        s.scene.poses.find(a.leaf) == s.scene.poses.end()) {
      throw ScenarioError(w + "/leaf", "unknown leaf " + a.leaf);
    }
    if (a.kind != Assertion::Kind::AdviceTop) check_subject(a.subject, w + "/subject");
    if (a.kind == Assertion::Kind::Greater) check_subject(a.other, w + "/other");
  }
  if (s.end_time() <= 0.0) {
    throw ScenarioError("/runtime/duration", "run has zero length");
  }
}

}  // namespace vmc::runtime
