#include "vmc/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "vmc/topology.hpp"

namespace vmc::env {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

bool in_unit(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }
bool valid_angle(double a) { return std::isfinite(a) && a >= 0.0 && a <= 180.0; }

std::string module_of(std::string_view leaf_id) {
  if (auto ref = topology::parse_leaf_id(leaf_id)) return ref->module_id;
  return std::string(leaf_id);
}

}  // namespace

void Scene::validate() const {
  require(in_unit(ambient), "ambient must lie in [0,1]");
  require(std::isfinite(softening) && softening > 0.0,
          "softening must be positive");
  for (const auto& l : lamps) {
    require(std::isfinite(l.intensity) && l.intensity >= 0.0,
            "lamp " + l.lamp_id + " intensity must be >= 0");
    require(l.position.allFinite(), "lamp " + l.lamp_id + " position");
  }
  for (const auto& [leaf, att] : shades) {
    require(in_unit(att), "shade on " + leaf + " must attenuate in [0,1]");
  }
  for (const auto& [target, deg] : tilts) {
    require(valid_angle(deg), "tilt of " + target + " must lie in [0,180]");
  }
  for (const auto& [leaf, pose] : poses) {
    require(pose.position.allFinite(), "pose of " + leaf);
    require(std::abs(pose.orientation.norm() - 1.0) < 1e-6,
            "orientation of " + leaf + " must be a unit vector");
  }
}

const Lamp* Scene::find_lamp(std::string_view id) const {
  for (const auto& l : lamps) {
    if (l.lamp_id == id) return &l;
  }
  return nullptr;
}

bool Scene::knows_target(std::string_view id) const {
  if (poses.find(id) != poses.end()) return true;
  return std::any_of(poses.begin(), poses.end(), [&](const auto& p) {
    return module_of(p.first) == id;
  });
}

double Jitter::draw() {
  if (!enabled()) return 0.0;
  return std::normal_distribution<double>(0.0, sigma_)(rng_);
}

double irradiance(const Scene& scene, const LeafPose& pose,
                  std::string_view leaf_id) {
  double shade = 0.0;
  if (auto it = scene.shades.find(leaf_id); it != scene.shades.end()) {
    shade = it->second;
  }
  double lamp_light = 0.0;
  for (const auto& lamp : scene.lamps) {
    const double d = (lamp.position - pose.position).norm() / scene.softening;
    lamp_light += lamp.intensity / (1.0 + d * d);
  }
  return std::clamp(scene.ambient + lamp_light * (1.0 - shade), 0.0, 1.0);
}

double tilt_degrees(const Scene& scene, const LeafPose& pose,
                    std::string_view leaf_id) {
  const double cos_base = std::clamp(pose.orientation.normalized().z(), -1.0, 1.0);
  const double base = std::acos(cos_base) * 180.0 / std::numbers::pi;
  double extra = 0.0;
  if (auto it = scene.tilts.find(leaf_id); it != scene.tilts.end()) {
    extra = it->second;
  } else if (auto m = scene.tilts.find(module_of(leaf_id));
             m != scene.tilts.end()) {
    extra = m->second;
  }
  return std::clamp(base + extra, 0.0, 180.0);
}

double uprightness(double tilt_deg) {
  return std::max(0.0, std::cos(tilt_deg * std::numbers::pi / 180.0));
}

SensorFrame sample_sensors(const Scene& scene, const LeafPose& pose,
                           std::string_view leaf_id, Jitter* jitter) {
  double light = irradiance(scene, pose, leaf_id);
  double upright = uprightness(tilt_degrees(scene, pose, leaf_id));
  if (jitter && jitter->enabled()) {
    // four photoresistors with the same mean, read as one aggregate
    double sum = 0.0;
    for (int i = 0; i < kPhotoresistors; ++i) {
      sum += std::clamp(light + jitter->draw(), 0.0, 1.0);
    }
    light = sum / kPhotoresistors;
    upright += jitter->draw();
  }
  return SensorFrame::clamped(light, upright);
}

SensorFrame sample_sensors(const Scene& scene, std::string_view leaf_id,
                           Jitter* jitter) {
  auto it = scene.poses.find(leaf_id);
  if (it == scene.poses.end()) {
    throw std::out_of_range("no pose for leaf " + std::string(leaf_id));
  }
  return sample_sensors(scene, it->second, leaf_id, jitter);
}

namespace {

struct Applier {
  Scene& scene;

  void operator()(const MoveLamp& e) const {
    auto it = std::find_if(scene.lamps.begin(), scene.lamps.end(),
                           [&](const Lamp& l) { return l.lamp_id == e.lamp_id; });
    if (it == scene.lamps.end()) {
      throw UnknownEntity("unknown lamp " + e.lamp_id);
    }
    if (e.position) it->position = *e.position;
    if (e.intensity) it->intensity = *e.intensity;
  }
  void operator()(const SetShade& e) const {
    if (scene.poses.find(e.leaf_id) == scene.poses.end()) {
      throw UnknownEntity("unknown leaf " + e.leaf_id);
    }
    scene.shades[e.leaf_id] = e.attenuation;
  }
  void operator()(const RemoveShade& e) const {
    auto it = scene.shades.find(e.leaf_id);
    if (it == scene.shades.end()) {
      throw UnknownEntity("no shade on " + e.leaf_id);
    }
    scene.shades.erase(it);
  }
  void operator()(const SetTilt& e) const {
    if (!scene.knows_target(e.target)) {
      throw UnknownEntity("unknown tilt target " + e.target);
    }
    scene.tilts[e.target] = e.degrees;
  }
  void operator()(const SetAmbient& e) const { scene.ambient = e.ambient; }
};

struct Describer {
  std::string operator()(const MoveLamp& e) const {
    std::string out = "lamp " + e.lamp_id;
    if (e.position) {
      out += fmt::format(" at ({}, {}, {})", e.position->x(), e.position->y(),
                         e.position->z());
    }
    if (e.intensity) out += fmt::format(" intensity {}", *e.intensity);
    return out;
  }
  std::string operator()(const SetShade& e) const {
    return fmt::format("shade {} by {}", e.leaf_id, e.attenuation);
  }
  std::string operator()(const RemoveShade& e) const {
    return "unshade " + e.leaf_id;
  }
  std::string operator()(const SetTilt& e) const {
    return fmt::format("tilt {} to {} deg", e.target, e.degrees);
  }
  std::string operator()(const SetAmbient& e) const {
    return fmt::format("ambient {}", e.ambient);
  }
};

}  // namespace

Scene apply_event(const Scene& scene, const SceneEvent& event) {
  Scene next = scene;
  std::visit(Applier{next}, event);
  next.validate();
  return next;
}

std::string describe(const SceneEvent& event) {
  return std::visit(Describer{}, event);
}

}  // namespace vmc::env
