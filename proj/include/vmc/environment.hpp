#pragma once

// Derives each leaf's sensor frame from a declarative scene.

#include <Eigen/Core>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vmc/core.hpp"

namespace vmc::env {

using Point = Eigen::Vector3d;

struct Lamp {
  std::string lamp_id;
  Point position = Point::Zero();
  double intensity = 0.0;
};

/// Where a leaf sits and which way its branch points (unit vector).
struct LeafPose {
  Point position = Point::Zero();
  Point orientation = Point::UnitZ();
};

struct Scene {
  double ambient = 0.0;
  /// Distance scale of the lamp falloff I / (1 + (d / softening)^2).
  double softening = 1.0;
  std::vector<Lamp> lamps;
  /// leaf id -> attenuation of lamp light in [0,1]
  std::map<std::string, double, std::less<>> shades;
  /// module or leaf id -> tilt from vertical in degrees, [0,180]
  std::map<std::string, double, std::less<>> tilts;
  /// leaf id -> pose
  std::map<std::string, LeafPose, std::less<>> poses;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
  const Lamp* find_lamp(std::string_view id) const;
  /// True when `id` is a known leaf, or a module owning a known leaf.
  bool knows_target(std::string_view id) const;
};

/// Seeded sensor noise. Disabled jitter makes sampling a pure function.
class Jitter {
 public:
  Jitter() = default;
  Jitter(std::uint64_t seed, double sigma) : rng_(seed), sigma_(sigma) {}

  double draw();
  bool enabled() const { return sigma_ > 0.0; }

 private:
  std::mt19937_64 rng_{0};
  double sigma_ = 0.0;
};

inline constexpr double kSensorJitterSigma = 0.01;
inline constexpr int kPhotoresistors = 4;

/// Noise-free irradiance at a leaf, clamped to [0,1].
double irradiance(const Scene& scene, const LeafPose& pose,
                  std::string_view leaf_id);

/// Effective tilt of a leaf: its pose's angle from vertical plus the scene
/// tilt of the leaf (or, failing that, of its module), clamped to [0,180].
double tilt_degrees(const Scene& scene, const LeafPose& pose,
                    std::string_view leaf_id);

/// max(0, cos(tilt)).
double uprightness(double tilt_deg);

SensorFrame sample_sensors(const Scene& scene, const LeafPose& pose,
                           std::string_view leaf_id, Jitter* jitter = nullptr);

/// Convenience overload that looks the pose up in the scene. Throws
/// std::out_of_range for leaves without a pose.
SensorFrame sample_sensors(const Scene& scene, std::string_view leaf_id,
                           Jitter* jitter = nullptr);

struct MoveLamp {
  std::string lamp_id;
  std::optional<Point> position;
  std::optional<double> intensity;
};
struct SetShade {
  std::string leaf_id;
  double attenuation = 1.0;
};
struct RemoveShade {
  std::string leaf_id;
};
struct SetTilt {
  std::string target;
  double degrees = 0.0;
};
struct SetAmbient {
  double ambient = 0.0;
};

using SceneEvent =
    std::variant<MoveLamp, SetShade, RemoveShade, SetTilt, SetAmbient>;

class UnknownEntity : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Returns the scene with `event` applied. Throws UnknownEntity when the
/// event names a lamp, leaf or module the scene does not know, and
/// std::invalid_argument for out-of-range values; `scene` is never modified.
Scene apply_event(const Scene& scene, const SceneEvent& event);

std::string describe(const SceneEvent& event);

}  // namespace vmc::env
