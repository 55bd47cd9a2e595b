#pragma once

// Per-node update rules of the vascular morphogenesis controller.
//
// Everything in this header is a pure function of its arguments. A node owns
// one vessel per child slot; resource flows leafward in proportion to the
// vessels, successin flows rootward and is summed at every junction.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vmc {

inline constexpr std::size_t kChildSlots = 2;
inline constexpr std::size_t kParentPlugs = 3;

/// Constant controller parameters shared by every node of a run.
struct Genome {
  double omega_c = 0.0;
  double omega_phi = 0.5;
  double omega_lambda = 0.5;
  double rho_c = 0.9;
  double rho_phi = 0.1;
  double rho_lambda = 0.0;
  double alpha = 0.9;
  double beta = 2.0;

  /// The default parameter set; every shipped scenario uses it.
  static Genome reference() { return {}; }

  /// Throws std::domain_error naming the first field out of range.
  void validate() const;

  bool operator==(const Genome&) const = default;
};

/// Aggregated leaf sensors, both normalized to [0,1].
struct SensorFrame {
  double light = 0.0;
  double uprightness = 0.0;

  static SensorFrame clamped(double light, double uprightness);
  bool operator==(const SensorFrame&) const = default;
};

/// Mean of several frames; used as the sensor context of a junction.
SensorFrame mean_frame(std::span<const SensorFrame> frames);

struct NodeVmcState {
  double resource = 0.0;
  double successin_out = 0.0;
  std::vector<double> vessels;
  std::vector<double> child_successin;

  static constexpr double kInitialVessel = 0.01;
  static NodeVmcState cold_start(std::size_t slots = kChildSlots);

  bool operator==(const NodeVmcState&) const = default;
};

/// Raised when a state record and the slot inputs handed to node_step disagree.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Successin compiled at an unconnected leaf, clamped to [0,1].
double produce_successin(const SensorFrame& sensors, const Genome& genome);

/// Multiplier applied to successin passing through a junction.
double transfer_factor(const SensorFrame& sensors, const Genome& genome);

/// Sum of child successin scaled by the local transfer factor, clamped to
/// [0,1]. Throws std::domain_error on an empty child list.
double transfer_successin(std::span<const double> children_successin,
                          const SensorFrame& sensors, const Genome& genome);

/// One exponential-smoothing step of a vessel toward S^beta.
double update_vessel(double current_vessel, double child_successin,
                     const Genome& genome);

/// Splits `incoming_resource` proportionally to `vessels`. An all-zero vessel
/// list splits equally.
std::vector<double> distribute_resource(double incoming_resource,
                                        std::span<const double> vessels);

/// Splits successin among parents proportionally to the resource each one
/// delivered. An all-zero list splits equally.
std::vector<double> split_successin_to_parents(
    double total_successin, std::span<const double> resource_per_parent);

enum class Step {
  ReceiveResource,
  GatherSuccessin,
  AdaptVessels,
  DistributeResource,
  SplitSuccessin,
};

struct StepParams {
  /// Resource generated per iteration by a node without live parents.
  double root_generation = 1.0;
  /// Scale applied to leaf production; 1/L for at most L leaves.
  double leaf_cap = 1.0 / 6.0;
};

/// What a node sees on its interfaces during one iteration.
struct NodeInputs {
  /// Per parent plug: decoded resource, or nullopt when the plug is not live.
  std::vector<std::optional<double>> parent_resource;
  /// Per child slot: decoded child successin, or nullopt for a free leaf.
  std::vector<std::optional<double>> child_successin;
  /// Per child slot leaf sensors; read only for free leaves.
  std::vector<SensorFrame> leaf_sensors;
  /// Sensor context of the junction itself.
  SensorFrame node_sensors;
};

struct StepResult {
  NodeVmcState state;
  double resource_in = 0.0;
  double resource_generated = 0.0;
  std::vector<double> slot_successin;
  std::vector<double> resource_to_children;
  /// Per parent plug; zero for plugs that are not live.
  std::vector<double> successin_to_parents;
  std::array<Step, 5> trace{};
};

/// Runs the five-step chronology for one node. Throws StructuralError when
/// the state's vessel count does not match the slot inputs.
StepResult node_step(const NodeVmcState& state, const NodeInputs& inputs,
                     const Genome& genome, const StepParams& params = {});

std::string to_string(Step step);

}  // namespace vmc
