#include "vmc/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vmc {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

void require_unit(double value, const char* name) {
  if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
    throw std::domain_error(std::string("genome field ") + name +
                            " must lie in [0,1]");
  }
}

}  // namespace

void Genome::validate() const {
  require_unit(omega_c, "omega_c");
  require_unit(omega_phi, "omega_phi");
  require_unit(omega_lambda, "omega_lambda");
  require_unit(rho_c, "rho_c");
  require_unit(rho_phi, "rho_phi");
  require_unit(rho_lambda, "rho_lambda");
  if (!std::isfinite(alpha) || alpha < 0.0 || alpha >= 1.0) {
    throw std::domain_error("genome field alpha must lie in [0,1)");
  }
  if (!std::isfinite(beta) || beta < 1.0) {
    throw std::domain_error("genome field beta must be >= 1");
  }
}

SensorFrame SensorFrame::clamped(double light, double uprightness) {
  return {clamp01(light), clamp01(uprightness)};
}

SensorFrame mean_frame(std::span<const SensorFrame> frames) {
  if (frames.empty()) return {};
  SensorFrame sum;
  for (const auto& f : frames) {
    sum.light += f.light;
    sum.uprightness += f.uprightness;
  }
  const auto n = static_cast<double>(frames.size());
  return SensorFrame::clamped(sum.light / n, sum.uprightness / n);
}

NodeVmcState NodeVmcState::cold_start(std::size_t slots) {
  NodeVmcState s;
  s.vessels.assign(slots, kInitialVessel);
  s.child_successin.assign(slots, 0.0);
  return s;
}

double produce_successin(const SensorFrame& sensors, const Genome& genome) {
  return clamp01(genome.omega_c + genome.omega_phi * sensors.uprightness +
                 genome.omega_lambda * sensors.light);
}

double transfer_factor(const SensorFrame& sensors, const Genome& genome) {
  return genome.rho_c + genome.rho_phi * sensors.uprightness +
         genome.rho_lambda * sensors.light;
}

double transfer_successin(std::span<const double> children_successin,
                          const SensorFrame& sensors, const Genome& genome) {
  if (children_successin.empty()) {
    throw std::domain_error(
        "transfer_successin needs at least one child value");
  }
  const double total =
      std::accumulate(children_successin.begin(), children_successin.end(), 0.0);
  return clamp01(transfer_factor(sensors, genome) * total);
}

double update_vessel(double current_vessel, double child_successin,
                     const Genome& genome) {
  return genome.alpha * current_vessel +
         (1.0 - genome.alpha) * std::pow(child_successin, genome.beta);
}

namespace {

std::vector<double> proportional_split(double amount,
                                       std::span<const double> weights) {
  std::vector<double> out(weights.size(), 0.0);
  if (weights.empty()) return out;
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) {
    std::fill(out.begin(), out.end(),
              amount / static_cast<double>(weights.size()));
    return out;
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out[i] = amount * (weights[i] / total);
  }
  return out;
}

}  // namespace

std::vector<double> distribute_resource(double incoming_resource,
                                        std::span<const double> vessels) {
  return proportional_split(incoming_resource, vessels);
}

std::vector<double> split_successin_to_parents(
    double total_successin, std::span<const double> resource_per_parent) {
  return proportional_split(total_successin, resource_per_parent);
}

StepResult node_step(const NodeVmcState& state, const NodeInputs& inputs,
                     const Genome& genome, const StepParams& params) {
  const std::size_t slots = state.vessels.size();
  if (slots == 0 || inputs.child_successin.size() != slots ||
      inputs.leaf_sensors.size() != slots ||
      state.child_successin.size() != slots) {
    throw StructuralError("slot count mismatch: state has " +
                          std::to_string(slots) + " vessels, inputs carry " +
                          std::to_string(inputs.child_successin.size()) +
                          " child values and " +
                          std::to_string(inputs.leaf_sensors.size()) +
                          " leaf frames");
  }
  if (inputs.parent_resource.size() > kParentPlugs) {
    throw StructuralError("more than three parent plugs");
  }

  StepResult out;
  out.state = state;
  std::size_t step = 0;

  // 1. resource from live parents, or generated locally
  std::vector<std::size_t> live_parents;
  std::vector<double> live_resource;
  for (std::size_t p = 0; p < inputs.parent_resource.size(); ++p) {
    if (inputs.parent_resource[p]) {
      live_parents.push_back(p);
      live_resource.push_back(std::max(0.0, *inputs.parent_resource[p]));
    }
  }
  if (live_parents.empty()) {
    out.resource_generated = params.root_generation;
    out.resource_in = params.root_generation;
  } else {
    out.resource_in =
        std::accumulate(live_resource.begin(), live_resource.end(), 0.0);
  }
  out.state.resource = out.resource_in;
  out.trace[step++] = Step::ReceiveResource;

  // 2. successin per slot: relayed from a child or produced by the leaf
  out.slot_successin.resize(slots);
  for (std::size_t k = 0; k < slots; ++k) {
    const auto& child = inputs.child_successin[k];
    out.slot_successin[k] =
        child ? clamp01(*child)
              : produce_successin(inputs.leaf_sensors[k], genome) *
                    params.leaf_cap;
  }
  out.state.child_successin = out.slot_successin;
  out.trace[step++] = Step::GatherSuccessin;

  // 3. vessels
  for (std::size_t k = 0; k < slots; ++k) {
    out.state.vessels[k] =
        update_vessel(state.vessels[k], out.slot_successin[k], genome);
  }
  out.trace[step++] = Step::AdaptVessels;

  // 4. resource to children by relative vessel thickness
  out.resource_to_children =
      distribute_resource(out.resource_in, out.state.vessels);
  out.trace[step++] = Step::DistributeResource;

  // 5. successin to parents by the resource each delivered
  out.state.successin_out =
      transfer_successin(out.slot_successin, inputs.node_sensors, genome);
  out.successin_to_parents.assign(inputs.parent_resource.size(), 0.0);
  if (!live_parents.empty()) {
    const auto shares =
        split_successin_to_parents(out.state.successin_out, live_resource);
    for (std::size_t i = 0; i < live_parents.size(); ++i) {
      out.successin_to_parents[live_parents[i]] = shares[i];
    }
  }
  out.trace[step++] = Step::SplitSuccessin;
  return out;
}

std::string to_string(Step step) {
  switch (step) {
    case Step::ReceiveResource: return "receive-resource";
    case Step::GatherSuccessin: return "gather-successin";
    case Step::AdaptVessels: return "adapt-vessels";
    case Step::DistributeResource: return "distribute-resource";
    case Step::SplitSuccessin: return "split-successin";
  }
  return "unknown";
}

}  // namespace vmc
