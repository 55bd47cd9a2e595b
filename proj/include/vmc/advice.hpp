#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vmc/telemetry.hpp"

namespace vmc::runtime {

inline constexpr std::size_t kDefaultAdviceWindow = 20;

struct LeafShare {
  std::string leaf_id;
  /// Time-averaged resource at the leaf.
  double resource = 0.0;
  /// Fraction of the resource held by all free leaves.
  double share = 0.0;
};

/// Ranks free leaves by resource averaged over each module's last `window`
/// rows, highest first; ties go to the lexicographically smaller leaf id.
/// A slot counts as a free leaf when its last row reports it not live.
std::vector<LeafShare> growth_advice(
    std::span<const telemetry::TelemetryRecord> rows,
    std::size_t window = kDefaultAdviceWindow);

}  // namespace vmc::runtime
