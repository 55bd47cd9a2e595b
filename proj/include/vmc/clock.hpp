#pragma once

#include <chrono>
#include <cstdint>

namespace vmc {

/// Simulated time since the start of a run.
using SimTime = std::chrono::duration<std::int64_t, std::micro>;

inline SimTime from_seconds(double seconds) {
  return std::chrono::duration_cast<SimTime>(
      std::chrono::duration<double>(seconds));
}

inline double to_seconds(SimTime t) {
  return std::chrono::duration<double>(t).count();
}

}  // namespace vmc
