#pragma once

// Helpers shared by the unit tests: tolerances, scratch directories and
// small random generators for property checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "vmc/core.hpp"

namespace vmc::test {

inline bool almost_equal(double a, double b, double rel = 1e-12) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("vmc-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  double range(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return integer(0, 1) == 1; }

  SensorFrame frame() { return {unit(), unit()}; }

  Genome genome() {
    Genome g;
    g.omega_c = unit() * 0.3;
    g.omega_phi = unit();
    g.omega_lambda = unit();
    g.rho_c = unit();
    g.rho_phi = unit() * 0.5;
    g.rho_lambda = unit() * 0.5;
    g.alpha = range(0.0, 0.99);
    g.beta = range(1.0, 4.0);
    return g;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace vmc::test
