#include "vmc/advice.hpp"

#include <algorithm>
#include <map>

#include "vmc/topology.hpp"

namespace vmc::runtime {

std::vector<LeafShare> growth_advice(
    std::span<const telemetry::TelemetryRecord> rows, std::size_t window) {
  window = std::max<std::size_t>(window, 1);
  std::map<std::string, std::vector<const telemetry::TelemetryRecord*>> by_module;
  for (const auto& r : rows) by_module[r.module].push_back(&r);

  std::vector<LeafShare> leaves;
  for (const auto& [module, history] : by_module) {
    const auto& last = *history.back();
    const std::size_t n = std::min(window, history.size());
    for (std::size_t k = 0; k < kChildSlots; ++k) {
      if (last.slots[k].live) continue;
      double sum = 0.0;
      for (std::size_t i = history.size() - n; i < history.size(); ++i) {
        sum += history[i]->slots[k].resource;
      }
      leaves.push_back({topology::leaf_id({module, static_cast<int>(k + 1)}),
                        sum / static_cast<double>(n), 0.0});
    }
  }

  double total = 0.0;
  for (const auto& l : leaves) total += l.resource;
  for (auto& l : leaves) {
    l.share = total > 0.0 ? l.resource / total
                          : 1.0 / static_cast<double>(leaves.size());
  }
  std::sort(leaves.begin(), leaves.end(),
            [](const LeafShare& a, const LeafShare& b) {
              if (a.resource != b.resource) return a.resource > b.resource;
              return a.leaf_id < b.leaf_id;
            });
  return leaves;
}

}  // namespace vmc::runtime
