#pragma once

// Two configuration files per module: the immutable genome and a mutable
// state snapshot rewritten after every iteration.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "vmc/core.hpp"

namespace vmc::runtime {

struct StateSnapshot {
  std::string module_id;
  NodeVmcState state = NodeVmcState::cold_start();
  std::array<bool, kChildSlots> slot_occupied{};
  std::array<bool, kParentPlugs> plug_live{};
  std::uint64_t iteration = 0;
  std::string written_at;

  /// Vessel and successin lists match the slot count; values are finite and
  /// within their ranges.
  bool consistent() const;
  bool operator==(const StateSnapshot&) const = default;
};

nlohmann::json to_json(const StateSnapshot& snapshot);
/// Throws std::invalid_argument on missing fields or an inconsistent record.
StateSnapshot snapshot_from_json(const nlohmann::json& j);

enum class LoadStatus { Loaded, Missing, Corrupt };

struct LoadResult {
  StateSnapshot snapshot;
  LoadStatus status = LoadStatus::Missing;
  std::string warning;
};

class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path directory);

  std::filesystem::path path_for(const std::string& module_id) const;

  /// Writes `<id>.json.tmp` and renames it over `<id>.json`, so a reader
  /// sees either the previous or the new snapshot. Throws on I/O failure.
  void write(const StateSnapshot& snapshot) const;

  /// Missing file -> cold-start defaults; unparsable or inconsistent file ->
  /// cold-start defaults plus a warning.
  LoadResult load(const std::string& module_id) const;

  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

nlohmann::json to_json(const Genome& genome);
/// Throws std::invalid_argument (missing field) or std::domain_error.
Genome genome_from_json(const nlohmann::json& j);

/// Writes the genome file once; an existing file with different contents
/// is an error, since the genome never changes during a run.
void write_genome_file(const std::filesystem::path& path, const Genome& genome);
Genome read_genome_file(const std::filesystem::path& path);

}  // namespace vmc::runtime
