#pragma once

// Per-iteration state records, their CSV and JSON encodings, and the
// aggregator that joins module streams with the connectivity registry.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vmc/clock.hpp"
#include "vmc/core.hpp"
#include "vmc/topology.hpp"

namespace vmc::telemetry {

inline constexpr int kSchemaVersion = 1;

struct SlotRecord {
  double successin = 0.0;
  double vessel = 0.0;
  double resource = 0.0;
  bool live = false;
  double light = 0.0;
  double upright = 0.0;

  bool operator==(const SlotRecord&) const = default;
};

struct TelemetryRecord {
  std::string timestamp;  ///< ISO-8601, UTC, millisecond precision
  std::string module;
  std::uint64_t iteration = 0;
  double r_in = 0.0;
  double r_gen = 0.0;
  double s_out = 0.0;
  std::array<SlotRecord, kChildSlots> slots{};
  /// `;`-joined `parent.slot` refs; filled in by the aggregator.
  std::string parent_ids;
  /// `;`-joined `slot=child` pairs; filled in by the aggregator.
  std::string child_ids;

  bool operator==(const TelemetryRecord&) const = default;
};

/// UTC timestamp `epoch + t` with millisecond precision.
std::string iso8601(SimTime t, std::int64_t epoch_unix_seconds = 0);
/// Wall-clock now.
std::string iso8601_now();

const std::vector<std::string>& csv_columns();
std::string csv_header();
std::string to_csv_row(const TelemetryRecord& record);
/// Throws std::invalid_argument with the offending column name.
TelemetryRecord parse_csv_row(std::string_view line);
/// Reads a telemetry CSV; the header must match csv_header().
std::vector<TelemetryRecord> read_csv(const std::filesystem::path& path);

nlohmann::json to_json(const TelemetryRecord& record);
TelemetryRecord from_json(const nlohmann::json& j);

/// Fills parent_ids/child_ids from a registry graph. Returns false when the
/// module is unknown to the graph (the columns are then cleared).
bool join_connectivity(TelemetryRecord& record,
                       const topology::TopologyGraph& graph);

/// Append-only CSV file that always starts with the header row.
class CsvWriter {
 public:
  explicit CsvWriter(std::filesystem::path path);
  void append(const TelemetryRecord& record);
  void flush() { out_.flush(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Anything that accepts records from module loops. Implementations must
/// not block the caller on network I/O.
class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual void publish(const TelemetryRecord& record) = 0;
};

/// Bounded fire-and-forget buffer; drops the oldest entry when full.
class DropOldestBuffer {
 public:
  explicit DropOldestBuffer(std::size_t capacity = 1000) : capacity_(capacity) {}

  void push(std::string line);
  std::vector<std::string> drain();
  std::size_t size() const;
  std::size_t dropped() const;

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> lines_;
  std::size_t capacity_;
  std::size_t dropped_ = 0;
};

/// Single consumer merging many producer streams into the unified CSV.
class Aggregator : public RecordSink {
 public:
  /// `registry` is re-read on every flush; a missing or unreadable file
  /// keeps the last successfully parsed graph.
  Aggregator(std::filesystem::path csv_path, std::filesystem::path registry);

  void publish(const TelemetryRecord& record) override;

  /// Joins pending records with the registry and appends them. No pending
  /// records leaves the file untouched. Returns the number of rows written.
  std::size_t flush();

  /// Every row written so far, in file order.
  std::vector<TelemetryRecord> rows() const;
  std::size_t unknown_module_rows() const;
  std::size_t registry_errors() const;

 private:
  void reload_registry();

  std::filesystem::path registry_path_;
  mutable std::mutex mutex_;
  std::vector<TelemetryRecord> pending_;
  std::vector<TelemetryRecord> written_;
  std::optional<CsvWriter> writer_;
  std::filesystem::path csv_path_;
  topology::TopologyGraph graph_;
  std::size_t unknown_ = 0;
  std::size_t registry_errors_ = 0;
};

/// Fans one record out to several sinks.
class FanOut : public RecordSink {
 public:
  void add(RecordSink* sink) { sinks_.push_back(sink); }
  void publish(const TelemetryRecord& record) override {
    for (auto* s : sinks_) s->publish(record);
  }

 private:
  std::vector<RecordSink*> sinks_;
};

}  // namespace vmc::telemetry
