#include "vmc/telemetry.hpp"

#include <chrono>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace vmc::telemetry {

namespace {

// Gregorian date from days since 1970-01-01.
void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<int>(static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2));
}

std::string format_unix_ms(std::int64_t ms) {
  std::int64_t secs = ms / 1000;
  std::int64_t rem = ms % 1000;
  if (rem < 0) {
    rem += 1000;
    --secs;
  }
  std::int64_t days = secs / 86400;
  std::int64_t sod = secs % 86400;
  if (sod < 0) {
    sod += 86400;
    --days;
  }
  int y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", y, m, d,
                     sod / 3600, (sod / 60) % 60, sod % 60, rem);
}

std::string num(double x) { return fmt::format("{:.12g}", x); }

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

double parse_double(std::string_view text, const std::string& column) {
  try {
    std::size_t used = 0;
    const std::string s(text);
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(column);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad numeric value in column " + column);
  }
}

bool parse_bool(std::string_view text, const std::string& column) {
  if (text == "1") return true;
  if (text == "0") return false;
  throw std::invalid_argument("bad flag in column " + column);
}

}  // namespace

std::string iso8601(SimTime t, std::int64_t epoch_unix_seconds) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t);
  return format_unix_ms(epoch_unix_seconds * 1000 + ms.count());
}

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return format_unix_ms(
      std::chrono::duration_cast<std::chrono::milliseconds>(now).count());
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> columns = [] {
    std::vector<std::string> c{"ts_iso8601", "module", "iter",
                               "r_in",       "r_gen",  "s_out"};
    for (std::size_t k = 1; k <= kChildSlots; ++k) {
      for (const char* f : {"s", "v", "r", "live", "light", "upright"}) {
        c.push_back(fmt::format("{}_slot{}", f, k));
      }
    }
    c.emplace_back("parent_ids");
    c.emplace_back("child_ids");
    return c;
  }();
  return columns;
}

std::string csv_header() {
  std::string out;
  for (const auto& c : csv_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

std::string to_csv_row(const TelemetryRecord& r) {
  std::string out = fmt::format("{},{},{},{},{},{}", r.timestamp, r.module,
                                r.iteration, num(r.r_in), num(r.r_gen),
                                num(r.s_out));
  for (const auto& s : r.slots) {
    out += fmt::format(",{},{},{},{},{},{}", num(s.successin), num(s.vessel),
                       num(s.resource), s.live ? 1 : 0, num(s.light),
                       num(s.upright));
  }
  out += ',';
  out += r.parent_ids;
  out += ',';
  out += r.child_ids;
  return out;
}

TelemetryRecord parse_csv_row(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto cells = split(line, ',');
  const auto& cols = csv_columns();
  if (cells.size() != cols.size()) {
    throw std::invalid_argument(fmt::format(
        "expected {} columns, found {}", cols.size(), cells.size()));
  }
  TelemetryRecord r;
  std::size_t i = 0;
  r.timestamp = std::string(cells[i++]);
  r.module = std::string(cells[i++]);
  r.iteration = static_cast<std::uint64_t>(parse_double(cells[i], cols[i]));
  ++i;
  r.r_in = parse_double(cells[i], cols[i]);
  ++i;
  r.r_gen = parse_double(cells[i], cols[i]);
  ++i;
  r.s_out = parse_double(cells[i], cols[i]);
  ++i;
  for (auto& s : r.slots) {
    s.successin = parse_double(cells[i], cols[i]);
    ++i;
    s.vessel = parse_double(cells[i], cols[i]);
    ++i;
    s.resource = parse_double(cells[i], cols[i]);
    ++i;
    s.live = parse_bool(cells[i], cols[i]);
    ++i;
    s.light = parse_double(cells[i], cols[i]);
    ++i;
    s.upright = parse_double(cells[i], cols[i]);
    ++i;
  }
  r.parent_ids = std::string(cells[i++]);
  r.child_ids = std::string(cells[i++]);
  if (r.module.empty()) throw std::invalid_argument("empty module column");
  return r;
}

std::vector<TelemetryRecord> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path.string() + ": missing header row");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header()) {
    throw std::runtime_error(path.string() + ": unexpected header row");
  }
  std::vector<TelemetryRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(parse_csv_row(line));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(
          fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

nlohmann::json to_json(const TelemetryRecord& r) {
  nlohmann::json j;
  j["ts_iso8601"] = r.timestamp;
  j["module"] = r.module;
  j["iter"] = r.iteration;
  j["r_in"] = r.r_in;
  j["r_gen"] = r.r_gen;
  j["s_out"] = r.s_out;
  for (std::size_t k = 0; k < r.slots.size(); ++k) {
    const auto& s = r.slots[k];
    const auto n = k + 1;
    j[fmt::format("s_slot{}", n)] = s.successin;
    j[fmt::format("v_slot{}", n)] = s.vessel;
    j[fmt::format("r_slot{}", n)] = s.resource;
    j[fmt::format("live_slot{}", n)] = s.live ? 1 : 0;
    j[fmt::format("light_slot{}", n)] = s.light;
    j[fmt::format("upright_slot{}", n)] = s.upright;
  }
  j["parent_ids"] = r.parent_ids;
  j["child_ids"] = r.child_ids;
  return j;
}

TelemetryRecord from_json(const nlohmann::json& j) {
  TelemetryRecord r;
  r.timestamp = j.at("ts_iso8601").get<std::string>();
  r.module = j.at("module").get<std::string>();
  r.iteration = j.at("iter").get<std::uint64_t>();
  r.r_in = j.at("r_in").get<double>();
  r.r_gen = j.at("r_gen").get<double>();
  r.s_out = j.at("s_out").get<double>();
  for (std::size_t k = 0; k < r.slots.size(); ++k) {
    auto& s = r.slots[k];
    const auto n = k + 1;
    s.successin = j.at(fmt::format("s_slot{}", n)).get<double>();
    s.vessel = j.at(fmt::format("v_slot{}", n)).get<double>();
    s.resource = j.at(fmt::format("r_slot{}", n)).get<double>();
    s.live = j.at(fmt::format("live_slot{}", n)).get<int>() != 0;
    s.light = j.at(fmt::format("light_slot{}", n)).get<double>();
    s.upright = j.at(fmt::format("upright_slot{}", n)).get<double>();
  }
  r.parent_ids = j.value("parent_ids", "");
  r.child_ids = j.value("child_ids", "");
  return r;
}

bool join_connectivity(TelemetryRecord& record,
                       const topology::TopologyGraph& graph) {
  record.parent_ids.clear();
  record.child_ids.clear();
  if (!graph.has_module(record.module)) return false;
  for (const auto& e : graph.parent_edges(record.module)) {
    if (!record.parent_ids.empty()) record.parent_ids += ';';
    record.parent_ids += e.parent.module_id + "." + std::to_string(e.parent.slot);
  }
  for (int k = 1; k <= static_cast<int>(kChildSlots); ++k) {
    if (auto child = graph.child_at({record.module, k})) {
      if (!record.child_ids.empty()) record.child_ids += ';';
      record.child_ids += std::to_string(k) + "=" + *child;
    }
  }
  return true;
}

CsvWriter::CsvWriter(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
  const bool fresh = !std::filesystem::exists(path_) ||
                     std::filesystem::file_size(path_) == 0;
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw std::runtime_error("cannot open " + path_.string());
  if (fresh) out_ << csv_header() << '\n';
}

void CsvWriter::append(const TelemetryRecord& record) {
  out_ << to_csv_row(record) << '\n';
}

void DropOldestBuffer::push(std::string line) {
  std::lock_guard lock(mutex_);
  if (lines_.size() >= capacity_) {
    lines_.pop_front();
    ++dropped_;
  }
  lines_.push_back(std::move(line));
}

std::vector<std::string> DropOldestBuffer::drain() {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out(std::make_move_iterator(lines_.begin()),
                               std::make_move_iterator(lines_.end()));
  lines_.clear();
  return out;
}

std::size_t DropOldestBuffer::size() const {
  std::lock_guard lock(mutex_);
  return lines_.size();
}

std::size_t DropOldestBuffer::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

Aggregator::Aggregator(std::filesystem::path csv_path,
                       std::filesystem::path registry)
    : registry_path_(std::move(registry)), csv_path_(std::move(csv_path)) {}

void Aggregator::publish(const TelemetryRecord& record) {
  std::lock_guard lock(mutex_);
  pending_.push_back(record);
}

void Aggregator::reload_registry() {
  std::ifstream in(registry_path_);
  if (!in) {
    ++registry_errors_;
    return;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    graph_ = topology::registry_import(buf.str());
  } catch (const std::exception&) {
    ++registry_errors_;
  }
}

std::size_t Aggregator::flush() {
  std::lock_guard lock(mutex_);
  if (pending_.empty()) return 0;
  reload_registry();
  if (!writer_) writer_.emplace(csv_path_);
  for (auto& r : pending_) {
    if (!join_connectivity(r, graph_)) ++unknown_;
    writer_->append(r);
    written_.push_back(std::move(r));
  }
  const auto n = pending_.size();
  pending_.clear();
  writer_->flush();
  return n;
}

std::vector<TelemetryRecord> Aggregator::rows() const {
  std::lock_guard lock(mutex_);
  return written_;
}

std::size_t Aggregator::unknown_module_rows() const {
  std::lock_guard lock(mutex_);
  return unknown_;
}

std::size_t Aggregator::registry_errors() const {
  std::lock_guard lock(mutex_);
  return registry_errors_;
}

}  // namespace vmc::telemetry
