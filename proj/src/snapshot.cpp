#include "vmc/snapshot.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vmc::runtime {

namespace {

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return nlohmann::json::parse(buf.str());
}

}  // namespace

bool StateSnapshot::consistent() const {
  if (module_id.empty()) return false;
  if (state.vessels.size() != kChildSlots ||
      state.child_successin.size() != kChildSlots) {
    return false;
  }
  if (!finite_nonneg(state.resource)) return false;
  if (!finite_nonneg(state.successin_out) || state.successin_out > 1.0) {
    return false;
  }
  for (double v : state.vessels) {
    if (!finite_nonneg(v)) return false;
  }
  for (double s : state.child_successin) {
    if (!finite_nonneg(s) || s > 1.0) return false;
  }
  return true;
}

nlohmann::json to_json(const StateSnapshot& s) {
  return {
      {"module_id", s.module_id},
      {"iteration", s.iteration},
      {"written_at", s.written_at},
      {"resource", s.state.resource},
      {"successin_out", s.state.successin_out},
      {"vessels", s.state.vessels},
      {"child_successin", s.state.child_successin},
      {"slot_occupied", s.slot_occupied},
      {"plug_live", s.plug_live},
  };
}

StateSnapshot snapshot_from_json(const nlohmann::json& j) {
  StateSnapshot s;
  try {
    s.module_id = j.at("module_id").get<std::string>();
    s.iteration = j.at("iteration").get<std::uint64_t>();
    s.written_at = j.at("written_at").get<std::string>();
    s.state.resource = j.at("resource").get<double>();
    s.state.successin_out = j.at("successin_out").get<double>();
    s.state.vessels = j.at("vessels").get<std::vector<double>>();
    s.state.child_successin = j.at("child_successin").get<std::vector<double>>();
    s.slot_occupied = j.at("slot_occupied").get<std::array<bool, kChildSlots>>();
    s.plug_live = j.at("plug_live").get<std::array<bool, kParentPlugs>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("snapshot: ") + e.what());
  }
  if (!s.consistent()) throw std::invalid_argument("snapshot is inconsistent");
  return s;
}

SnapshotStore::SnapshotStore(std::filesystem::path directory)
    : dir_(std::move(directory)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path SnapshotStore::path_for(const std::string& id) const {
  return dir_ / (id + ".json");
}

void SnapshotStore::write(const StateSnapshot& snapshot) const {
  const auto target = path_for(snapshot.module_id);
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << to_json(snapshot).dump(2) << '\n';
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

LoadResult SnapshotStore::load(const std::string& module_id) const {
  LoadResult result;
  result.snapshot.module_id = module_id;
  const auto path = path_for(module_id);
  if (!std::filesystem::exists(path)) {
    result.status = LoadStatus::Missing;
    return result;
  }
  try {
    auto snap = snapshot_from_json(read_json(path));
    if (snap.module_id != module_id) {
      throw std::invalid_argument("snapshot belongs to " + snap.module_id);
    }
    result.snapshot = std::move(snap);
    result.status = LoadStatus::Loaded;
  } catch (const std::exception& e) {
    result.status = LoadStatus::Corrupt;
    result.warning = path.string() + ": " + e.what() + "; cold start";
  }
  return result;
}

nlohmann::json to_json(const Genome& g) {
  return {{"omega_c", g.omega_c},     {"omega_phi", g.omega_phi},
          {"omega_lambda", g.omega_lambda}, {"rho_c", g.rho_c},
          {"rho_phi", g.rho_phi},     {"rho_lambda", g.rho_lambda},
          {"alpha", g.alpha},         {"beta", g.beta}};
}

Genome genome_from_json(const nlohmann::json& j) {
  Genome g;
  try {
    g.omega_c = j.at("omega_c").get<double>();
    g.omega_phi = j.at("omega_phi").get<double>();
    g.omega_lambda = j.at("omega_lambda").get<double>();
    g.rho_c = j.at("rho_c").get<double>();
    g.rho_phi = j.at("rho_phi").get<double>();
    g.rho_lambda = j.at("rho_lambda").get<double>();
    g.alpha = j.at("alpha").get<double>();
    g.beta = j.at("beta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("genome: ") + e.what());
  }
  g.validate();
  return g;
}

void write_genome_file(const std::filesystem::path& path,
                       const Genome& genome) {
  if (std::filesystem::exists(path)) {
    if (read_genome_file(path) != genome) {
      throw std::runtime_error(path.string() +
                               " holds a different genome; it is immutable");
    }
    return;
  }
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(genome).dump(2) << '\n';
}

Genome read_genome_file(const std::filesystem::path& path) {
  return genome_from_json(read_json(path));
}

}  // namespace vmc::runtime
