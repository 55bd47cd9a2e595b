#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "vmc/runtime.hpp"
#include "vmc/snapshot.hpp"

using namespace vmc;
using namespace vmc::runtime;
using vmc::test::Gen;
using vmc::test::scratch_dir;

namespace {

StateSnapshot random_snapshot(Gen& gen, const std::string& id) {
  StateSnapshot s;
  s.module_id = id;
  s.state.resource = gen.unit();
  s.state.successin_out = gen.unit();
  s.state.vessels = {gen.unit(), gen.unit()};
  s.state.child_successin = {gen.unit(), gen.unit()};
  s.slot_occupied = {gen.coin(), gen.coin()};
  s.plug_live = {gen.coin(), gen.coin(), gen.coin()};
  s.iteration = static_cast<std::uint64_t>(gen.integer(0, 1 << 20));
  s.written_at = "2018-01-01T00:00:00.000Z";
  return s;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
}

}  // namespace

TEST_CASE("snapshot round trip") {
  const auto dir = scratch_dir("snap");
  SnapshotStore store(dir);
  Gen gen(51);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_snapshot(gen, "RPN" + std::to_string(i % 4));
    store.write(s);
    const auto back = store.load(s.module_id);
    CHECK(back.status == LoadStatus::Loaded);
    CHECK(back.snapshot == s);
    CHECK(snapshot_from_json(to_json(s)) == s);
  }
}

TEST_CASE("cold start defaults for a missing snapshot") {
  SnapshotStore store(scratch_dir("snap-missing"));
  const auto r = store.load("RPN1");
  CHECK(r.status == LoadStatus::Missing);
  CHECK(r.warning.empty());
  CHECK(r.snapshot.state.vessels == std::vector<double>{0.01, 0.01});
  CHECK(r.snapshot.state.resource == 0.0);
  CHECK(r.snapshot.state.successin_out == 0.0);
  CHECK(r.snapshot.iteration == 0);
}

TEST_CASE("a crash mid-write leaves the previous snapshot loadable") {
  const auto dir = scratch_dir("snap-crash");
  SnapshotStore store(dir);
  Gen gen(52);
  const auto old = random_snapshot(gen, "RPN2");
  store.write(old);
  // the writer died after emitting half of the temporary file
  auto next = random_snapshot(gen, "RPN2");
  const auto text = to_json(next).dump(2);
  auto tmp = store.path_for("RPN2");
  tmp += ".tmp";
  write_text(tmp, text.substr(0, text.size() / 2));
  const auto r = store.load("RPN2");
  CHECK(r.status == LoadStatus::Loaded);
  CHECK(r.snapshot == old);
  // and the next complete write replaces both
  store.write(next);
  CHECK(store.load("RPN2").snapshot == next);
  CHECK_FALSE(std::filesystem::exists(tmp));
}

TEST_CASE("corrupt snapshots cold-start with a warning") {
  const auto dir = scratch_dir("snap-corrupt");
  SnapshotStore store(dir);
  Gen gen(53);

  write_text(store.path_for("RPN1"), "{\"module_id\": \"RPN1\", \"vess");
  auto r = store.load("RPN1");
  CHECK(r.status == LoadStatus::Corrupt);
  CHECK_FALSE(r.warning.empty());
  CHECK(r.snapshot.state == NodeVmcState::cold_start());

  auto bad = to_json(random_snapshot(gen, "RPN1"));
  bad["vessels"] = {0.1, 0.2, 0.3};
  write_text(store.path_for("RPN1"), bad.dump());
  CHECK(store.load("RPN1").status == LoadStatus::Corrupt);

  store.write(random_snapshot(gen, "RPN3"));
  std::filesystem::copy_file(store.path_for("RPN3"), store.path_for("RPN4"));
  CHECK(store.load("RPN4").status == LoadStatus::Corrupt);
}

TEST_CASE("snapshot consistency") {
  Gen gen(54);
  auto s = random_snapshot(gen, "RPN1");
  CHECK(s.consistent());
  s.state.vessels.pop_back();
  CHECK_FALSE(s.consistent());
  s = random_snapshot(gen, "RPN1");
  s.state.vessels[0] = std::nan("");
  CHECK_FALSE(s.consistent());
  s = random_snapshot(gen, "RPN1");
  s.state.vessels[1] = -1.0;
  CHECK_FALSE(s.consistent());
}

TEST_CASE("the genome file is written once and never changes") {
  const auto dir = scratch_dir("genome");
  const auto path = dir / "genome.json";
  write_genome_file(path, Genome::reference());
  CHECK(read_genome_file(path) == Genome::reference());
  CHECK_NOTHROW(write_genome_file(path, Genome::reference()));
  Genome other;
  other.beta = 3.0;
  CHECK_THROWS(write_genome_file(path, other));
  CHECK(read_genome_file(path) == Genome::reference());

  auto j = to_json(Genome::reference());
  CHECK(genome_from_json(j) == Genome::reference());
  j.erase("alpha");
  CHECK_THROWS_AS(genome_from_json(j), std::invalid_argument);
  j = to_json(Genome::reference());
  j["alpha"] = 1.5;
  CHECK_THROWS_AS(genome_from_json(j), std::domain_error);
}

TEST_CASE("a module starting from a corrupt snapshot warns and cold-starts") {
  const auto dir = scratch_dir("module-corrupt");
  channel::BusConfig cfg;
  cfg.mode = channel::Mode::Ideal;
  channel::ChannelBus bus(cfg);
  SnapshotStore store(dir / "state");
  std::filesystem::create_directories(dir / "state");
  write_text(store.path_for("RPN1"), "not json");

  struct Null : telemetry::RecordSink {
    std::vector<telemetry::TelemetryRecord> got;
    void publish(const telemetry::TelemetryRecord& r) override { got.push_back(r); }
  } sink;
  std::vector<std::string> warnings;
  auto scene = std::make_shared<env::Scene>();
  scene->poses["RPN1-1"] = {};
  scene->poses["RPN1-2"] = {};

  ModuleContext ctx;
  ctx.bus = &bus;
  ctx.store = &store;
  ctx.sink = &sink;
  ctx.module_csv_dir = dir / "modules";
  ctx.sensor_jitter = 0.0;
  ctx.scene = [scene] { return std::shared_ptr<const env::Scene>(scene); };
  ctx.warn = [&](const std::string& w) { warnings.push_back(w); };

  for (int k = 1; k <= 2; ++k) {
    bus.add_sender(topology::slot_resource_out("RPN1", k), {});
    bus.add_receiver(topology::slot_successin_in("RPN1", k), {});
  }
  for (int p = 1; p <= 3; ++p) {
    bus.add_receiver(topology::plug_resource_in("RPN1", p), {});
    bus.add_sender(topology::plug_successin_out("RPN1", p), {});
  }

  ModuleProcess m({"RPN1", 0}, ctx);
  m.start(SimTime{0});
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("RPN1") != std::string::npos);
  CHECK(m.state() == NodeVmcState::cold_start());
  CHECK(m.status() == ModuleStatus::Running);

  const auto rec = m.iterate(std::chrono::seconds(1));
  CHECK(rec.iteration == 1);
  CHECK(sink.got.size() == 1);
  CHECK(store.load("RPN1").status == LoadStatus::Loaded);
  CHECK(store.load("RPN1").snapshot.iteration == 1);

  // a path that cannot be written halts the module after the retries
  auto tmp = store.path_for("RPN1");
  tmp += ".tmp";
  std::filesystem::create_directories(tmp);
  m.iterate(std::chrono::seconds(2));
  CHECK(m.status() == ModuleStatus::Halted);
  CHECK(warnings.back().find("halting") != std::string::npos);
}
