// vmcsim: run, validate and inspect VMC scenarios.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "vmc/advice.hpp"
#include "vmc/net.hpp"
#include "vmc/scenarios.hpp"

namespace fs = std::filesystem;
using namespace vmc;

namespace {

std::atomic<bool> g_interrupted{false};
runtime::Simulation* g_sim = nullptr;

void on_signal(int) {
  g_interrupted = true;
  if (g_sim) g_sim->stop();
}

void print_advice(const std::vector<runtime::LeafShare>& advice) {
  if (advice.empty()) {
    std::cout << "no free leaves\n";
    return;
  }
  std::cout << fmt::format("{:<4} {:<12} {:>12} {:>8}\n", "rank", "leaf", "resource", "share");
  int rank = 1;
  for (const auto& l : advice) {
    std::cout << fmt::format("{:<4} {:<12} {:>12.6f} {:>7.1f}%\n", rank++, l.leaf_id,
                             l.resource, 100.0 * l.share);
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, bool fast_forward,
            bool real_time, std::optional<double> duration, std::optional<double> time_scale,
            const fs::path& out, std::optional<unsigned short> publish_port,
            std::optional<unsigned short> command_port,
            std::optional<unsigned short> gateway_port) {
  auto scenario = runtime::load_scenario(path);
  scenarios::RunOptions opt;
  opt.seed = seed;
  opt.duration = duration;
  if (fast_forward) opt.mode = runtime::Mode::FastForward;
  if (real_time) opt.mode = runtime::Mode::RealTime;
  if (time_scale) scenario.runtime.time_scale = *time_scale;
  scenario = scenarios::with_options(std::move(scenario), opt);

  const bool networked = publish_port || command_port || gateway_port;
  if (!networked) {
    auto report = scenarios::run(scenario, out);
    std::cout << report.text();
    return report.passed() ? 0 : 1;
  }

  runtime::Simulation sim(scenario, out);
  std::optional<net::TcpPublisher> publisher;
  std::optional<net::CommandServer> commands;
  std::optional<net::Gateway> gateway;
  auto handler = [&sim](const runtime::Action& a) { return sim.apply(a); };
  if (publish_port) {
    publisher.emplace(*publish_port);
    sim.add_sink(&*publisher);
    std::cerr << "telemetry stream on 127.0.0.1:" << publisher->port() << "\n";
  }
  if (command_port) {
    commands.emplace(handler, *command_port);
    std::cerr << "command stream on 127.0.0.1:" << commands->port() << "\n";
  }
  if (gateway_port) {
    gateway.emplace(handler, [&sim] { return sim.registry_document(); }, *gateway_port);
    sim.add_sink(&*gateway);
    std::cerr << "gateway on http://127.0.0.1:" << gateway->port() << "/registry\n";
  }
  g_sim = &sim;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto t0 = std::chrono::steady_clock::now();
  sim.run();
  g_sim = nullptr;

  scenarios::Report report;
  report.scenario = scenario.name;
  report.seed = scenario.runtime.iteration.seed;
  report.states = sim.summaries();
  report.checks = scenarios::check_assertions(scenario, report.states);
  const auto log = sim.action_log();
  for (auto& c : scenarios::check_apical_dominance(log, report.states)) {
    report.checks.push_back(std::move(c));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream(out / "report.txt") << report.text();
  std::ofstream(out / "report.json") << report.to_json().dump(2) << '\n';
  std::cout << report.text();
  return report.passed() ? 0 : 1;
}

int cmd_validate(const std::string& path) {
  const auto s = runtime::load_scenario(path);
  std::cout << fmt::format("{}: {} modules, {} events, {} assertions, {:.0f} s\n", s.name,
                           s.modules.size(), s.events.size(), s.assertions.size(),
                           s.end_time());
  for (const auto& e : s.events) {
    std::cout << fmt::format("  t={:>7.1f}  {}\n", e.at, runtime::describe(e.action));
  }
  return 0;
}

int cmd_advise(const fs::path& dir, std::size_t window) {
  const auto csv = fs::is_directory(dir) ? dir / "telemetry.csv" : dir;
  const auto rows = telemetry::read_csv(csv);
  print_advice(runtime::growth_advice(rows, window));
  return 0;
}

int cmd_replay(const fs::path& csv, std::optional<fs::path> registry, double rate,
               unsigned short gateway_port, std::optional<unsigned short> publish_port) {
  const auto rows = telemetry::read_csv(csv);
  if (!registry) {
    const auto guess = csv.parent_path() / "connectivity.txt";
    if (fs::exists(guess)) registry = guess;
  }
  auto registry_text = [registry] { return registry ? read_file(*registry) : std::string(); };
  auto reject = [](const runtime::Action&) {
    return runtime::Ack::rejected("read-only", "replay does not accept commands");
  };
  net::Gateway gateway(reject, registry_text, gateway_port);
  std::optional<net::TcpPublisher> publisher;
  if (publish_port) publisher.emplace(*publish_port);
  std::cerr << "replaying " << rows.size() << " rows on ws://127.0.0.1:" << gateway.port()
            << "\n";
  std::signal(SIGINT, on_signal);
  const auto gap = std::chrono::duration<double>(1.0 / rate);
  for (const auto& r : rows) {
    if (g_interrupted) break;
    gateway.publish(r);
    if (publisher) publisher->publish(r);
    std::this_thread::sleep_for(gap);
  }
  return 0;
}

int cmd_aggregate(const std::string& host, unsigned short port, const fs::path& registry,
                  const fs::path& out, double interval, double duration) {
  telemetry::Aggregator aggregator(out, registry);
  net::TcpSubscriber subscriber(host, port, aggregator);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto start = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    std::this_thread::sleep_for(std::chrono::duration<double>(interval));
    aggregator.flush();
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (duration > 0 && elapsed >= duration) break;
  }
  aggregator.flush();
  std::cerr << fmt::format("{} records, {} unknown-module rows, {} malformed lines\n",
                           subscriber.received(), aggregator.unknown_module_rows(),
                           subscriber.malformed());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vascular morphogenesis controller simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a scenario and check its assertions");
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  bool fast_forward = false, real_time = false;
  std::optional<double> duration, time_scale;
  std::string out_dir = "out";
  std::optional<unsigned short> publish_port, command_port, gateway_port;
  run->add_option("scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "override the scenario seed");
  auto* ff = run->add_flag("--fast-forward", fast_forward, "seeded discrete-event scheduler");
  run->add_flag("--real-time", real_time, "one thread per module, wall-clock waits")
      ->excludes(ff);
  run->add_option("--duration", duration, "run length in simulated seconds");
  run->add_option("--time-scale", time_scale, "simulated seconds per wall second");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--publish", publish_port, "serve the NDJSON telemetry stream on PORT");
  run->add_option("--commands", command_port, "serve the NDJSON command stream on PORT");
  run->add_option("--gateway", gateway_port, "serve the WebSocket/HTTP gateway on PORT");

  auto* validate = app.add_subcommand("validate", "Parse and cross-check a scenario");
  std::string validate_path;
  validate->add_option("scenario", validate_path)->required()->check(CLI::ExistingFile);

  auto* advise = app.add_subcommand("advise", "Rank free leaves from telemetry");
  std::string advise_dir;
  std::size_t window = runtime::kDefaultAdviceWindow;
  advise->add_option("telemetry", advise_dir, "run directory or telemetry CSV")
      ->required()
      ->check(CLI::ExistingPath);
  advise->add_option("--window", window, "rows averaged per module");

  auto* replay = app.add_subcommand("replay", "Re-emit a telemetry CSV to consoles");
  std::string replay_csv;
  std::optional<std::string> replay_registry;
  double rate = 50.0;
  unsigned short replay_port = 8765;
  std::optional<unsigned short> replay_publish;
  replay->add_option("csv", replay_csv)->required()->check(CLI::ExistingFile);
  replay->add_option("--registry", replay_registry, "connectivity file served at /registry");
  replay->add_option("--rate", rate, "rows per second")->check(CLI::PositiveNumber);
  replay->add_option("--gateway", replay_port, "gateway port");
  replay->add_option("--publish", replay_publish, "also serve the NDJSON stream on PORT");

  auto* aggregate = app.add_subcommand("aggregate", "Subscribe to a telemetry stream");
  std::string host = "127.0.0.1";
  unsigned short agg_port = 0;
  std::string agg_registry, agg_out = "telemetry.csv";
  double interval = 1.0, agg_duration = 0.0;
  aggregate->add_option("--host", host);
  aggregate->add_option("--port", agg_port)->required();
  aggregate->add_option("--registry", agg_registry, "connectivity file")->required();
  aggregate->add_option("--out", agg_out, "unified CSV");
  aggregate->add_option("--interval", interval, "seconds between flushes");
  aggregate->add_option("--duration", agg_duration, "stop after SECS (0: until interrupted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      return cmd_run(scenario_path, seed, fast_forward, real_time, duration, time_scale,
                     out_dir, publish_port, command_port, gateway_port);
    }
    if (*validate) return cmd_validate(validate_path);
    if (*advise) return cmd_advise(advise_dir, window);
    if (*replay) {
      std::optional<fs::path> reg;
      if (replay_registry) reg = *replay_registry;
      return cmd_replay(replay_csv, reg, rate, replay_port, replay_publish);
    }
    if (*aggregate) {
      return cmd_aggregate(host, agg_port, agg_registry, agg_out, interval, agg_duration);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
