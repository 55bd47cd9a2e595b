#pragma once

// Network side of telemetry and control: the NDJSON publish stream, a
// subscriber feeding an aggregator, the NDJSON command stream, and a
// WebSocket/HTTP gateway for browser consoles.
//
// Every service runs its own I/O thread. publish() never blocks on the
// network: records go into a bounded buffer that drops its oldest entry.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "vmc/runtime.hpp"
#include "vmc/telemetry.hpp"

namespace vmc::net {

using CommandHandler = std::function<runtime::Ack(const runtime::Action&)>;
using RegistryProvider = std::function<std::string()>;

inline constexpr std::size_t kPublishBuffer = 1000;

/// Parses one command line and runs it. The reply is a single JSON object:
/// {"ok":..,"reason":..,"detail":..} plus "id" when the command carried one.
std::string handle_command_line(std::string_view line, const CommandHandler& handler);

/// TCP server streaming one JSON object per line to every subscriber.
/// Records published while nobody listens wait in the buffer.
class TcpPublisher : public telemetry::RecordSink {
 public:
  explicit TcpPublisher(unsigned short port = 0, std::size_t buffer = kPublishBuffer);
  ~TcpPublisher() override;

  unsigned short port() const;
  void publish(const telemetry::TelemetryRecord& record) override;
  std::size_t subscribers() const;
  std::size_t dropped() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Connects to a publisher (retrying until it answers) and forwards every
/// decoded record to `sink`.
class TcpSubscriber {
 public:
  TcpSubscriber(std::string host, unsigned short port, telemetry::RecordSink& sink);
  ~TcpSubscriber();

  std::size_t received() const;
  std::size_t malformed() const;
  bool connected() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// TCP server for the newline-delimited command stream; replies one ack
/// line per command.
class CommandServer {
 public:
  explicit CommandServer(CommandHandler handler, unsigned short port = 0);
  ~CommandServer();

  unsigned short port() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Browser bridge on a single port:
///   GET /registry  -> the connectivity document (text/plain)
///   GET /health    -> "ok"
///   WebSocket      -> telemetry records as text frames; text frames sent by
///                     the client are commands, answered with
///                     {"ack":{...},"id":..}.
class Gateway : public telemetry::RecordSink {
 public:
  Gateway(CommandHandler handler, RegistryProvider registry, unsigned short port = 0);
  ~Gateway() override;

  unsigned short port() const;
  void publish(const telemetry::TelemetryRecord& record) override;
  std::size_t sessions() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace vmc::net
