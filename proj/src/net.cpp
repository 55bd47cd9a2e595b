#include "vmc/net.hpp"

#include <atomic>
#include <deque>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace vmc::net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

json command_reply(std::string_view line, const CommandHandler& handler) {
  json id;
  runtime::Ack ack;
  try {
    const auto j = json::parse(line);
    if (j.is_object() && j.contains("id")) id = j["id"];
    ack = handler(runtime::parse_action(j));
  } catch (const runtime::ScenarioError& e) {
    ack = runtime::Ack::rejected("malformed", e.what());
  } catch (const json::exception& e) {
    ack = runtime::Ack::rejected("malformed", e.what());
  }
  json reply = ack.to_json();
  if (!id.is_null()) reply["id"] = id;
  return reply;
}

/// Bounded FIFO of outgoing lines for one connection. The line being written
/// lives in `current`, so dropping never touches an in-flight buffer.
struct Outbox {
  std::deque<std::string> queue;
  std::string current;
  bool writing = false;
  std::size_t dropped = 0;

  void push(std::string line, std::size_t cap) {
    queue.push_back(std::move(line));
    while (queue.size() > cap) {
      queue.pop_front();
      ++dropped;
    }
  }
};

/// io_context plus the thread running it.
struct Loop {
  asio::io_context io;
  asio::executor_work_guard<asio::io_context::executor_type> work{io.get_executor()};
  std::thread thread;

  void start() {
    thread = std::thread([this] { io.run(); });
  }
  void halt() {
    work.reset();
    io.stop();
    if (thread.joinable()) thread.join();
  }
};

tcp::endpoint loopback(unsigned short port) {
  return {asio::ip::make_address("127.0.0.1"), port};
}

void open_acceptor(tcp::acceptor& acceptor, unsigned short port) {
  const auto ep = loopback(port);
  acceptor.open(ep.protocol());
  acceptor.set_option(asio::socket_base::reuse_address(true));
  acceptor.bind(ep);
  acceptor.listen();
}

}  // namespace

std::string handle_command_line(std::string_view line, const CommandHandler& handler) {
  return command_reply(line, handler).dump();
}

// ---------------------------------------------------------------------------

struct TcpPublisher::Impl {
  struct Client {
    explicit Client(tcp::socket s) : socket(std::move(s)) {}
    tcp::socket socket;
    Outbox out;
  };

  explicit Impl(std::size_t cap) : pending(cap), cap(cap) {}

  void accept() {
    acceptor.async_accept(loop.io, [this](boost::system::error_code ec, tcp::socket s) {
      if (ec) return;
      clients.push_back(std::make_shared<Client>(std::move(s)));
      client_count = clients.size();
      pump();
      accept();
    });
  }

  void pump() {
    if (clients.empty()) return;
    const auto lines = pending.drain();
    for (auto& c : clients) {
      for (const auto& l : lines) c->out.push(l + '\n', cap);
      write(c);
    }
  }

  void write(const std::shared_ptr<Client>& c) {
    if (c->out.writing || c->out.queue.empty()) return;
    c->out.writing = true;
    c->out.current = std::move(c->out.queue.front());
    c->out.queue.pop_front();
    asio::async_write(c->socket, asio::buffer(c->out.current),
                      [this, c](boost::system::error_code ec, std::size_t) {
                        c->out.writing = false;
                        if (ec) {
                          drop(c);
                          return;
                        }
                        write(c);
                      });
  }

  void drop(const std::shared_ptr<Client>& c) {
    client_drops += c->out.dropped + c->out.queue.size();
    std::erase(clients, c);
    client_count = clients.size();
  }

  Loop loop;
  tcp::acceptor acceptor{loop.io};
  telemetry::DropOldestBuffer pending;
  std::size_t cap;
  std::vector<std::shared_ptr<Client>> clients;  // io thread only
  std::atomic<std::size_t> client_count{0};
  std::atomic<std::size_t> client_drops{0};
};

TcpPublisher::TcpPublisher(unsigned short port, std::size_t buffer)
    : impl_(std::make_shared<Impl>(buffer)) {
  open_acceptor(impl_->acceptor, port);
  impl_->accept();
  impl_->loop.start();
}

TcpPublisher::~TcpPublisher() { impl_->loop.halt(); }

unsigned short TcpPublisher::port() const {
  return impl_->acceptor.local_endpoint().port();
}

void TcpPublisher::publish(const telemetry::TelemetryRecord& record) {
  impl_->pending.push(telemetry::to_json(record).dump());
  asio::post(impl_->loop.io, [impl = impl_.get()] { impl->pump(); });
}

std::size_t TcpPublisher::subscribers() const { return impl_->client_count; }

std::size_t TcpPublisher::dropped() const {
  return impl_->pending.dropped() + impl_->client_drops;
}

// ---------------------------------------------------------------------------

struct TcpSubscriber::Impl {
  Impl(std::string host, unsigned short port, telemetry::RecordSink& sink)
      : host(std::move(host)), port(port), sink(sink) {}

  void connect() {
    boost::system::error_code ec;
    const auto endpoints = resolver.resolve(host, std::to_string(port), ec);
    if (ec) {
      retry();
      return;
    }
    asio::async_connect(socket, endpoints,
                        [this](boost::system::error_code ec, const tcp::endpoint&) {
                          if (ec) {
                            retry();
                            return;
                          }
                          is_connected = true;
                          read();
                        });
  }

  void retry() {
    boost::system::error_code ignored;
    socket.close(ignored);
    is_connected = false;
    timer.expires_after(std::chrono::milliseconds(200));
    timer.async_wait([this](boost::system::error_code ec) {
      if (!ec) connect();
    });
  }

  void read() {
    asio::async_read_until(socket, buffer, '\n',
                           [this](boost::system::error_code ec, std::size_t n) {
                             if (ec) {
                               retry();
                               return;
                             }
                             std::string line(asio::buffers_begin(buffer.data()),
                                              asio::buffers_begin(buffer.data()) + n);
                             buffer.consume(n);
                             try {
                               sink.publish(telemetry::from_json(json::parse(line)));
                               ++count;
                             } catch (const std::exception&) {
                               ++bad;
                             }
                             read();
                           });
  }

  std::string host;
  unsigned short port;
  telemetry::RecordSink& sink;
  Loop loop;
  tcp::resolver resolver{loop.io};
  tcp::socket socket{loop.io};
  asio::steady_timer timer{loop.io};
  asio::streambuf buffer;
  std::atomic<std::size_t> count{0};
  std::atomic<std::size_t> bad{0};
  std::atomic<bool> is_connected{false};
};

TcpSubscriber::TcpSubscriber(std::string host, unsigned short port,
                             telemetry::RecordSink& sink)
    : impl_(std::make_shared<Impl>(std::move(host), port, sink)) {
  asio::post(impl_->loop.io, [impl = impl_.get()] { impl->connect(); });
  impl_->loop.start();
}

TcpSubscriber::~TcpSubscriber() { impl_->loop.halt(); }

std::size_t TcpSubscriber::received() const { return impl_->count; }
std::size_t TcpSubscriber::malformed() const { return impl_->bad; }
bool TcpSubscriber::connected() const { return impl_->is_connected; }

// ---------------------------------------------------------------------------

struct CommandServer::Impl {
  struct Session {
    explicit Session(tcp::socket s) : socket(std::move(s)) {}
    tcp::socket socket;
    asio::streambuf buffer;
    std::string reply;
  };

  explicit Impl(CommandHandler h) : handler(std::move(h)) {}

  void accept() {
    acceptor.async_accept(loop.io, [this](boost::system::error_code ec, tcp::socket s) {
      if (ec) return;
      read(std::make_shared<Session>(std::move(s)));
      accept();
    });
  }

  void read(std::shared_ptr<Session> s) {
    asio::async_read_until(
        s->socket, s->buffer, '\n', [this, s](boost::system::error_code ec, std::size_t n) {
          if (ec) return;
          std::string line(asio::buffers_begin(s->buffer.data()),
                           asio::buffers_begin(s->buffer.data()) + n);
          s->buffer.consume(n);
          while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) {
            line.pop_back();
          }
          if (line.empty()) {
            read(s);
            return;
          }
          s->reply = handle_command_line(line, handler) + '\n';
          asio::async_write(s->socket, asio::buffer(s->reply),
                            [this, s](boost::system::error_code ec, std::size_t) {
                              if (!ec) read(s);
                            });
        });
  }

  CommandHandler handler;
  Loop loop;
  tcp::acceptor acceptor{loop.io};
};

CommandServer::CommandServer(CommandHandler handler, unsigned short port)
    : impl_(std::make_shared<Impl>(std::move(handler))) {
  open_acceptor(impl_->acceptor, port);
  impl_->accept();
  impl_->loop.start();
}

CommandServer::~CommandServer() { impl_->loop.halt(); }

unsigned short CommandServer::port() const {
  return impl_->acceptor.local_endpoint().port();
}

// ---------------------------------------------------------------------------

struct Gateway::Impl {
  class WsSession : public std::enable_shared_from_this<WsSession> {
   public:
    WsSession(tcp::socket socket, Impl& owner) : ws_(std::move(socket)), owner_(owner) {}

    void run(http::request<http::string_body> req) {
      ws_.text(true);
      ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->owner_.sessions.insert(self);
        self->owner_.session_count = self->owner_.sessions.size();
        self->read();
      });
    }

    void send(std::string text) {
      out_.push(std::move(text), kPublishBuffer);
      write();
    }

   private:
    void read() {
      ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->close();
          return;
        }
        const auto text = beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        auto reply = command_reply(text, self->owner_.handler);
        json msg;
        if (reply.contains("id")) {
          msg["id"] = reply["id"];
          reply.erase("id");
        }
        msg["ack"] = std::move(reply);
        self->send(msg.dump());
        self->read();
      });
    }

    void write() {
      if (out_.writing || out_.queue.empty()) return;
      out_.writing = true;
      out_.current = std::move(out_.queue.front());
      out_.queue.pop_front();
      ws_.async_write(asio::buffer(out_.current),
                      [self = shared_from_this()](beast::error_code ec, std::size_t) {
                        self->out_.writing = false;
                        if (ec) {
                          self->close();
                          return;
                        }
                        self->write();
                      });
    }

    void close() {
      owner_.sessions.erase(shared_from_this());
      owner_.session_count = owner_.sessions.size();
    }

    websocket::stream<beast::tcp_stream> ws_;
    Impl& owner_;
    beast::flat_buffer buffer_;
    Outbox out_;
  };

  struct HttpSession : std::enable_shared_from_this<HttpSession> {
    HttpSession(tcp::socket s, Impl& o) : stream(std::move(s)), owner(o) {}

    void run() {
      http::async_read(stream, buffer, req,
                       [self = shared_from_this()](beast::error_code ec, std::size_t) {
                         if (ec) return;
                         self->handle();
                       });
    }

    void handle() {
      if (websocket::is_upgrade(req)) {
        std::make_shared<WsSession>(stream.release_socket(), owner)->run(std::move(req));
        return;
      }
      res.version(req.version());
      res.keep_alive(false);
      res.set(http::field::server, "vmc-gateway");
      res.set(http::field::access_control_allow_origin, "*");
      const auto target = std::string(req.target());
      if (req.method() != http::verb::get) {
        res.result(http::status::method_not_allowed);
        res.set(http::field::content_type, "text/plain");
        res.body() = "read-only endpoint\n";
      } else if (target == "/registry") {
        res.result(http::status::ok);
        res.set(http::field::content_type, "text/plain; charset=utf-8");
        res.body() = owner.registry();
      } else if (target == "/health") {
        res.result(http::status::ok);
        res.set(http::field::content_type, "text/plain");
        res.body() = "ok\n";
      } else {
        res.result(http::status::not_found);
        res.set(http::field::content_type, "text/plain");
        res.body() = "not found\n";
      }
      res.prepare_payload();
      http::async_write(stream, res,
                        [self = shared_from_this()](beast::error_code, std::size_t) {
                          beast::error_code ignored;
                          self->stream.socket().shutdown(tcp::socket::shutdown_send, ignored);
                        });
    }

    beast::tcp_stream stream;
    Impl& owner;
    beast::flat_buffer buffer;
    http::request<http::string_body> req;
    http::response<http::string_body> res;
  };

  Impl(CommandHandler h, RegistryProvider r) : handler(std::move(h)), registry(std::move(r)) {}

  void accept() {
    acceptor.async_accept(loop.io, [this](boost::system::error_code ec, tcp::socket s) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(s), *this)->run();
      accept();
    });
  }

  CommandHandler handler;
  RegistryProvider registry;
  Loop loop;
  tcp::acceptor acceptor{loop.io};
  std::set<std::shared_ptr<WsSession>> sessions;  // io thread only
  std::atomic<std::size_t> session_count{0};
};

Gateway::Gateway(CommandHandler handler, RegistryProvider registry, unsigned short port)
    : impl_(std::make_shared<Impl>(std::move(handler), std::move(registry))) {
  open_acceptor(impl_->acceptor, port);
  impl_->accept();
  impl_->loop.start();
}

Gateway::~Gateway() {
  impl_->loop.halt();
  impl_->sessions.clear();
}

unsigned short Gateway::port() const { return impl_->acceptor.local_endpoint().port(); }

void Gateway::publish(const telemetry::TelemetryRecord& record) {
  asio::post(impl_->loop.io, [impl = impl_.get(), text = telemetry::to_json(record).dump()] {
    for (const auto& s : impl->sessions) s->send(text);
  });
}

std::size_t Gateway::sessions() const { return impl_->session_count; }

}  // namespace vmc::net
