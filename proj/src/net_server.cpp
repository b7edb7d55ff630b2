#include "mcisim/net_server.hpp"

#include <map>
#include <string_view>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace mcisim {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

bool OutboundQueue::push(std::string message) {
  if (items_.size() >= limit_) return false;
  items_.push_back(std::move(message));
  return true;
}

namespace {

// Longest raw line accepted before the connection is dropped.
constexpr std::size_t kMaxLineBytes = 1 << 20;

}  // namespace

class Conn;

struct NetServer::Impl {
  Impl(Hub& h, NetServerOptions o)
      : hub(h), options(std::move(o)), acceptor(io), timer(io) {
    tcp::endpoint ep(asio::ip::make_address(options.address), options.port);
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
  }

  void accept();
  void schedule_tick();
  void deliver(std::vector<Outgoing> batch);
  void on_message(ConnectionId id, std::string_view text);
  void on_closed(ConnectionId id);

  Hub& hub;
  NetServerOptions options;
  asio::io_context io;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  std::map<ConnectionId, std::shared_ptr<Conn>> conns;
  bool stopping = false;
};

class Conn : public std::enable_shared_from_this<Conn> {
 public:
  Conn(NetServer::Impl& server, ConnectionId id)
      : server_(server), id_(id), queue_(server.options.outbound_limit) {}
  virtual ~Conn() = default;

  ConnectionId id() const { return id_; }

  void send(std::string text, bool close_after) {
    if (closing_) return;
    if (!queue_.push(std::move(text))) {
      close("lagged");
      return;
    }
    if (close_after) close_after_drain_ = true;
    if (!writing_) write_next();
  }

  virtual void start() = 0;
  virtual void close(std::string_view reason) = 0;

 protected:
  virtual void write_front() = 0;

  void write_next() {
    if (queue_.empty()) {
      writing_ = false;
      if (close_after_drain_) close("closed by server");
      return;
    }
    writing_ = true;
    write_front();
  }

  void on_written(beast::error_code ec) {
    if (ec) {
      finish();
      return;
    }
    queue_.pop();
    write_next();
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    closing_ = true;
    server_.on_closed(id_);
  }

  NetServer::Impl& server_;
  ConnectionId id_;
  OutboundQueue queue_;
  bool writing_ = false;
  bool closing_ = false;
  bool close_after_drain_ = false;
  bool finished_ = false;
};

class RawConn : public Conn {
 public:
  RawConn(NetServer::Impl& server, ConnectionId id, tcp::socket socket, std::string pending)
      : Conn(server, id), socket_(std::move(socket)), buffer_(std::move(pending)) {}

  void start() override {
    drain_lines();
    if (!finished_) read();
  }

  void close(std::string_view) override {
    if (finished_) return;
    closing_ = true;
    beast::error_code ec;
    socket_.shutdown(tcp::socket::shutdown_both, ec);
    socket_.close(ec);
    finish();
  }

 protected:
  void write_front() override {
    out_ = queue_.front();
    out_.push_back('\n');
    asio::async_write(socket_, asio::buffer(out_),
                      [self = shared_from_this(), this](beast::error_code ec, std::size_t) {
                        on_written(ec);
                      });
  }

 private:
  void read() {
    auto self = shared_from_this();
    socket_.async_read_some(asio::buffer(chunk_), [self, this](beast::error_code ec,
                                                               std::size_t n) {
      if (finished_) return;
      if (ec) {
        finish();
        return;
      }
      buffer_.append(chunk_.data(), n);
      drain_lines();
      if (!finished_) {
        if (buffer_.size() > kMaxLineBytes) {
          close("line too long");
          return;
        }
        read();
      }
    });
  }

  void drain_lines() {
    std::size_t pos;
    while (!finished_ && (pos = buffer_.find('\n')) != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      server_.on_message(id_, line);
    }
  }

  tcp::socket socket_;
  std::string buffer_;
  std::array<char, 4096> chunk_{};
  std::string out_;
};

class WsConn : public Conn {
 public:
  WsConn(NetServer::Impl& server, ConnectionId id, tcp::socket socket, std::string pending)
      : Conn(server, id), ws_(std::move(socket)) {
    auto b = buffer_.prepare(pending.size());
    asio::buffer_copy(b, asio::buffer(pending));
    buffer_.commit(pending.size());
  }

  void start() override {
    auto self = shared_from_this();
    http::async_read(ws_.next_layer(), buffer_, request_,
                     [self, this](beast::error_code ec, std::size_t) {
                       if (ec || !websocket::is_upgrade(request_)) {
                         abort();
                         return;
                       }
                       ws_.text(true);
                       ws_.async_accept(request_, [self, this](beast::error_code ec) {
                         if (ec) {
                           abort();
                           return;
                         }
                         accepted_ = true;
                         if (!queue_.empty() && !writing_) write_next();
                         read();
                       });
                     });
  }

  void close(std::string_view reason) override {
    if (finished_) return;
    closing_ = true;
    if (!accepted_) {
      abort();
      return;
    }
    websocket::close_reason cr(websocket::close_code::normal);
    if (reason == "lagged") cr.code = websocket::close_code::policy_error;
    cr.reason = std::string(reason);
    ws_.async_close(cr, [self = shared_from_this(), this](beast::error_code) {
      beast::error_code ec;
      ws_.next_layer().close(ec);
      finish();
    });
  }

 protected:
  void write_front() override {
    if (!accepted_) {
      writing_ = false;
      return;
    }
    out_ = queue_.front();
    ws_.async_write(asio::buffer(out_),
                    [self = shared_from_this(), this](beast::error_code ec, std::size_t) {
                      on_written(ec);
                    });
  }

 private:
  void abort() {
    beast::error_code ec;
    ws_.next_layer().close(ec);
    finish();
  }

  void read() {
    auto self = shared_from_this();
    ws_.async_read(buffer_, [self, this](beast::error_code ec, std::size_t) {
      if (finished_) return;
      if (ec) {
        abort();
        return;
      }
      const std::string text = beast::buffers_to_string(buffer_.data());
      buffer_.consume(buffer_.size());
      server_.on_message(id_, text);
      if (!finished_) read();
    });
  }

  websocket::stream<tcp::socket> ws_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  std::string out_;
  bool accepted_ = false;
};

// Reads until the transport can be told apart: four bytes, or a newline.
class Sniffer : public std::enable_shared_from_this<Sniffer> {
 public:
  Sniffer(NetServer::Impl& server, tcp::socket socket)
      : server_(server), socket_(std::move(socket)) {}

  void run() {
    socket_.async_read_some(asio::buffer(chunk_), [self = shared_from_this()](
                                                      beast::error_code ec, std::size_t n) {
      if (ec) return;
      self->bytes_.append(self->chunk_.data(), n);
      if (self->bytes_.size() < 4 && self->bytes_.find('\n') == std::string::npos) {
        self->run();
        return;
      }
      self->dispatch();
    });
  }

 private:
  void dispatch() {
    if (server_.stopping) return;
    const ConnectionId id = server_.hub.connect();
    std::shared_ptr<Conn> conn;
    if (bytes_.rfind("GET ", 0) == 0) {
      conn = std::make_shared<WsConn>(server_, id, std::move(socket_), std::move(bytes_));
    } else {
      conn = std::make_shared<RawConn>(server_, id, std::move(socket_), std::move(bytes_));
    }
    server_.conns.emplace(id, conn);
    conn->start();
  }

  NetServer::Impl& server_;
  tcp::socket socket_;
  std::array<char, 512> chunk_{};
  std::string bytes_;
};

void NetServer::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (!stopping && acceptor.is_open()) accept();
      return;
    }
    socket.set_option(tcp::no_delay(true), ec);
    std::make_shared<Sniffer>(*this, std::move(socket))->run();
    accept();
  });
}

void NetServer::Impl::schedule_tick() {
  timer.expires_after(options.tick_interval);
  timer.async_wait([this](beast::error_code ec) {
    if (ec || stopping) return;
    deliver(hub.tick());
    schedule_tick();
  });
}

void NetServer::Impl::deliver(std::vector<Outgoing> batch) {
  for (auto& out : batch) {
    auto it = conns.find(out.connection);
    if (it == conns.end()) continue;
    // Keep the connection alive in case send() closes it.
    auto conn = it->second;
    conn->send(serialize_envelope(out.envelope), out.close_after);
  }
}

void NetServer::Impl::on_message(ConnectionId id, std::string_view text) {
  deliver(hub.handle(id, text));
}

void NetServer::Impl::on_closed(ConnectionId id) {
  hub.disconnect(id);
  // Defer destruction until the current handler unwinds.
  auto it = conns.find(id);
  if (it == conns.end()) return;
  auto keep = it->second;
  conns.erase(it);
  asio::post(io, [keep] {});
}

NetServer::NetServer(Hub& hub, NetServerOptions options)
    : impl_(std::make_unique<Impl>(hub, std::move(options))) {}

NetServer::~NetServer() = default;

std::uint16_t NetServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void NetServer::run() {
  impl_->accept();
  impl_->schedule_tick();
  impl_->io.run();
}

void NetServer::stop() {
  asio::post(impl_->io, [impl = impl_.get()] {
    impl->stopping = true;
    beast::error_code ec;
    impl->acceptor.close(ec);
    impl->timer.cancel();
    auto conns = impl->conns;
    for (auto& [id, c] : conns) c->close("server shutdown");
    impl->io.stop();
  });
}

}  // namespace mcisim
