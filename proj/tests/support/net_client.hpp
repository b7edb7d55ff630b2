#pragma once
// Blocking test clients for the raw TCP and WebSocket transports.

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include "mcisim/hub.hpp"
#include "mcisim/net_server.hpp"

namespace mcisim::testing {

// Hub plus NetServer on an ephemeral port, served from a background thread.
class LiveServer {
 public:
  explicit LiveServer(HubConfig config, std::size_t outbound_limit = kOutboundLimit)
      : t0_(std::chrono::steady_clock::now()),
        hub_(std::move(config),
             [t0 = t0_] {
               return static_cast<std::uint64_t>(
                   std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - t0)
                       .count());
             }),
        server_(hub_, options(outbound_limit)),
        thread_([this] { server_.run(); }) {}

  ~LiveServer() {
    server_.stop();
    thread_.join();
  }

  std::uint16_t port() const { return server_.port(); }

 private:
  static NetServerOptions options(std::size_t limit) {
    NetServerOptions o;
    o.address = "127.0.0.1";
    o.port = 0;
    o.outbound_limit = limit;
    return o;
  }

  std::chrono::steady_clock::time_point t0_;
  Hub hub_;
  NetServer server_;
  std::thread thread_;
};

class Client {
 public:
  virtual ~Client() = default;
  virtual void send_raw(const std::string& text) = 0;
  // Next message, or nullopt on timeout or close.
  virtual std::optional<nlohmann::json> recv(std::chrono::milliseconds timeout) = 0;

  void send(const std::string& type, nlohmann::json payload = nlohmann::json::object(),
            std::optional<std::string> session = std::nullopt) {
    nlohmann::json msg = {{"v", 1},        {"type", type},          {"sender", client_id},
                          {"seq", seq_++}, {"ts_ms", 0},            {"payload", payload}};
    msg["session"] = session ? nlohmann::json(*session) : nlohmann::json(nullptr);
    send_raw(msg.dump());
  }

  // Reads until pred matches; every message read is kept in history.
  std::optional<nlohmann::json> wait_for(const std::function<bool(const nlohmann::json&)>& pred,
                                         std::chrono::milliseconds timeout = std::chrono::seconds(3)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      auto m = recv(left);
      if (!m) return std::nullopt;
      history.push_back(*m);
      if (pred(*m)) return m;
    }
    return std::nullopt;
  }

  std::optional<nlohmann::json> wait_type(const std::string& type) {
    return wait_for([&](const nlohmann::json& m) { return m["type"] == type; });
  }

  std::optional<nlohmann::json> wait_event(const std::string& kind) {
    return wait_for([&](const nlohmann::json& m) {
      return m["type"] == "Event" && m["payload"]["kind"] == kind;
    });
  }

  bool hello(const std::string& name, const std::string& role) {
    send("Hello", {{"v", 1}, {"role_intent", role}, {"name", name}});
    auto w = wait_type("Welcome");
    if (w) client_id = (*w)["payload"]["client_id"];
    return w.has_value();
  }

  std::string client_id;
  std::vector<nlohmann::json> history;

 private:
  std::uint64_t seq_ = 0;
};

class TcpClient : public Client {
 public:
  explicit TcpClient(std::uint16_t port) : socket_(io_) {
    socket_.connect({boost::asio::ip::make_address("127.0.0.1"), port});
  }

  void send_raw(const std::string& text) override {
    boost::asio::write(socket_, boost::asio::buffer(text + "\n"));
  }

  std::optional<nlohmann::json> recv(std::chrono::milliseconds timeout) override {
    for (;;) {
      if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
        auto line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return nlohmann::json::parse(line);
      }
      if (closed_) return std::nullopt;
      bool done = false;
      socket_.async_read_some(boost::asio::buffer(chunk_),
                              [&](boost::system::error_code ec, std::size_t n) {
                                done = true;
                                if (ec) {
                                  closed_ = true;
                                  return;
                                }
                                buffer_.append(chunk_.data(), n);
                              });
      io_.restart();
      io_.run_for(timeout);
      if (!done) {
        socket_.cancel();
        io_.restart();
        io_.run();
        return std::nullopt;
      }
    }
  }

  bool closed() const { return closed_; }

 private:
  boost::asio::io_context io_;
  boost::asio::ip::tcp::socket socket_;
  std::string buffer_;
  std::array<char, 8192> chunk_{};
  bool closed_ = false;
};

class WsClient : public Client {
 public:
  explicit WsClient(std::uint16_t port) : ws_(io_) {
    ws_.next_layer().connect({boost::asio::ip::make_address("127.0.0.1"), port});
    ws_.handshake("127.0.0.1:" + std::to_string(port), "/");
    ws_.text(true);
  }

  void send_raw(const std::string& text) override { ws_.write(boost::asio::buffer(text)); }

  std::optional<nlohmann::json> recv(std::chrono::milliseconds timeout) override {
    bool done = false;
    boost::system::error_code err;
    ws_.async_read(buffer_, [&](boost::system::error_code ec, std::size_t) {
      done = true;
      err = ec;
    });
    io_.restart();
    io_.run_for(timeout);
    if (!done) {
      ws_.next_layer().cancel();
      io_.restart();
      io_.run();
      return std::nullopt;
    }
    if (err) {
      close_reason = ws_.reason().reason.c_str();
      return std::nullopt;
    }
    auto text = boost::beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    return nlohmann::json::parse(text);
  }

  std::string close_reason;

 private:
  boost::asio::io_context io_;
  boost::beast::websocket::stream<boost::asio::ip::tcp::socket> ws_;
  boost::beast::flat_buffer buffer_;
};

}  // namespace mcisim::testing
