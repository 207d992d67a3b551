#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "pfs/teleop/session.hpp"

namespace pfs::teleop {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace ws = beast::websocket;
using tcp = asio::ip::tcp;

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  ///< 0 picks a free port
  SessionConfig session;
  int max_sessions = 4;
  double time_scale = 1.0;  ///< sim seconds per wall second
  std::size_t max_queued_states = 4;  ///< older state frames are dropped beyond this
  std::filesystem::path static_dir;  ///< served over plain HTTP when set
  std::function<void(const std::string&)> log;

  void validate() const {
    session.validate();
    if (max_sessions < 1) throw ConfigError("max_sessions must be at least 1");
    if (!(time_scale > 0.0)) throw ConfigError("time_scale must be positive");
    if (max_queued_states < 1) throw ConfigError("max_queued_states must be at least 1");
  }
};

class Server;

namespace detail {

struct Shared {
  ServerConfig cfg;
  std::atomic<int> active{0};
  std::atomic<std::uint64_t> next_id{0};
  std::atomic<std::uint64_t> sessions_started{0};

  void log(const std::string& s) const {
    if (cfg.log) cfg.log(s);
  }
};

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
  WsSession(tcp::socket socket, std::shared_ptr<Shared> shared)
      : ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        shared_(std::move(shared)),
        session_("s" + std::to_string(++shared_->next_id), shared_->cfg.session) {
    ++shared_->active;
    ++shared_->sessions_started;
  }

  ~WsSession() {
    --shared_->active;
    if (session_.abandon_recording()) shared_->log(session_.id() + ": unfinished recording dropped");
    shared_->log(session_.id() + ": closed");
  }

  void start(http::request<http::string_body> req) {
    ws_.read_message_max(kMaxFrameBytes);
    ws_.set_option(ws::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->shared_->log(self->session_.id() + ": connected");
      self->enqueue(self->session_.hello(), false);
      self->period_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(self->shared_->cfg.session.sim.dt / self->shared_->cfg.time_scale));
      self->deadline_ = std::chrono::steady_clock::now() + self->period_;
      self->schedule();
      self->read();
    });
  }

private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      for (auto& f : self->session_.handle(text)) self->enqueue(std::move(f), false);
      self->read();
    });
  }

  void schedule() {
    timer_.expires_at(deadline_);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      const auto now = std::chrono::steady_clock::now();
      if (auto f = self->session_.tick()) self->enqueue(std::move(*f), true);
      self->deadline_ += self->period_;
      // after a long stall resynchronize instead of bursting
      if (now - self->deadline_ > 25 * self->period_) self->deadline_ = now + self->period_;
      self->schedule();
    });
  }

  void enqueue(std::string frame, bool is_state) {
    if (closed_) return;
    if (is_state) {
      std::size_t states = 0;
      for (const auto& q : queue_) states += q.second;
      // the frame being written (front) cannot be removed
      if (states >= shared_->cfg.max_queued_states)
        for (auto it = queue_.begin() + (writing_ ? 1 : 0); it != queue_.end(); ++it)
          if (it->second) {
            queue_.erase(it);
            ++dropped_;
            break;
          }
    }
    queue_.emplace_back(std::move(frame), is_state);
    if (!writing_) write();
  }

  void write() {
    if (queue_.empty() || closed_) return;
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front().first), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      if (ec) return self->shutdown();
      self->queue_.pop_front();
      self->write();
    });
  }

  void shutdown() {
    if (closed_) return;
    closed_ = true;
    timer_.cancel();
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).close(ignored);
  }

  ws::stream<tcp::socket> ws_;
  asio::steady_timer timer_;
  std::shared_ptr<Shared> shared_;
  Session session_;
  beast::flat_buffer buffer_;
  std::deque<std::pair<std::string, bool>> queue_;
  bool writing_ = false;
  bool closed_ = false;
  std::uint64_t dropped_ = 0;
  std::chrono::steady_clock::duration period_{};
  std::chrono::steady_clock::time_point deadline_;
};

inline std::string mime_type(const std::filesystem::path& p) {
  const std::string e = p.extension().string();
  if (e == ".html") return "text/html";
  if (e == ".js" || e == ".mjs") return "text/javascript";
  if (e == ".css") return "text/css";
  if (e == ".json") return "application/json";
  if (e == ".svg") return "image/svg+xml";
  if (e == ".png") return "image/png";
  return "application/octet-stream";
}

/// Reads one HTTP request, then upgrades to a session, refuses, or serves a
/// static file.
class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
  HttpConnection(tcp::socket socket, std::shared_ptr<Shared> shared)
      : stream_(std::move(socket)), shared_(std::move(shared)) {}

  void start() {
    stream_.expires_after(std::chrono::seconds(10));
    parser_.body_limit(16 * 1024);
    http::async_read(stream_, buffer_, parser_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->dispatch();
    });
  }

private:
  void dispatch() {
    auto req = parser_.release();
    const std::string target(req.target());
    if (ws::is_upgrade(req)) {
      if (target != "/session") return respond(http::status::not_found, "unknown endpoint " + target, req);
      stream_.expires_never();
      beast::error_code ignored;
      stream_.socket().set_option(tcp::no_delay(true), ignored);
      if (shared_->active.load() >= shared_->cfg.max_sessions) return refuse(std::move(req));
      std::make_shared<WsSession>(stream_.release_socket(), shared_)->start(std::move(req));
      return;
    }
    if (req.method() != http::verb::get || shared_->cfg.static_dir.empty())
      return respond(http::status::not_found, "not found", req);
    std::string rel = target.substr(0, target.find('?'));
    if (rel == "/") rel = "/index.html";
    if (rel.find("..") != std::string::npos) return respond(http::status::bad_request, "bad path", req);
    const auto path = shared_->cfg.static_dir / rel.substr(1);
    std::ifstream in(path, std::ios::binary);
    if (!in) return respond(http::status::not_found, "not found", req);
    std::ostringstream body;
    body << in.rdbuf();
    respond(http::status::ok, body.str(), req, mime_type(path));
  }

  /// Completes the handshake so the client can read the reason, then
  /// closes with "try again later".
  void refuse(http::request<http::string_body> req) {
    auto ws = std::make_shared<ws::stream<tcp::socket>>(stream_.release_socket());
    auto shared = shared_;
    shared->log("session refused: limit of " + std::to_string(shared->cfg.max_sessions) + " reached");
    ws->async_accept(req, [ws, shared](beast::error_code ec) {
      if (ec) return;
      auto frame = std::make_shared<std::string>(error_frame(
          "session_limit", "session limit of " + std::to_string(shared->cfg.max_sessions) + " reached"));
      ws->async_write(asio::buffer(*frame), [ws, frame](beast::error_code ec, std::size_t) {
        if (ec) return;
        ws->async_close(ws::close_reason(ws::close_code::try_again_later, "session limit reached"),
                        [ws](beast::error_code) {});
      });
    });
  }

  void respond(http::status status, std::string body, const http::request<http::string_body>& req,
               const std::string& type = "text/plain") {
    auto res = std::make_shared<http::response<http::string_body>>(status, req.version());
    res->set(http::field::content_type, type);
    res->keep_alive(false);
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request_parser<http::string_body> parser_;
  std::shared_ptr<Shared> shared_;
};

}  // namespace detail

/// WebSocket teleoperation service on `/session`. One sim per connection.
/// All sessions run on the thread that calls `run()`.
class Server {
public:
  explicit Server(ServerConfig cfg) : shared_(std::make_shared<detail::Shared>()), acceptor_(ioc_) {
    cfg.validate();
    shared_->cfg = std::move(cfg);
    beast::error_code ec;
    const auto addr = asio::ip::make_address(shared_->cfg.address, ec);
    if (ec) throw ConfigError("bad bind address '" + shared_->cfg.address + "'");
    const tcp::endpoint ep(addr, shared_->cfg.port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw ConfigError("cannot listen on " + shared_->cfg.address + ":" + std::to_string(shared_->cfg.port) +
                              ": " + ec.message());
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  /// Serves until `stop()` is called.
  void run() {
    accept();
    shared_->log("listening on ws://" + shared_->cfg.address + ":" + std::to_string(port()) + "/session");
    ioc_.run();
  }

  /// Safe to call from any thread.
  void stop() {
    asio::post(ioc_, [this] {
      beast::error_code ignored;
      acceptor_.close(ignored);
      ioc_.stop();
    });
  }

  int active_sessions() const { return shared_->active.load(); }
  std::uint64_t sessions_started() const { return shared_->sessions_started.load(); }

private:
  void accept() {
    acceptor_.async_accept(asio::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec == asio::error::operation_aborted) return;
      if (!ec) std::make_shared<detail::HttpConnection>(std::move(socket), shared_)->start();
      accept();
    });
  }

  std::shared_ptr<detail::Shared> shared_;
  asio::io_context ioc_{1};
  tcp::acceptor acceptor_;
};

}  // namespace pfs::teleop
