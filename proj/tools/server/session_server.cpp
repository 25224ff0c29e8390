#include "session_server.hpp"

#include <chrono>
#include <deque>

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "nashmodes/errors.hpp"

namespace nashmodes {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

constexpr std::size_t kMaxQueuedFrames = 32;

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, const ServerConfig& cfg, std::shared_ptr<ModeCache> modes, std::string id)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), cfg_(cfg), modes_(std::move(modes)), id_(std::move(id)) {
    const double seconds = cfg_.session.mpc.dt * cfg_.tick_scale;
    period_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(seconds));
  }

  void run() {
    net::dispatch(ws_.get_executor(), [self = shared_from_this()] { self->accept(); });
  }

 private:
  void accept() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->on_accept();
    });
  }

  void on_accept() {
    SessionConfig sc = cfg_.session;
    sc.modes = [cache = modes_](const std::string& scenario, const GameSpec& game) { return cache->get(scenario, game); };
    try {
      session_ = std::make_unique<Session>(id_, std::move(sc));
    } catch (const std::exception& e) {
      send(error_frame(std::string("session setup failed: ") + e.what()).dump());
      return;
    }
    send(session_->snapshot().dump());
    read();
    next_tick_ = std::chrono::steady_clock::now();
    schedule();
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->shutdown();
        return;
      }
      self->session_->enqueue(beast::buffers_to_string(self->buffer_.data()));
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void schedule() {
    next_tick_ += period_;
    const auto now = std::chrono::steady_clock::now();
    if (next_tick_ < now) next_tick_ = now;  // behind schedule: the session counts the overrun
    timer_.expires_at(next_tick_);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      for (auto& frame : self->session_->step()) self->send(frame.dump());
      self->schedule();
    });
  }

  void send(std::string text) {
    if (closed_ || queue_.size() >= kMaxQueuedFrames) return;
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write();
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->shutdown();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  void shutdown() {
    closed_ = true;
    queue_.clear();
    timer_.cancel();
  }

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  const ServerConfig& cfg_;
  std::shared_ptr<ModeCache> modes_;
  std::string id_;
  std::unique_ptr<Session> session_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::chrono::steady_clock::duration period_{};
  std::chrono::steady_clock::time_point next_tick_;
  bool closed_ = false;
};

}  // namespace

ModeCache::ModeCache(PipelineConfig pipeline) : pipeline_(std::move(pipeline)) {}

EquilibriumSet ModeCache::get(const std::string& scenario, const GameSpec& game) {
  std::lock_guard lock(mutex_);
  auto it = cache_.find(scenario);
  if (it == cache_.end()) it = cache_.emplace(scenario, multinash_pf(game, pipeline_)).first;
  return it->second;
}

struct SessionServer::Impl {
  explicit Impl(int threads) : ioc(threads), acceptor(net::make_strand(ioc)) {}

  void accept_next(const ServerConfig& cfg, const std::shared_ptr<ModeCache>& modes) {
    acceptor.async_accept(net::make_strand(ioc), [this, &cfg, modes](beast::error_code ec, tcp::socket socket) {
      if (!acceptor.is_open()) return;
      if (!ec) std::make_shared<Connection>(std::move(socket), cfg, modes, "s" + std::to_string(++next_id))->run();
      accept_next(cfg, modes);
    });
  }

  net::io_context ioc;
  tcp::acceptor acceptor;
  std::atomic<int> next_id{0};
};

SessionServer::SessionServer(ServerConfig cfg)
    : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>(std::max(1, cfg_.threads))),
      modes_(std::make_shared<ModeCache>(cfg_.session.pipeline)) {
  validate(cfg_.session.mpc);
  if (!(cfg_.tick_scale > 0)) throw ConfigError("tick scale must be positive");
}

SessionServer::~SessionServer() { stop(); }

void SessionServer::start() {
  const tcp::endpoint endpoint(net::ip::make_address(cfg_.address), cfg_.port);
  auto& acceptor = impl_->acceptor;
  acceptor.open(endpoint.protocol());
  acceptor.set_option(net::socket_base::reuse_address(true));
  acceptor.bind(endpoint);
  acceptor.listen(net::socket_base::max_listen_connections);
  bound_port_ = acceptor.local_endpoint().port();
  impl_->accept_next(cfg_, modes_);
  for (int k = 0; k < std::max(1, cfg_.threads); ++k) workers_.emplace_back([this] { impl_->ioc.run(); });
}

void SessionServer::stop() {
  if (!impl_) return;
  net::post(impl_->acceptor.get_executor(), [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
  });
  impl_->ioc.stop();
  wait();
}

void SessionServer::wait() {
  for (auto& w : workers_)
    if (w.joinable()) w.join();
  workers_.clear();
}

}  // namespace nashmodes
