#include "teleopforge/transport/channel.hpp"

#include <condition_variable>
#include <deque>
#include <future>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace teleopforge::transport {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

double wall_clock_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(system_clock::now().time_since_epoch()).count();
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
    throw std::invalid_argument("endpoint '" + endpoint + "' is not host:port");
  }
  const int port = std::stoi(endpoint.substr(colon + 1));
  if (port <= 0 || port > 65535) throw std::invalid_argument("endpoint port out of range");
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

struct Channel::Impl {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws;
  std::thread io_thread;

  beast::flat_buffer read_buf;
  std::deque<std::vector<std::uint8_t>> outq;  // io thread only
  bool writing = false;
  bool closing = false;
  std::size_t out_limit = 1024;
  std::atomic<std::uint64_t> dropped{0};
  std::atomic<std::uint64_t> sent{0};
  std::atomic<std::uint64_t> received{0};

  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> inq;
  bool closed = false;
  std::promise<void> close_done;
  bool close_signalled = false;

  explicit Impl() : ws(ioc) {}
  explicit Impl(tcp::socket socket) : ws(std::move(socket)) {}

  void mark_closed() {
    {
      std::lock_guard lock(mu);
      closed = true;
    }
    cv.notify_all();
    if (!close_signalled) {
      close_signalled = true;
      close_done.set_value();
    }
  }

  void start() {
    ws.binary(true);
    ws.auto_fragment(false);
    do_read();
    io_thread = std::thread([this] { ioc.run(); });
  }

  void do_read() {
    ws.async_read(read_buf, [this](beast::error_code ec, std::size_t n) {
      if (ec) {
        mark_closed();
        return;
      }
      received += n;
      const auto data = read_buf.data();
      std::vector<std::uint8_t> bytes(static_cast<const std::uint8_t*>(data.data()),
                                      static_cast<const std::uint8_t*>(data.data()) + data.size());
      read_buf.consume(read_buf.size());
      {
        std::lock_guard lock(mu);
        inq.push_back(std::move(bytes));
      }
      cv.notify_all();
      do_read();
    });
  }

  void enqueue(std::vector<std::uint8_t> frame) {
    if (closing || !ws.is_open()) return;
    outq.push_back(std::move(frame));
    // The front element may be mid-write; drop the oldest one behind it.
    while (outq.size() > out_limit + (writing ? 1 : 0)) {
      outq.erase(outq.begin() + (writing ? 1 : 0));
      ++dropped;
    }
    if (!writing) do_write();
  }

  void do_write() {
    if (outq.empty()) {
      if (closing) do_close();
      return;
    }
    writing = true;
    ws.async_write(net::buffer(outq.front()), [this](beast::error_code ec, std::size_t n) {
      writing = false;
      if (ec) {
        outq.clear();
        mark_closed();
        return;
      }
      sent += n;
      outq.pop_front();
      do_write();
    });
  }

  void do_close() {
    if (!ws.is_open()) {
      mark_closed();
      return;
    }
    ws.async_close(websocket::close_code::normal, [this](beast::error_code) {
      beast::error_code ignored;
      ws.next_layer().shutdown(tcp::socket::shutdown_both, ignored);
      ws.next_layer().close(ignored);
      mark_closed();
    });
  }

  void shutdown() {
    if (io_thread.joinable()) {
      auto done = close_done.get_future();
      net::post(ioc, [this] {
        closing = true;
        if (!writing) do_write();
      });
      done.wait_for(2s);
      ioc.stop();
      io_thread.join();
    }
    mark_closed();
  }
};

Channel::Channel(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

Channel::~Channel() { close(); }

std::unique_ptr<Channel> Channel::connect(const std::string& host, std::uint16_t port,
                                          std::chrono::milliseconds timeout) {
  auto impl = std::make_unique<Impl>();
  beast::error_code result = net::error::timed_out;
  bool finished = false;
  tcp::resolver resolver(impl->ioc);
  beast::error_code rec;
  const auto endpoints = resolver.resolve(host, std::to_string(port), rec);
  if (rec) throw ChannelError("cannot resolve " + host + ": " + rec.message());
  net::async_connect(impl->ws.next_layer(), endpoints,
                     [&](beast::error_code ec, const tcp::endpoint&) {
                       if (ec) {
                         result = ec;
                         finished = true;
                         return;
                       }
                       impl->ws.next_layer().set_option(tcp::no_delay(true));
                       impl->ws.async_handshake(host + ":" + std::to_string(port), "/",
                                                [&](beast::error_code hec) {
                                                  result = hec;
                                                  finished = true;
                                                });
                     });
  impl->ioc.run_for(timeout);
  if (!finished || result) {
    throw ChannelError("cannot connect to " + host + ":" + std::to_string(port) + ": " +
                       (finished ? result.message() : std::string("timed out")));
  }
  impl->ioc.restart();
  impl->start();
  return std::unique_ptr<Channel>(new Channel(std::move(impl)));
}

void Channel::send_bytes(std::vector<std::uint8_t> frame) {
  net::post(impl_->ioc, [impl = impl_.get(), f = std::move(frame)]() mutable { impl->enqueue(std::move(f)); });
}

std::optional<std::vector<std::uint8_t>> Channel::receive_bytes(std::chrono::milliseconds timeout) {
  std::unique_lock lock(impl_->mu);
  impl_->cv.wait_for(lock, timeout, [&] { return !impl_->inq.empty() || impl_->closed; });
  if (impl_->inq.empty()) return std::nullopt;
  auto bytes = std::move(impl_->inq.front());
  impl_->inq.pop_front();
  return bytes;
}

std::optional<Message> Channel::receive(std::chrono::milliseconds timeout) {
  auto bytes = receive_bytes(timeout);
  if (!bytes) return std::nullopt;
  return decode(*bytes);
}

bool Channel::is_open() const {
  std::lock_guard lock(impl_->mu);
  return !impl_->closed;
}

void Channel::close() {
  if (impl_) impl_->shutdown();
}

void Channel::set_outbound_limit(std::size_t frames) {
  net::post(impl_->ioc, [impl = impl_.get(), frames] { impl->out_limit = std::max<std::size_t>(frames, 1); });
}

std::uint64_t Channel::outbound_dropped() const { return impl_->dropped.load(); }
std::uint64_t Channel::bytes_sent() const { return impl_->sent.load(); }
std::uint64_t Channel::bytes_received() const { return impl_->received.load(); }

struct Listener::Impl {
  net::io_context ioc;
  tcp::acceptor acceptor;

  Impl(std::uint16_t port, const std::string& bind) : acceptor(ioc) {
    const tcp::endpoint ep(net::ip::make_address(bind), port);
    acceptor.open(ep.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
  }
};

Listener::Listener(std::uint16_t port, const std::string& bind_address) {
  try {
    impl_ = std::make_unique<Impl>(port, bind_address);
  } catch (const boost::system::system_error& e) {
    throw ChannelError("cannot listen on " + bind_address + ":" + std::to_string(port) + ": " + e.what());
  }
}

Listener::~Listener() { close(); }

std::uint16_t Listener::port() const { return impl_->acceptor.local_endpoint().port(); }

std::unique_ptr<Channel> Listener::accept(std::chrono::milliseconds timeout) {
  if (!impl_->acceptor.is_open()) return nullptr;
  auto channel_impl = std::make_unique<Channel::Impl>();
  std::optional<tcp::socket> peer;
  // The accepted socket is bound to the channel's own context.
  impl_->acceptor.async_accept(channel_impl->ioc, [&](beast::error_code ec, tcp::socket s) {
    if (!ec) peer.emplace(std::move(s));
  });
  impl_->ioc.restart();
  impl_->ioc.run_for(timeout);
  if (!peer) {
    beast::error_code ignored;
    impl_->acceptor.cancel(ignored);
    impl_->ioc.restart();
    impl_->ioc.poll();
    return nullptr;
  }
  channel_impl->ws.next_layer() = std::move(*peer);
  channel_impl->ws.next_layer().set_option(tcp::no_delay(true));
  bool finished = false;
  beast::error_code result;
  channel_impl->ws.async_accept([&](beast::error_code ec) {
    result = ec;
    finished = true;
  });
  channel_impl->ioc.run_for(std::max<std::chrono::milliseconds>(timeout, 2s));
  if (!finished || result) return nullptr;
  channel_impl->ioc.restart();
  channel_impl->start();
  return std::unique_ptr<Channel>(new Channel(std::move(channel_impl)));
}

void Listener::close() {
  if (impl_ && impl_->acceptor.is_open()) {
    beast::error_code ignored;
    impl_->acceptor.close(ignored);
  }
}

}  // namespace teleopforge::transport
