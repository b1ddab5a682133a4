#include "teleopforge/netem/proxy.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <stdexcept>
#include <vector>

namespace teleopforge::netem {

namespace {

using Clock = std::chrono::steady_clock;

int connect_to(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) return -1;
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd >= 0) {
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  return fd;
}

bool send_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const auto w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

}  // namespace

/// One shaped direction: a reader feeding a timed queue and a writer
/// draining it at the scheduled delivery times.
struct Pipe {
  int src;
  int dst;
  LinkShaper shaper;
  Clock::time_point epoch;
  std::shared_ptr<std::atomic<std::uint64_t>> counter;

  std::mutex mu;
  std::condition_variable cv;
  struct Chunk {
    Clock::time_point due;
    std::vector<std::uint8_t> data;
  };
  std::deque<Chunk> queue;
  std::size_t pending = 0;
  bool eof = false;
  bool failed = false;

  Pipe(int s, int d, const LinkSpec& spec, Clock::time_point e, std::shared_ptr<std::atomic<std::uint64_t>> c)
      : src(s), dst(d), shaper(spec), epoch(e), counter(std::move(c)) {}

  void fail() {
    {
      std::lock_guard lock(mu);
      failed = true;
    }
    cv.notify_all();
    ::shutdown(src, SHUT_RDWR);
    ::shutdown(dst, SHUT_RDWR);
  }

  void read_loop(const std::atomic<bool>& stopping) {
    std::vector<std::uint8_t> buf(64 * 1024);
    const std::size_t cap = shaper.spec().queue_bytes;
    while (!stopping) {
      pollfd p{src, POLLIN, 0};
      const int r = ::poll(&p, 1, 100);
      if (r < 0 && errno != EINTR) break;
      if (r <= 0) continue;
      const auto n = ::recv(src, buf.data(), buf.size(), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return pending < cap || failed || stopping; });
      if (failed || stopping) return;
      const double now_ms = std::chrono::duration<double, std::milli>(Clock::now() - epoch).count();
      std::size_t off = 0;
      for (const auto& piece : shaper.push(now_ms, static_cast<std::size_t>(n))) {
        const auto due = epoch + std::chrono::duration_cast<Clock::duration>(
                                     std::chrono::duration<double, std::milli>(piece.deliver_at_ms));
        queue.push_back({due, std::vector<std::uint8_t>(buf.begin() + static_cast<std::ptrdiff_t>(off),
                                                        buf.begin() + static_cast<std::ptrdiff_t>(off + piece.bytes))});
        off += piece.bytes;
      }
      pending += off;
      lock.unlock();
      cv.notify_all();
    }
    {
      std::lock_guard lock(mu);
      eof = true;
    }
    cv.notify_all();
  }

  void write_loop(const std::atomic<bool>& stopping) {
    for (;;) {
      std::unique_lock lock(mu);
      cv.wait_for(lock, std::chrono::milliseconds(100),
                  [&] { return !queue.empty() || eof || failed || stopping; });
      if (failed || stopping) return;
      if (queue.empty()) {
        if (eof) {
          ::shutdown(dst, SHUT_WR);
          return;
        }
        continue;
      }
      const auto due = queue.front().due;
      if (Clock::now() < due) {
        cv.wait_until(lock, due, [&] { return failed || stopping.load(); });
        continue;
      }
      auto chunk = std::move(queue.front());
      queue.pop_front();
      lock.unlock();
      if (!send_all(dst, chunk.data.data(), chunk.data.size())) {
        fail();
        return;
      }
      *counter += chunk.data.size();
      lock.lock();
      pending -= chunk.data.size();
      lock.unlock();
      cv.notify_all();
    }
  }
};

struct Proxy::Connection {
  int client_fd;
  int upstream_fd;
  std::unique_ptr<Pipe> up;
  std::unique_ptr<Pipe> down;
  std::vector<std::thread> threads;
  std::atomic<int> running{0};

  ~Connection() {
    for (auto& t : threads) {
      if (t.joinable()) t.join();
    }
    ::close(client_fd);
    ::close(upstream_fd);
  }
};

Proxy::Proxy(NetworkProfile profile, std::string upstream_host, std::uint16_t upstream_port,
             std::uint16_t listen_port, const std::string& bind_address)
    : profile_(std::move(profile)),
      upstream_host_(std::move(upstream_host)),
      upstream_port_(upstream_port),
      up_bytes_(std::make_shared<std::atomic<std::uint64_t>>(0)),
      down_bytes_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
  profile_.uplink.validate();
  profile_.downlink.validate();
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw std::runtime_error("netem: socket failed");
  int one = 1;
  setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(listen_port);
  if (inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw std::invalid_argument("netem: bad bind address " + bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw std::runtime_error("netem: cannot listen on port " + std::to_string(listen_port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

Proxy::~Proxy() { stop(); }

void Proxy::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  reap(true);
}

Proxy::Stats Proxy::stats() const {
  return {accepted_.load(), refused_.load(), up_bytes_->load(), down_bytes_->load()};
}

void Proxy::reap(bool all) {
  std::lock_guard lock(mu_);
  for (auto it = connections_.begin(); it != connections_.end();) {
    auto& c = *it;
    if (all) {
      c->up->fail();
      c->down->fail();
    }
    if (all || c->running.load() == 0) {
      it = connections_.erase(it);  // joins
    } else {
      ++it;
    }
  }
}

void Proxy::accept_loop() {
  const auto epoch = Clock::now();
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    reap(false);
    if (r <= 0) continue;
    const int client = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (client < 0) continue;
    int one = 1;
    setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    const int upstream = connect_to(upstream_host_, upstream_port_);
    if (upstream < 0) {
      ++refused_;
      ::close(client);
      continue;
    }
    ++accepted_;
    auto c = std::make_shared<Connection>();
    c->client_fd = client;
    c->upstream_fd = upstream;
    c->up = std::make_unique<Pipe>(client, upstream, profile_.uplink, epoch, up_bytes_);
    c->down = std::make_unique<Pipe>(upstream, client, profile_.downlink, epoch, down_bytes_);
    c->running = 4;
    auto run = [this, raw = c.get()](Pipe* pipe, bool reader) {
      if (reader) {
        pipe->read_loop(stopping_);
      } else {
        pipe->write_loop(stopping_);
      }
      --raw->running;
    };
    c->threads.emplace_back(run, c->up.get(), true);
    c->threads.emplace_back(run, c->up.get(), false);
    c->threads.emplace_back(run, c->down.get(), true);
    c->threads.emplace_back(run, c->down.get(), false);
    std::lock_guard lock(mu_);
    connections_.push_back(std::move(c));
  }
}

}  // namespace teleopforge::netem
