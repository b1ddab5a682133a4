#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <numeric>
#include <random>
#include <thread>

#include "doctest.h"
#include "teleopforge/netem/proxy.hpp"
#include "teleopforge/netem/shaper.hpp"

using namespace teleopforge::netem;
using Clock = std::chrono::steady_clock;

namespace {

LinkSpec rate_link(double bps, double delay = 0) {
  LinkSpec l;
  l.rate_bps = bps;
  l.delay_ms = delay;
  return l;
}

LinkSpec trace_link(std::vector<std::uint64_t> t, double delay = 0) {
  LinkSpec l;
  l.trace_ms = std::move(t);
  l.delay_ms = delay;
  return l;
}

// Minimal blocking echo server on an ephemeral port.
struct EchoServer {
  int fd;
  std::uint16_t port;
  std::thread t;
  EchoServer() {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a);
    ::listen(fd, 4);
    socklen_t len = sizeof a;
    getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
    port = ntohs(a.sin_port);
    t = std::thread([this] {
      const int c = ::accept(fd, nullptr, nullptr);
      if (c < 0) return;
      char buf[4096];
      for (;;) {
        const auto n = ::recv(c, buf, sizeof buf, 0);
        if (n <= 0) break;
        ::send(c, buf, static_cast<std::size_t>(n), MSG_NOSIGNAL);
      }
      ::close(c);
    });
  }
  ~EchoServer() {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
    t.join();
  }
};

int dial(std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(port);
  a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&a), sizeof a) == 0);
  return fd;
}

std::size_t recv_exact(int fd, std::uint8_t* out, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const auto r = ::recv(fd, out + got, n - got, 0);
    if (r <= 0) break;
    got += static_cast<std::size_t>(r);
  }
  return got;
}

}  // namespace

TEST_CASE("neutral link is passthrough") {
  LinkShaper s(LinkSpec{});
  const auto p = s.push(12.5, 5000);
  REQUIRE(p.size() == 1);
  CHECK(p[0].deliver_at_ms == 12.5);
  CHECK(p[0].bytes == 5000);
  CHECK(s.queued_bytes(12.5) == 0);
}

TEST_CASE("trace delivery opportunities") {
  {
    LinkShaper s(trace_link({0, 10, 20}));
    const auto p = s.push(0, 1500);
    REQUIRE(p.size() == 1);
    CHECK(p[0].deliver_at_ms == 0.0);
  }
  {
    LinkShaper s(trace_link({0, 10, 20}));
    const auto p = s.push(0, 4500);
    REQUIRE(p.size() == 3);
    CHECK(p.back().deliver_at_ms == 20.0);
    CHECK(p[1].deliver_at_ms == 10.0);
  }
  {
    // Looping: period 20, so opportunities continue at 20, 30, 40 ...
    LinkShaper s(trace_link({0, 10, 20}, 5));
    const auto p = s.push(25, 3000);
    REQUIRE(p.size() == 2);
    CHECK(p[0].deliver_at_ms == 35.0);
    CHECK(p[1].deliver_at_ms == 45.0);
  }
  {
    // Unused budget is not banked while the queue is empty.
    LinkShaper s(trace_link({10, 20}));
    s.push(0, 100);
    const auto p = s.push(15, 1500);
    REQUIRE(p.size() == 1);
    CHECK(p[0].deliver_at_ms == 20.0);
  }
}

TEST_CASE("constant rate goodput") {
  // 10 s of 1 Mbit/s offered load into a 500 kbit/s link.
  LinkShaper s(rate_link(500e3, 20));
  std::uint64_t delivered = 0;
  for (int ms = 0; ms < 10000; ms += 10) {
    for (const auto& p : s.push(ms, 1250)) {
      if (p.deliver_at_ms <= 10000.0) delivered += p.bytes;
    }
  }
  const double goodput = static_cast<double>(delivered) * 8 / 10.0;
  CHECK(goodput == doctest::Approx(500e3).epsilon(0.05));
  CHECK(s.dropped_bytes() == 0);
}

TEST_CASE("tail drop at 1 MiB") {
  LinkShaper s(rate_link(500e3));
  s.push(0, 3 << 20);
  CHECK(s.accepted_bytes() == kDefaultQueueBytes);
  CHECK(s.dropped_bytes() == (3u << 20) - kDefaultQueueBytes);
  CHECK(s.queued_bytes(0) == kDefaultQueueBytes);
  // Drains at 62.5 kB/s.
  CHECK(s.queued_bytes(8000) < kDefaultQueueBytes - 490000);
}

TEST_CASE("causality, order and trace conservation") {
  std::mt19937_64 rng(8);
  for (int variant = 0; variant < 3; ++variant) {
    LinkSpec spec = variant == 0 ? rate_link(300e3, 35) : variant == 1 ? trace_link({3, 3, 9, 14, 22}, 12) : LinkSpec{};
    LinkShaper s(spec);
    double now = 0;
    double last_delivery = 0;
    std::uint64_t bytes_by_100ms = 0;
    std::exponential_distribution<double> gap(0.5);
    std::uniform_int_distribution<std::size_t> size(1, 4000);
    for (int i = 0; i < 2000; ++i) {
      now += gap(rng);
      const auto n = size(rng);
      std::size_t total = 0;
      for (const auto& p : s.push(now, n)) {
        CHECK(p.deliver_at_ms >= now + spec.delay_ms - 1e-9);
        CHECK(p.deliver_at_ms >= last_delivery);
        last_delivery = p.deliver_at_ms;
        total += p.bytes;
        if (p.deliver_at_ms <= 100 + spec.delay_ms) bytes_by_100ms += p.bytes;
      }
      CHECK(total + 0 <= n);
    }
    CHECK(s.accepted_bytes() + s.dropped_bytes() > 0);
    if (variant == 1) {
      // Opportunities in [0, 100]: 5 per 22 ms period (with the boundary repeat).
      std::uint64_t opportunities = 0;
      for (std::uint64_t k = 0; k <= 100 / 22 + 1; ++k) {
        for (auto t : spec.trace_ms) opportunities += (t + k * 22 <= 100);
      }
      CHECK(bytes_by_100ms <= opportunities * spec.mtu);
    }
  }
}

TEST_CASE("profiles and traces") {
  const auto both = builtin_profile("both");
  CHECK(both.uplink.rate_bps == 500e3);
  CHECK(both.downlink.delay_ms == 120);
  CHECK(builtin_profile("baseline").uplink.rate_bps == 2.4e6);
  CHECK_THROWS_AS(builtin_profile("lunar"), std::invalid_argument);
  CHECK(parse_trace("0\n10\n20\n") == std::vector<std::uint64_t>{0, 10, 20});
  CHECK_THROWS_AS(parse_trace("10\n5\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_trace("1.5\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_trace("0\n0\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_trace(""), std::invalid_argument);
  LinkSpec bad = rate_link(-1);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("proxy forwards with delay") {
  EchoServer echo;
  NetworkProfile p;
  p.uplink = rate_link(0, 40);
  p.downlink = rate_link(0, 40);
  Proxy proxy(p, "127.0.0.1", echo.port);
  const int fd = dial(proxy.port());
  std::vector<std::uint8_t> msg(3000);
  std::iota(msg.begin(), msg.end(), std::uint8_t{0});
  const auto t0 = Clock::now();
  ::send(fd, msg.data(), msg.size(), 0);
  std::vector<std::uint8_t> back(msg.size());
  REQUIRE(recv_exact(fd, back.data(), back.size()) == back.size());
  const double rtt = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  CHECK(back == msg);
  CHECK(rtt >= 80.0);
  CHECK(rtt < 400.0);
  ::close(fd);
  CHECK(proxy.stats().connections == 1);
  CHECK(proxy.stats().uplink_bytes == 3000);
}

TEST_CASE("proxy paces to the configured rate") {
  EchoServer echo;
  NetworkProfile p;
  p.uplink = rate_link(500e3);
  p.downlink = rate_link(0);
  Proxy proxy(p, "127.0.0.1", echo.port);
  const int fd = dial(proxy.port());
  const std::size_t total = 100000;  // 1.6 s at 500 kbit/s
  std::thread sender([&] {
    std::vector<std::uint8_t> buf(total, 7);
    ::send(fd, buf.data(), buf.size(), MSG_NOSIGNAL);
  });
  std::vector<std::uint8_t> back(total);
  const auto t0 = Clock::now();
  REQUIRE(recv_exact(fd, back.data(), back.size()) == total);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  sender.join();
  CHECK(total * 8 / secs == doctest::Approx(500e3).epsilon(0.1));
  ::close(fd);
}

TEST_CASE("proxy closes clients when upstream refuses") {
  std::uint16_t dead_port;
  {
    EchoServer tmp;
    dead_port = tmp.port;
    const int fd = dial(tmp.port);  // let the echo thread exit
    ::close(fd);
  }
  Proxy proxy(NetworkProfile{}, "127.0.0.1", dead_port);
  const int fd = dial(proxy.port());
  std::uint8_t b;
  CHECK(::recv(fd, &b, 1, 0) <= 0);
  ::close(fd);
  CHECK(proxy.stats().refused == 1);
}
