#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace teleopforge::netem {

inline constexpr std::size_t kDefaultMtu = 1500;
inline constexpr std::size_t kDefaultQueueBytes = 1 << 20;

/// One direction of a link. Exactly one of: unlimited (rate 0, no trace),
/// constant rate, or a delivery-opportunity trace.
struct LinkSpec {
  double rate_bps = 0.0;              // 0 = unlimited
  std::vector<std::uint64_t> trace_ms;  // looped with period = last timestamp
  std::size_t mtu = kDefaultMtu;
  double delay_ms = 0.0;
  std::size_t queue_bytes = kDefaultQueueBytes;

  bool uses_trace() const { return !trace_ms.empty(); }
  /// Throws std::invalid_argument.
  void validate() const;
  std::string describe() const;
};

struct NetworkProfile {
  std::string name;
  LinkSpec uplink;    // client → server
  LinkSpec downlink;  // server → client
};

/// baseline, low-capacity, high-delay, both. Throws std::invalid_argument.
NetworkProfile builtin_profile(const std::string& name);
std::vector<std::string> builtin_profile_names();

/// One integer millisecond per line, nondecreasing, last value > 0.
std::vector<std::uint64_t> parse_trace(const std::string& text);
std::vector<std::uint64_t> load_trace(const std::string& path);

/// FIFO link model in virtual milliseconds. Departure times are computed
/// when bytes arrive, which is exact because later arrivals queue behind.
class LinkShaper {
 public:
  explicit LinkShaper(LinkSpec spec);

  struct Piece {
    double deliver_at_ms = 0.0;
    std::size_t bytes = 0;
  };

  /// Bytes arriving at `now_ms` (nondecreasing across calls). Returns the
  /// delivery schedule of the accepted prefix; bytes that would overflow the
  /// queue are tail-dropped and counted.
  std::vector<Piece> push(double now_ms, std::size_t bytes);

  /// Bytes accepted but not yet departed from the bottleneck at `now_ms`.
  std::size_t queued_bytes(double now_ms);

  std::uint64_t dropped_bytes() const { return dropped_; }
  std::uint64_t accepted_bytes() const { return accepted_; }
  const LinkSpec& spec() const { return spec_; }

 private:
  double opportunity_time(std::uint64_t index) const;

  LinkSpec spec_;
  double link_free_ms_ = 0.0;          // constant rate
  std::uint64_t opportunity_ = 0;      // trace: current opportunity index
  std::size_t budget_left_ = 0;        // trace: bytes left in it
  struct Backlog {
    double depart_ms;
    std::size_t bytes;
  };
  std::deque<Backlog> backlog_;
  std::size_t backlog_bytes_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t accepted_ = 0;
};

}  // namespace teleopforge::netem
