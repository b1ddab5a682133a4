#pragma once

#include <chrono>
#include <cstdint>
#include <thread>

namespace teleopforge::teleop {

/// Fixed-rate ticks on the monotonic clock. Tick k is due at start + k·period,
/// so lateness in one tick does not push back the ones after it.
class TickScheduler {
 public:
  using Clock = std::chrono::steady_clock;

  explicit TickScheduler(double hz, bool free_running = false)
      : period_(std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / hz))),
        free_running_(free_running),
        start_(Clock::now()) {}

  /// Blocks until the next tick is due and returns its index.
  std::uint64_t wait_next() {
    const auto k = next_++;
    if (!free_running_) std::this_thread::sleep_until(start_ + period_ * static_cast<std::int64_t>(k));
    return k;
  }

  Clock::duration period() const { return period_; }
  std::uint64_t ticks() const { return next_; }

 private:
  Clock::duration period_;
  bool free_running_;
  Clock::time_point start_;
  std::uint64_t next_ = 0;
};

}  // namespace teleopforge::teleop
