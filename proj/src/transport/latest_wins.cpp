#include "teleopforge/transport/latest_wins.hpp"

namespace teleopforge::transport {

bool LatestCommandCell::offer(const PoseCommand& cmd, double received_at_ms) {
  std::lock_guard lock(mu_);
  if (highest_seq_ && cmd.seq <= *highest_seq_) {
    ++dropped_;
    return false;
  }
  highest_seq_ = cmd.seq;
  slot_ = Taken{cmd, received_at_ms};
  ++accepted_;
  return true;
}

std::optional<LatestCommandCell::Taken> LatestCommandCell::take() {
  std::lock_guard lock(mu_);
  std::optional<Taken> out;
  out.swap(slot_);
  return out;
}

std::uint64_t LatestCommandCell::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

std::uint64_t LatestCommandCell::accepted() const {
  std::lock_guard lock(mu_);
  return accepted_;
}

}  // namespace teleopforge::transport
