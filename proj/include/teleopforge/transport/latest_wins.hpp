#pragma once

#include <cstdint>
#include <mutex>
#include <optional>

#include "teleopforge/transport/messages.hpp"

namespace teleopforge::transport {

/// Single-slot mailbox between channel I/O and the control loop. Only the
/// highest-seq command survives until the next take(); anything at or below
/// the highest seq already seen is dropped and counted.
class LatestCommandCell {
 public:
  /// Returns false if the command was stale and dropped.
  bool offer(const PoseCommand& cmd, double received_at_ms = 0.0);

  struct Taken {
    PoseCommand command;
    double received_at_ms = 0.0;
  };
  /// Newest command not yet consumed.
  std::optional<Taken> take();

  std::uint64_t dropped() const;
  std::uint64_t accepted() const;

 private:
  mutable std::mutex mu_;
  std::optional<Taken> slot_;
  std::optional<std::uint64_t> highest_seq_;
  std::uint64_t dropped_ = 0;
  std::uint64_t accepted_ = 0;
};

}  // namespace teleopforge::transport
