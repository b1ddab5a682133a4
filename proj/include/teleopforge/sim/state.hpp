#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "teleopforge/sim/arm.hpp"
#include "teleopforge/sim/pose.hpp"

namespace teleopforge::sim {

struct ObjectState {
  int id = 0;
  Pose pose;
  bool attached = false;

  bool operator==(const ObjectState&) const = default;
};

/// Complete simulator snapshot. Restoring it and stepping is indistinguishable
/// from never having saved it.
struct SimState {
  ArmState arm;
  std::vector<ObjectState> objects;
  std::uint64_t tick = 0;
  bool task_done = false;

  bool operator==(const SimState&) const = default;

  /// Index of the attached object, or -1.
  int attached_index() const;
};

/// Canonical JSON: fixed field order, %.17g floats.
std::string to_json(const SimState& state);
SimState state_from_json(std::string_view text);

}  // namespace teleopforge::sim
