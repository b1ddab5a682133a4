#pragma once

#include <cstdint>
#include <stdexcept>

#include "teleopforge/demostore/demo.hpp"
#include "teleopforge/learn/env.hpp"
#include "teleopforge/sim/simulator.hpp"

namespace teleopforge::learn {

struct DemoGenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DemonstratorOptions {
  double noise = 0.0;  // std of the Gaussian jitter on each waypoint, m
  std::uint64_t seed = 0;
  int grasp_retries = 3;
  EnvOptions env{};
};

/// Waypoint policy run through Env: above the object, down, close, then lift
/// (lifting) or carry and release at the goal (picking, assembly). The start
/// state is a randomized reset drawn from the same seed. Throws
/// DemoGenerationError when a waypoint of the layout is out of reach.
demostore::EpisodeRecord scripted_demonstrator(const sim::Simulator& sim, const DemonstratorOptions& options);

}  // namespace teleopforge::learn
