#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include "CLI11.hpp"

namespace teleopforge::tool {

/// Exit codes: 0 ok, 1 a check failed, 2 usage error.
inline constexpr int kOk = 0;
inline constexpr int kFailed = 1;
inline constexpr int kUsage = 2;

/// Bad flag values discovered after parsing; reported as usage errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filled in by a subcommand's setup so the manifest can record it.
struct RunInfo {
  std::optional<std::uint64_t> seed;
  std::string output_dir;
};

/// A subcommand: registered on the parent app, runs after a successful parse.
struct Command {
  CLI::App* app = nullptr;
  std::function<int()> run;
  RunInfo* info = nullptr;
};

void log_line(const std::string& msg);
std::function<void(const std::string&)> logger(bool enabled);

/// SIGINT/SIGTERM are blocked process-wide at startup; this waits for one on
/// a helper thread and calls `on_signal`.
class SignalWaiter {
 public:
  static void block_in_this_thread();
  explicit SignalWaiter(std::function<void()> on_signal);
  ~SignalWaiter();
  SignalWaiter(const SignalWaiter&) = delete;
  SignalWaiter& operator=(const SignalWaiter&) = delete;

 private:
  std::thread thread_;
  bool done_ = false;
};

/// "500000", "500k", "2.4M", "1G"; optional trailing "bps". Throws UsageError.
double parse_rate(const std::string& text);

void add_net_commands(CLI::App& app, std::vector<Command>& commands, RunInfo& info);
void add_data_commands(CLI::App& app, std::vector<Command>& commands, RunInfo& info);

}  // namespace teleopforge::tool
