#include <pthread.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

#include "common.hpp"
#include "teleopforge/cli/manifest.hpp"
#include "teleopforge/transport/channel.hpp"

#ifndef TELEOPFORGE_VERSION
#define TELEOPFORGE_VERSION "0.0.0"
#endif

namespace teleopforge::tool {

namespace {
std::mutex log_mu;
}

void log_line(const std::string& msg) {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::lock_guard lock(log_mu);
  std::cerr << std::put_time(&tm, "%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << std::setfill(' ')
            << ' ' << msg << std::endl;
}

std::function<void(const std::string&)> logger(bool enabled) {
  if (!enabled) return {};
  return [](const std::string& m) { log_line(m); };
}

void SignalWaiter::block_in_this_thread() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

SignalWaiter::SignalWaiter(std::function<void()> on_signal) {
  thread_ = std::thread([this, cb = std::move(on_signal)] {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    int sig = 0;
    sigwait(&set, &sig);
    if (!done_) cb();
  });
}

SignalWaiter::~SignalWaiter() {
  done_ = true;
  pthread_kill(thread_.native_handle(), SIGTERM);
  thread_.join();
}

double parse_rate(const std::string& text) {
  std::string s = text;
  for (const char* suffix : {"bps", "bit/s", "b/s"}) {
    const std::string suf(suffix);
    if (s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0) {
      s.resize(s.size() - suf.size());
      break;
    }
  }
  double mult = 1.0;
  if (!s.empty()) {
    switch (s.back()) {
      case 'k': case 'K': mult = 1e3; s.pop_back(); break;
      case 'm': case 'M': mult = 1e6; s.pop_back(); break;
      case 'g': case 'G': mult = 1e9; s.pop_back(); break;
      default: break;
    }
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v) || v <= 0.0) {
    throw UsageError("invalid rate '" + text + "' (expected e.g. 500k or 2.4M bits/s)");
  }
  return v * mult;
}

namespace {

std::string command_path(const CLI::App* app) {
  std::string path;
  for (const CLI::App* a = app; a && a->get_parent(); a = a->get_parent()) {
    path = a->get_name() + (path.empty() ? "" : " " + path);
  }
  return path;
}

std::string effective_flags(const CLI::App* leaf) {
  std::ostringstream out;
  std::vector<const CLI::App*> chain;
  for (const CLI::App* a = leaf; a; a = a->get_parent()) chain.insert(chain.begin(), a);
  for (const CLI::App* a : chain) {
    for (const CLI::Option* o : a->get_options()) {
      if (o->get_name() == "--help" || o->get_name().empty()) continue;
      out << o->get_name() << '=';
      if (o->count() > 0) {
        const auto& r = o->results();
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      } else {
        out << o->get_default_str();
      }
      out << '\n';
    }
  }
  return out.str();
}

double now_ms() { return transport::wall_clock_ms(); }

}  // namespace

}  // namespace teleopforge::tool

int main(int argc, char** argv) {
  using namespace teleopforge::tool;
  // Before any thread exists, so every thread inherits the mask.
  SignalWaiter::block_in_this_thread();
  signal(SIGPIPE, SIG_IGN);

  CLI::App app{"teleoperation, network emulation, demonstration storage and learning tools", "teleopforge"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "read flags from a TOML/INI file");
  app.set_version_flag("--version", TELEOPFORGE_VERSION);
  std::string manifest_path;
  app.add_option("--manifest", manifest_path, "where to write the run manifest (default: next to the outputs)");

  RunInfo info;
  std::vector<Command> commands;
  add_net_commands(app, commands, info);
  add_data_commands(app, commands, info);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands) {
    if (c.app->parsed()) chosen = &c;  // nested commands are registered after their parents
  }
  if (!chosen || !chosen->run) {
    std::cerr << "no command given; see --help\n";
    return kUsage;
  }

  teleopforge::cli::RunManifest m;
  m.subcommand = command_path(chosen->app);
  m.argv.assign(argv, argv + argc);
  m.flags = effective_flags(chosen->app);
  if (auto* cfg = app.get_config_ptr(); cfg && cfg->count() > 0) m.config_file = cfg->as<std::string>();
  m.version = TELEOPFORGE_VERSION;
  m.started_at = now_ms();

  int rc = kOk;
  try {
    rc = chosen->run();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    rc = kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    rc = kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    rc = kFailed;
  }

  m.seed = info.seed;
  m.output_dir = info.output_dir;
  m.finished_at = now_ms();
  m.exit_code = rc;
  try {
    std::filesystem::path path = manifest_path;
    if (path.empty()) {
      std::string sub = m.subcommand;
      std::replace(sub.begin(), sub.end(), ' ', '-');
      const std::filesystem::path dir = info.output_dir.empty() ? std::filesystem::path("runs") : std::filesystem::path(info.output_dir);
      path = dir / ("manifest-" + sub + "-" + std::to_string(static_cast<long long>(m.started_at)) + "-" +
                    std::to_string(getpid()) + ".json");
    }
    m.write(path);
  } catch (const std::exception& e) {
    std::cerr << "warning: manifest not written: " << e.what() << '\n';
  }
  return rc;
}
