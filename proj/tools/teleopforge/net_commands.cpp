#include <atomic>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>

#include "common.hpp"
#include "json.hpp"
#include "teleopforge/cli/e2e.hpp"
#include "teleopforge/coord/coordinator.hpp"
#include "teleopforge/netem/proxy.hpp"
#include "teleopforge/sim/task.hpp"
#include "teleopforge/teleop/client.hpp"
#include "teleopforge/teleop/server.hpp"
#include "teleopforge/transport/channel.hpp"

namespace teleopforge::tool {

namespace {

std::vector<std::string> task_names() { return {"lifting", "picking", "assembly"}; }

std::vector<std::string> profile_names() {
  auto names = netem::builtin_profile_names();
  names.push_back("none");
  return names;
}

void announce(std::uint16_t port) { std::cout << "LISTENING " << port << std::endl; }

/// Blocks until SIGINT/SIGTERM.
void wait_for_signal() {
  std::mutex mu;
  std::condition_variable cv;
  bool fired = false;
  SignalWaiter waiter([&] {
    std::lock_guard lock(mu);
    fired = true;
    cv.notify_all();
  });
  std::unique_lock lock(mu);
  cv.wait(lock, [&] { return fired; });
}

struct CoordinatorArgs {
  std::uint16_t port = 7000;
  std::string bind = "127.0.0.1";
  std::string advertise;
  std::size_t max_sessions = 4;
  std::string storage = "demos";
  bool single_process = false;
  bool headless_sessions = false;
  double heartbeat_timeout_ms = 15000.0;
};

struct TeleopArgs {
  std::uint16_t port = 0;
  std::string bind = "127.0.0.1";
  std::string task = "lifting";
  std::string token;
  std::string user = "anonymous";
  std::string session_id;
  std::string storage = "demos";
  std::string coordinator;
  std::string condition;
  bool headless = false;
  bool compress = false;
  std::uint64_t seed = 0;
  double accept_timeout_s = 60.0;
};

struct NetemArgs {
  std::uint16_t listen = 0;
  std::string upstream;
  std::string bind = "127.0.0.1";
  std::string profile;
  std::string up_rate, down_rate, up_trace, down_trace;
  double delay_ms = -1.0;
  std::size_t mtu = netem::kDefaultMtu;
};

struct ClientArgs {
  bool scripted = false;
  std::string coordinator = "127.0.0.1:7000";
  std::string user = "scripted";
  std::string task = "lifting";
  double hz = 60.0;
  double speed = 0.15;
  double timeout_s = 90.0;
  bool verbose = false;
};

struct E2eArgs {
  std::string profile = "baseline";
  std::string task = "lifting";
  std::string storage = "demos";
  bool single_process = false;
  double timeout_s = 90.0;
  bool verbose = false;
  std::string report;
};

netem::NetworkProfile build_profile(const NetemArgs& a) {
  netem::NetworkProfile p;
  if (!a.profile.empty()) {
    p = a.profile == "none" ? netem::NetworkProfile{"none", {}, {}} : netem::builtin_profile(a.profile);
  } else {
    p.name = "custom";
  }
  auto link = [&](netem::LinkSpec& l, const std::string& rate, const std::string& trace) {
    if (!rate.empty() && !trace.empty()) throw UsageError("give a rate or a trace for a direction, not both");
    if (!rate.empty()) {
      l.rate_bps = parse_rate(rate);
      l.trace_ms.clear();
    }
    if (!trace.empty()) {
      l.trace_ms = netem::load_trace(trace);
      l.rate_bps = 0.0;
    }
    l.mtu = a.mtu;
    if (a.delay_ms >= 0.0) l.delay_ms = a.delay_ms;
    l.validate();
  };
  link(p.uplink, a.up_rate, a.up_trace);
  link(p.downlink, a.down_rate, a.down_trace);
  if (a.profile.empty() && (!a.up_rate.empty() || !a.down_rate.empty() || !a.up_trace.empty() ||
                            !a.down_trace.empty() || a.delay_ms > 0.0)) {
    p.name = "custom";
  }
  return p;
}

}  // namespace

void add_net_commands(CLI::App& app, std::vector<Command>& commands, RunInfo& info) {
  // coordinator
  {
    auto a = std::make_shared<CoordinatorArgs>();
    auto* sub = app.add_subcommand("coordinator", "run the coordination server (JOIN, heartbeats, reaping)");
    sub->add_option("--port", a->port, "control port (0 picks a free one)");
    sub->add_option("--bind", a->bind, "address to listen on");
    sub->add_option("--advertise-host", a->advertise, "host put into SESSION endpoints (default: --bind)");
    sub->add_option("--max-sessions", a->max_sessions, "concurrent session limit")->check(CLI::PositiveNumber);
    sub->add_option("--storage", a->storage, "demonstration directory")->envname("TELEOPFORGE_STORAGE");
    sub->add_flag("--single-process", a->single_process, "run teleop servers as threads instead of processes");
    sub->add_flag("--headless-sessions", a->headless_sessions, "spawned sessions run their loop as fast as possible");
    sub->add_option("--heartbeat-timeout-ms", a->heartbeat_timeout_ms, "reap sessions silent this long")
        ->check(CLI::PositiveNumber);
    commands.push_back({sub, [a, &info] {
                          info.output_dir = a->storage;
                          coord::CoordinatorOptions o;
                          o.port = a->port;
                          o.bind = a->bind;
                          o.advertise_host = a->advertise.empty() ? a->bind : a->advertise;
                          if (o.advertise_host == "0.0.0.0") o.advertise_host = "127.0.0.1";
                          o.max_sessions = a->max_sessions;
                          o.storage = a->storage;
                          o.heartbeat_timeout_ms = a->heartbeat_timeout_ms;
                          o.log = logger(true);
                          if (a->single_process) {
                            o.spawner = std::make_shared<coord::InProcessSpawner>(a->headless_sessions, o.log);
                          } else {
                            std::vector<std::string> extra;
                            if (a->headless_sessions) extra.push_back("--headless");
                            o.spawner = std::make_shared<coord::ProcessSpawner>(coord::self_executable(), extra);
                          }
                          coord::Coordinator c(o);
                          announce(c.port());
                          SignalWaiter waiter([&c] { c.stop(); });
                          c.wait();
                          log_line("coordinator stopped: " + std::to_string(c.joins_served()) + " joins served, " +
                                   std::to_string(c.joins_refused()) + " refused");
                          return kOk;
                        }, &info});
  }

  // teleop
  {
    auto a = std::make_shared<TeleopArgs>();
    auto* sub = app.add_subcommand("teleop", "run one teleoperation server (normally started by the coordinator)");
    sub->add_option("--port", a->port, "session port (0 picks a free one)");
    sub->add_option("--bind", a->bind, "address to listen on");
    sub->add_option("--task", a->task, "task to load")->check(CLI::IsMember(task_names()));
    sub->add_option("--token", a->token, "bearer token the client must present");
    sub->add_option("--user", a->user, "user recorded with the demos");
    sub->add_option("--session-id", a->session_id, "session id for heartbeats");
    sub->add_option("--storage", a->storage, "demonstration directory")->envname("TELEOPFORGE_STORAGE");
    sub->add_option("--coordinator", a->coordinator, "host:port to send heartbeats to");
    sub->add_option("--condition", a->condition, "condition label recorded with the demos");
    sub->add_option("--seed", a->seed, "seed for randomized scene resets");
    sub->add_option("--accept-timeout-s", a->accept_timeout_s, "give up if no client connects in time")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--headless", a->headless, "run the control loop as fast as possible instead of at 50 Hz");
    sub->add_flag("--compress", a->compress, "gzip stored demos");
    commands.push_back({sub, [a, &info] {
                          info.output_dir = a->storage;
                          info.seed = a->seed;
                          teleop::ServerOptions o;
                          o.session.task = sim::builtin_task(sim::parse_task_kind(a->task));
                          o.session.user = a->user;
                          o.session.condition = a->condition;
                          o.session.storage = a->storage;
                          o.session.compress = a->compress;
                          o.session.seed = a->seed;
                          o.port = a->port;
                          o.bind = a->bind;
                          o.token = a->token;
                          o.session_id = a->session_id;
                          o.coordinator = a->coordinator;
                          o.headless = a->headless;
                          o.accept_timeout = std::chrono::milliseconds(static_cast<long>(a->accept_timeout_s * 1000));
                          o.log = logger(true);
                          teleop::TeleopServer server(std::move(o));
                          announce(server.port());
                          SignalWaiter waiter([&server] { server.stop(); });
                          const auto r = server.run();
                          log_line("session ended (" + r.end_reason + "): " + std::to_string(r.successes) +
                                   " demos stored, " + std::to_string(r.ticks) + " ticks");
                          return kOk;
                        }, &info});
  }

  // netem
  {
    auto a = std::make_shared<NetemArgs>();
    auto* sub = app.add_subcommand("netem", "shape a TCP link: rate or trace per direction plus one-way delay");
    sub->add_option("--listen", a->listen, "local port (0 picks a free one)");
    sub->add_option("--upstream", a->upstream, "host:port to forward to")->required();
    sub->add_option("--bind", a->bind, "address to listen on");
    sub->add_option("--profile", a->profile, "named profile")->check(CLI::IsMember(profile_names()));
    sub->add_option("--up-rate", a->up_rate, "uplink rate, bits/s (k/M suffixes)");
    sub->add_option("--down-rate", a->down_rate, "downlink rate, bits/s (k/M suffixes)");
    sub->add_option("--up-trace", a->up_trace, "uplink delivery-opportunity trace file (ms per line)");
    sub->add_option("--down-trace", a->down_trace, "downlink delivery-opportunity trace file (ms per line)");
    sub->add_option("--delay-ms", a->delay_ms, "one-way delay in each direction")->check(CLI::NonNegativeNumber);
    sub->add_option("--mtu", a->mtu, "bytes per trace opportunity")->check(CLI::PositiveNumber);
    commands.push_back({sub, [a] {
                          const auto profile = build_profile(*a);
                          const auto [host, port] = transport::parse_endpoint(a->upstream);
                          netem::Proxy proxy(profile, host, port, a->listen, a->bind);
                          log_line("netem " + profile.name + ": up " + profile.uplink.describe() + ", down " +
                                   profile.downlink.describe());
                          announce(proxy.port());
                          wait_for_signal();
                          proxy.stop();
                          const auto s = proxy.stats();
                          log_line("netem stopped: " + std::to_string(s.connections) + " connections, " +
                                   std::to_string(s.uplink_bytes) + " B up, " + std::to_string(s.downlink_bytes) +
                                   " B down");
                          return kOk;
                        }, nullptr});
  }

  // client
  {
    auto a = std::make_shared<ClientArgs>();
    auto* sub = app.add_subcommand("client", "join through the coordinator and drive a session");
    sub->add_flag("--scripted", a->scripted, "run the built-in waypoint script (the only mode)");
    sub->add_option("--coordinator", a->coordinator, "coordinator host:port");
    sub->add_option("--user", a->user, "user name sent with JOIN");
    sub->add_option("--task", a->task, "task to join")->check(CLI::IsMember({"lifting"}));
    sub->add_option("--hz", a->hz, "command rate")->check(CLI::Range(1.0, 1000.0));
    sub->add_option("--speed", a->speed, "controller speed, m/s")->check(CLI::PositiveNumber);
    sub->add_option("--timeout-s", a->timeout_s, "give up after this long")->check(CLI::PositiveNumber);
    sub->add_flag("-v,--verbose", a->verbose, "log progress to stderr");
    commands.push_back({sub, [a] {
                          if (!a->scripted) throw UsageError("client needs --scripted");
                          teleop::ClientOptions o;
                          o.coordinator = a->coordinator;
                          o.user = a->user;
                          o.task = a->task;
                          o.command_hz = a->hz;
                          o.speed = a->speed;
                          o.timeout = std::chrono::milliseconds(static_cast<long>(a->timeout_s * 1000));
                          o.log = logger(a->verbose);
                          const auto r = teleop::run_scripted_client(o);
                          nlohmann::ordered_json j;
                          j["success"] = r.success;
                          j["error"] = r.error;
                          j["session_id"] = r.session_id;
                          j["endpoint"] = r.endpoint;
                          j["completion_time_s"] = r.completion_time;
                          j["wall_time_s"] = r.wall_time;
                          j["uplink_mean_ms"] = r.uplink.mean;
                          j["downlink_mean_ms"] = r.downlink.mean;
                          j["commands_sent"] = r.commands_sent;
                          j["frames_received"] = r.frames_received;
                          j["demo_path"] = r.demo_path;
                          std::cout << j.dump(2) << std::endl;
                          return r.success ? kOk : kFailed;
                        }, nullptr});
  }

  // e2e
  {
    auto a = std::make_shared<E2eArgs>();
    auto* sub = app.add_subcommand("e2e", "coordinator + netem + scripted client; asserts a stored successful demo");
    sub->add_option("--profile", a->profile, "network profile")->check(CLI::IsMember(profile_names()));
    sub->add_option("--task", a->task, "task")->check(CLI::IsMember({"lifting"}));
    sub->add_option("--storage", a->storage, "demonstration directory")->envname("TELEOPFORGE_STORAGE");
    sub->add_flag("--single-process", a->single_process, "teleop servers as threads");
    sub->add_option("--timeout-s", a->timeout_s, "client timeout")->check(CLI::PositiveNumber);
    sub->add_option("--report", a->report, "also write the JSON report here");
    sub->add_flag("-v,--verbose", a->verbose, "log progress to stderr");
    commands.push_back({sub, [a, &info] {
                          info.output_dir = a->storage;
                          cli::E2eOptions o;
                          o.profile = a->profile == "none" ? netem::NetworkProfile{"none", {}, {}}
                                                           : netem::builtin_profile(a->profile);
                          o.task = a->task;
                          o.storage = a->storage;
                          if (!a->single_process) o.teleop_executable = coord::self_executable();
                          o.timeout = std::chrono::milliseconds(static_cast<long>(a->timeout_s * 1000));
                          o.log = logger(a->verbose);
                          const auto r = cli::run_e2e(o);
                          const auto text = cli::to_json(r);
                          std::cout << text << std::endl;
                          if (!a->report.empty()) {
                            std::ofstream f(a->report);
                            f << text << '\n';
                          }
                          if (!r.success) std::cerr << "e2e failed: " << r.failure << '\n';
                          return r.success ? kOk : kFailed;
                        }, &info});
  }
}

}  // namespace teleopforge::tool
