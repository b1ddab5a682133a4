#include "teleopforge/teleop/server.hpp"

#include <condition_variable>
#include <mutex>
#include <thread>

#include "teleopforge/teleop/scheduler.hpp"
#include "teleopforge/transport/latest_wins.hpp"

namespace teleopforge::teleop {

using namespace std::chrono_literals;
using transport::wall_clock_ms;

TeleopServer::TeleopServer(ServerOptions options)
    : options_(std::move(options)), listener_(options_.port, options_.bind) {}

TeleopServer::~TeleopServer() { stop(); }

void TeleopServer::log(const std::string& msg) const {
  if (options_.log) options_.log(msg);
}

namespace {

std::unique_ptr<transport::Channel> authenticate(transport::Listener& listener, const ServerOptions& opt,
                                                 const std::atomic<bool>& stop,
                                                 const std::function<void(const std::string&)>& log) {
  const auto deadline = std::chrono::steady_clock::now() + opt.accept_timeout;
  while (!stop && std::chrono::steady_clock::now() < deadline) {
    auto ch = listener.accept(200ms);
    if (!ch) continue;
    try {
      const auto first = ch->receive(5s);
      const auto* hello = first ? std::get_if<transport::Hello>(&*first) : nullptr;
      if (!hello || (!opt.token.empty() && hello->text != opt.token)) {
        ch->send(transport::ErrorMessage{transport::ErrorCode::auth_failed, "missing or invalid session token"});
        ch->close();
        log("rejected unauthenticated connection");
        continue;
      }
    } catch (const transport::WireError& e) {
      ch->send(transport::ErrorMessage{transport::ErrorCode::protocol, e.what()});
      ch->close();
      continue;
    }
    ch->send(transport::Hello{opt.session_id});
    return ch;
  }
  return nullptr;
}

}  // namespace

ServerReport TeleopServer::run() {
  ServerReport report;
  auto logger = [this](const std::string& m) { log(m); };
  auto channel = authenticate(listener_, options_, stop_, logger);
  listener_.close();
  if (!channel) {
    report.end_reason = stop_ ? "stopped" : "no client connected before timeout";
    return report;
  }
  report.client_connected = true;
  channel->set_outbound_limit(options_.outbound_limit);
  log("client connected");

  SessionEngine engine(options_.session);
  transport::LatestCommandCell cell;
  std::atomic<bool> channel_lost{false};
  std::atomic<bool> reset_requested{false};
  std::atomic<bool> done{false};
  std::atomic<double> last_rx_ms{wall_clock_ms()};

  std::thread reader([&] {
    while (!done) {
      std::optional<transport::Message> m;
      try {
        m = channel->receive(100ms);
      } catch (const transport::WireError& e) {
        channel->send(transport::ErrorMessage{transport::ErrorCode::protocol, e.what()});
        continue;
      }
      if (!m) {
        if (!channel->is_open()) {
          channel_lost = true;
          return;
        }
        continue;
      }
      const double now = wall_clock_ms();
      last_rx_ms = now;
      if (const auto* c = std::get_if<transport::PoseCommand>(&*m)) {
        cell.offer(*c, now);
      } else if (std::holds_alternative<transport::Reset>(*m)) {
        reset_requested = true;
      } else if (std::holds_alternative<transport::Heartbeat>(*m)) {
        // liveness only
      } else {
        channel->send(transport::ErrorMessage{transport::ErrorCode::protocol, "unexpected message type"});
      }
    }
  });

  std::mutex hb_mu;
  std::condition_variable hb_cv;
  std::thread heartbeat;
  if (!options_.coordinator.empty()) {
    heartbeat = std::thread([&] {
      std::unique_ptr<transport::Channel> coord;
      try {
        const auto [host, port] = transport::parse_endpoint(options_.coordinator);
        coord = transport::Channel::connect(host, port, 5s);
      } catch (const std::exception& e) {
        log(std::string("heartbeat channel unavailable: ") + e.what());
        return;
      }
      std::unique_lock lock(hb_mu);
      while (!done) {
        // Only vouch for the session while the user is actually talking to us.
        const bool active = wall_clock_ms() - last_rx_ms.load() <
                            std::chrono::duration<double, std::milli>(kHeartbeatTimeout).count();
        if (active) coord->send(transport::Heartbeat{options_.session_id});
        hb_cv.wait_for(lock, kHeartbeatPeriod, [&] { return done.load(); });
      }
      coord->close();
    });
  }

  TickScheduler scheduler(kControlHz, options_.headless);
  while (!stop_ && !channel_lost) {
    scheduler.wait_next();
    if (reset_requested.exchange(false)) engine.reset();
    const double now = wall_clock_ms();
    const auto out = engine.tick(cell.take(), now);
    for (const auto& e : out.events) channel->send(transport::HapticEvent{e.kind, e.object_id, e.tick});
    if (out.demo_done) {
      channel->send(*out.demo_done);
      log("demonstration stored: " + out.demo_done->path);
    }
    if (out.frame_due) {
      channel->send(engine.frame(now));
      ++report.frames_sent;
    }
  }
  if (channel_lost) {
    engine.abort();
    report.end_reason = "client disconnected";
  } else {
    report.end_reason = "stopped";
  }
  {
    std::lock_guard lock(hb_mu);
    done = true;
  }
  hb_cv.notify_all();
  reader.join();
  if (heartbeat.joinable()) heartbeat.join();
  report.outbound_dropped = channel->outbound_dropped();
  channel->close();

  report.ticks = engine.ticks();
  report.successes = engine.successes();
  report.failures = engine.failures();
  report.commands_accepted = cell.accepted();
  report.commands_dropped = cell.dropped();
  report.demos = engine.stored_paths();
  log("session ended: " + report.end_reason);
  return report;
}

}  // namespace teleopforge::teleop
