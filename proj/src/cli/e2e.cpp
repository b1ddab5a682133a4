#include "teleopforge/cli/e2e.hpp"

#include <memory>
#include <mutex>
#include <vector>

#include "json.hpp"
#include "teleopforge/coord/coordinator.hpp"
#include "teleopforge/demostore/demo.hpp"
#include "teleopforge/netem/proxy.hpp"
#include "teleopforge/transport/channel.hpp"

namespace teleopforge::cli {

namespace {

std::size_t successful_demos(const std::filesystem::path& dir, const std::string& task) {
  if (!std::filesystem::exists(dir)) return 0;
  return demostore::build_index(dir).successful(task).size();
}

nlohmann::ordered_json delay_json(const teleop::DelayStats& d) {
  return {{"n", d.n}, {"mean_ms", d.mean}, {"p50_ms", d.p50}, {"p95_ms", d.p95}, {"max_ms", d.max}};
}

}  // namespace

E2eReport run_e2e(const E2eOptions& options) {
  E2eReport report;
  report.profile = options.profile.name;
  report.demos_before = successful_demos(options.storage, options.task);

  coord::CoordinatorOptions co;
  co.storage = options.storage;
  co.log = options.log;
  if (options.teleop_executable.empty()) {
    co.spawner = std::make_shared<coord::InProcessSpawner>(false, options.log);
  } else {
    co.spawner = std::make_shared<coord::ProcessSpawner>(options.teleop_executable, std::vector<std::string>{});
  }
  coord::Coordinator coordinator(co);
  netem::Proxy coord_proxy(options.profile, "127.0.0.1", coordinator.port());

  std::mutex mu;
  std::vector<std::unique_ptr<netem::Proxy>> session_proxies;
  teleop::ClientOptions client;
  client.coordinator = "127.0.0.1:" + std::to_string(coord_proxy.port());
  client.task = options.task;
  client.timeout = options.timeout;
  client.log = options.log;
  client.resolve = [&](const std::string& endpoint) {
    const auto [host, port] = transport::parse_endpoint(endpoint);
    auto p = std::make_unique<netem::Proxy>(options.profile, host, port);
    const std::string local = "127.0.0.1:" + std::to_string(p->port());
    std::lock_guard lock(mu);
    session_proxies.push_back(std::move(p));
    return local;
  };

  report.client = teleop::run_scripted_client(client);
  report.joins_served = coordinator.joins_served();
  coordinator.stop();

  auto add = [&](const netem::Proxy& p) {
    const auto s = p.stats();
    report.proxied_connections += s.connections;
    report.uplink_bytes += s.uplink_bytes;
    report.downlink_bytes += s.downlink_bytes;
  };
  add(coord_proxy);
  {
    std::lock_guard lock(mu);
    for (const auto& p : session_proxies) add(*p);
  }
  report.demos_after = successful_demos(options.storage, options.task);

  if (!report.client.success) {
    report.failure = "scripted client did not finish: " + report.client.error;
  } else if (report.demos_after <= report.demos_before) {
    report.failure = "no new successful demo was stored";
  } else if (session_proxies.empty()) {
    report.failure = "session traffic bypassed the emulated link";
  }
  report.success = report.failure.empty();
  return report;
}

std::string to_json(const E2eReport& r) {
  nlohmann::ordered_json j;
  j["profile"] = r.profile;
  j["success"] = r.success;
  j["failure"] = r.failure;
  j["completion_time_s"] = r.client.completion_time;
  j["wall_time_s"] = r.client.wall_time;
  j["uplink_delay"] = delay_json(r.client.uplink);
  j["downlink_delay"] = delay_json(r.client.downlink);
  j["commands_sent"] = r.client.commands_sent;
  j["frames_received"] = r.client.frames_received;
  j["frames_missed"] = r.client.frames_missed;
  j["haptic_events"] = r.client.haptic_events;
  j["demo_path"] = r.client.demo_path;
  j["demos_before"] = r.demos_before;
  j["demos_after"] = r.demos_after;
  j["proxied_connections"] = r.proxied_connections;
  j["uplink_bytes"] = r.uplink_bytes;
  j["downlink_bytes"] = r.downlink_bytes;
  j["joins_served"] = r.joins_served;
  return j.dump(2);
}

}  // namespace teleopforge::cli
