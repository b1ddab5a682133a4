#include "teleopforge/coord/coordinator.hpp"

#include "teleopforge/sim/task.hpp"

namespace teleopforge::coord {

using namespace std::chrono_literals;
using transport::ErrorCode;
using transport::ErrorMessage;
using transport::wall_clock_ms;

Coordinator::Coordinator(CoordinatorOptions options)
    : options_(std::move(options)),
      table_(options_.max_sessions, options_.heartbeat_timeout_ms),
      listener_(options_.port, options_.bind),
      port_(listener_.port()) {
  if (!options_.spawner) options_.spawner = std::make_shared<InProcessSpawner>();
  acceptor_ = std::thread([this] { accept_loop(); });
  reaper_ = std::thread([this] { reap_loop(); });
}

Coordinator::~Coordinator() { stop(); }

std::string Coordinator::endpoint() const { return options_.advertise_host + ":" + std::to_string(port_); }

void Coordinator::log(const std::string& m) const {
  if (options_.log) options_.log(m);
}

void Coordinator::stop() {
  if (stopping_.exchange(true)) return;
  wait_cv_.notify_all();
  if (acceptor_.joinable()) acceptor_.join();
  if (reaper_.joinable()) reaper_.join();
  listener_.close();
  {
    std::lock_guard lock(workers_mu_);
    for (auto& w : workers_) w.thread.join();
    workers_.clear();
  }
  std::map<std::string, std::unique_ptr<SessionHandle>> handles;
  {
    std::lock_guard lock(handles_mu_);
    handles.swap(handles_);
  }
  for (auto& [id, h] : handles) {
    h->terminate();
    table_.close(id);
  }
}

void Coordinator::wait() {
  std::unique_lock lock(wait_mu_);
  wait_cv_.wait(lock, [&] { return stopping_.load(); });
}

bool Coordinator::kill(const std::string& session_id) {
  std::lock_guard lock(handles_mu_);
  auto it = handles_.find(session_id);
  if (it == handles_.end()) return false;
  it->second->terminate();
  return true;
}

void Coordinator::accept_loop() {
  while (!stopping_) {
    auto ch = listener_.accept(200ms);
    std::lock_guard lock(workers_mu_);
    for (auto it = workers_.begin(); it != workers_.end();) {
      if (*it->finished) {
        it->thread.join();
        it = workers_.erase(it);
      } else {
        ++it;
      }
    }
    if (!ch) continue;
    auto finished = std::make_shared<std::atomic<bool>>(false);
    std::shared_ptr<transport::Channel> shared(std::move(ch));
    workers_.push_back({std::thread([this, finished, shared] {
                          try {
                            handle(*shared);
                          } catch (const std::exception& e) {
                            log(std::string("control connection failed: ") + e.what());
                          }
                          shared->close();
                          *finished = true;
                        }),
                        finished});
  }
}

void Coordinator::handle(transport::Channel& ch) {
  while (!stopping_) {
    std::optional<transport::Message> m;
    try {
      m = ch.receive(200ms);
    } catch (const transport::WireError& e) {
      ch.send(ErrorMessage{ErrorCode::protocol, e.what()});
      return;
    }
    if (!m) {
      if (!ch.is_open()) return;
      continue;
    }
    if (const auto* join = std::get_if<transport::JoinRequest>(&*m)) {
      on_join(ch, *join);
    } else if (const auto* hb = std::get_if<transport::Heartbeat>(&*m)) {
      if (!table_.heartbeat(hb->session_id, wall_clock_ms())) {
        ch.send(ErrorMessage{ErrorCode::invalid_argument, "unknown session"});
      }
    } else {
      ch.send(ErrorMessage{ErrorCode::protocol, "expected JOIN or HEARTBEAT"});
    }
  }
}

void Coordinator::on_join(transport::Channel& ch, const transport::JoinRequest& req) {
  if (!sim::try_parse_task_kind(req.task)) {
    ++refused_;
    ch.send(ErrorMessage{ErrorCode::invalid_argument, "unknown task '" + req.task + "'"});
    return;
  }
  if (req.user.empty()) {
    ++refused_;
    ch.send(ErrorMessage{ErrorCode::invalid_argument, "user must not be empty"});
    return;
  }
  auto slot = table_.reserve(req.user, req.task, wall_clock_ms());
  if (!slot) {
    ++refused_;
    ch.send(ErrorMessage{ErrorCode::busy, "at capacity (" + std::to_string(table_.capacity()) + " sessions)"});
    return;
  }
  SpawnRequest sr;
  sr.session_id = slot->session_id;
  sr.user = req.user;
  sr.task = req.task;
  sr.token = slot->token;
  sr.storage = options_.storage;
  sr.coordinator = "127.0.0.1:" + std::to_string(port_);
  std::unique_ptr<SessionHandle> handle;
  try {
    handle = options_.spawner->spawn(sr);
  } catch (const std::exception& e) {
    table_.close(slot->session_id);
    ++refused_;
    log(std::string("spawn failed: ") + e.what());
    ch.send(ErrorMessage{ErrorCode::internal, std::string("could not start teleop server: ") + e.what()});
    return;
  }
  const auto ep = options_.advertise_host + ":" + std::to_string(handle->port());
  table_.activate(slot->session_id, ep);
  {
    std::lock_guard lock(handles_mu_);
    handles_[slot->session_id] = std::move(handle);
  }
  ++joins_;
  log("session " + slot->session_id + " for " + req.user + "/" + req.task + " at " + ep);
  ch.send(transport::SessionInfo{slot->session_id, ep, slot->token});
}

void Coordinator::reap_loop() {
  while (!stopping_) {
    {
      std::unique_lock lock(wait_mu_);
      wait_cv_.wait_for(lock, options_.reap_interval, [&] { return stopping_.load(); });
    }
    if (stopping_) return;
    std::vector<std::unique_ptr<SessionHandle>> doomed;
    {
      std::lock_guard lock(handles_mu_);
      for (const auto& d : table_.reap(wall_clock_ms())) {
        log("reaping silent session " + d.session_id);
        auto it = handles_.find(d.session_id);
        if (it != handles_.end()) {
          doomed.push_back(std::move(it->second));
          handles_.erase(it);
        }
      }
      for (auto it = handles_.begin(); it != handles_.end();) {
        if (!it->second->alive()) {
          log("session " + it->first + " ended");
          table_.close(it->first);
          doomed.push_back(std::move(it->second));
          it = handles_.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (auto& h : doomed) h->terminate();
  }
}

}  // namespace teleopforge::coord
