#include "teleopforge/coord/session_table.hpp"

#include <algorithm>
#include <cstdio>

namespace teleopforge::coord {

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::starting: return "starting";
    case SessionStatus::live: return "live";
    case SessionStatus::closed: return "closed";
  }
  return "?";
}

std::string random_token() {
  static thread_local std::mt19937_64 rng{[] {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd()};
    return std::mt19937_64(seq);
  }()};
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

SessionTable::SessionTable(std::size_t max_sessions, double heartbeat_timeout_ms)
    : max_(max_sessions), timeout_ms_(heartbeat_timeout_ms) {}

std::optional<SessionDescriptor> SessionTable::reserve(const std::string& user, const std::string& task,
                                                       double now_ms) {
  std::lock_guard lock(mu_);
  if (sessions_.size() >= max_) return std::nullopt;
  SessionDescriptor d;
  do {
    d.session_id = random_token();
  } while (std::any_of(sessions_.begin(), sessions_.end(),
                       [&](const SessionDescriptor& s) { return s.session_id == d.session_id; }));
  d.user = user;
  d.task = task;
  d.token = random_token();
  d.created_at = now_ms;
  d.last_heartbeat = now_ms;
  sessions_.push_back(d);
  return d;
}

bool SessionTable::activate(const std::string& session_id, const std::string& endpoint) {
  std::lock_guard lock(mu_);
  for (auto& s : sessions_) {
    if (s.session_id == session_id) {
      s.endpoint = endpoint;
      s.status = SessionStatus::live;
      return true;
    }
  }
  return false;
}

std::optional<SessionDescriptor> SessionTable::close(const std::string& session_id) {
  std::lock_guard lock(mu_);
  auto it = std::find_if(sessions_.begin(), sessions_.end(),
                         [&](const SessionDescriptor& s) { return s.session_id == session_id; });
  if (it == sessions_.end()) return std::nullopt;
  auto d = *it;
  d.status = SessionStatus::closed;
  sessions_.erase(it);
  return d;
}

bool SessionTable::heartbeat(const std::string& session_id, double now_ms) {
  std::lock_guard lock(mu_);
  for (auto& s : sessions_) {
    if (s.session_id == session_id) {
      s.last_heartbeat = std::max(s.last_heartbeat, now_ms);
      return true;
    }
  }
  return false;
}

std::vector<SessionDescriptor> SessionTable::reap(double now_ms) {
  std::lock_guard lock(mu_);
  std::vector<SessionDescriptor> closed;
  std::erase_if(sessions_, [&](const SessionDescriptor& s) {
    if (now_ms - s.last_heartbeat <= timeout_ms_) return false;
    closed.push_back(s);
    closed.back().status = SessionStatus::closed;
    return true;
  });
  return closed;
}

std::size_t SessionTable::live_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

std::vector<SessionDescriptor> SessionTable::sessions() const {
  std::lock_guard lock(mu_);
  return sessions_;
}

std::optional<SessionDescriptor> SessionTable::find(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  for (const auto& s : sessions_) {
    if (s.session_id == session_id) return s;
  }
  return std::nullopt;
}

}  // namespace teleopforge::coord
