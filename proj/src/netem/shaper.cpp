#include "teleopforge/netem/shaper.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace teleopforge::netem {

void LinkSpec::validate() const {
  if (rate_bps < 0.0 || !std::isfinite(rate_bps)) throw std::invalid_argument("link rate must be >= 0");
  if (delay_ms < 0.0 || !std::isfinite(delay_ms)) throw std::invalid_argument("link delay must be >= 0");
  if (mtu == 0) throw std::invalid_argument("link mtu must be > 0");
  if (queue_bytes == 0) throw std::invalid_argument("link queue must be > 0");
  if (uses_trace()) {
    if (rate_bps > 0.0) throw std::invalid_argument("link has both a rate and a trace");
    if (!std::is_sorted(trace_ms.begin(), trace_ms.end())) {
      throw std::invalid_argument("trace timestamps must be nondecreasing");
    }
    if (trace_ms.back() == 0) throw std::invalid_argument("trace must end after 0 ms");
  }
}

std::string LinkSpec::describe() const {
  std::ostringstream s;
  if (uses_trace()) {
    s << "trace(" << trace_ms.size() << " opportunities/" << trace_ms.back() << " ms, mtu " << mtu << ")";
  } else if (rate_bps > 0.0) {
    s << rate_bps / 1000.0 << " kbit/s";
  } else {
    s << "unlimited";
  }
  s << ", " << delay_ms << " ms";
  return s.str();
}

NetworkProfile builtin_profile(const std::string& name) {
  auto link = [](double rate, double delay) {
    LinkSpec l;
    l.rate_bps = rate;
    l.delay_ms = delay;
    return l;
  };
  NetworkProfile p;
  p.name = name;
  if (name == "baseline") {
    p.uplink = p.downlink = link(2.4e6, 20);
  } else if (name == "low-capacity") {
    p.uplink = p.downlink = link(500e3, 20);
  } else if (name == "high-delay") {
    p.uplink = p.downlink = link(2.4e6, 120);
  } else if (name == "both") {
    p.uplink = p.downlink = link(500e3, 120);
  } else if (name == "none") {
    p.uplink = p.downlink = link(0, 0);
  } else {
    throw std::invalid_argument("unknown network profile '" + name + "'");
  }
  return p;
}

std::vector<std::string> builtin_profile_names() { return {"baseline", "low-capacity", "high-delay", "both", "none"}; }

std::vector<std::uint64_t> parse_trace(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      if (line.find_first_not_of("0123456789") != std::string::npos) throw std::invalid_argument("");
      v = std::stoull(line, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("trace line " + std::to_string(line_no) + ": expected integer ms, got '" + line +
                                  "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("trace is empty");
  LinkSpec check;
  check.trace_ms = out;
  check.validate();
  return out;
}

std::vector<std::uint64_t> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(path + ": cannot open trace");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_trace(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

LinkShaper::LinkShaper(LinkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.uses_trace()) budget_left_ = spec_.mtu;
}

double LinkShaper::opportunity_time(std::uint64_t index) const {
  const auto n = spec_.trace_ms.size();
  const auto loop = index / n;
  return static_cast<double>(spec_.trace_ms[index % n]) + static_cast<double>(loop * spec_.trace_ms.back());
}

std::size_t LinkShaper::queued_bytes(double now_ms) {
  while (!backlog_.empty() && backlog_.front().depart_ms <= now_ms) {
    backlog_bytes_ -= backlog_.front().bytes;
    backlog_.pop_front();
  }
  return backlog_bytes_;
}

std::vector<LinkShaper::Piece> LinkShaper::push(double now_ms, std::size_t bytes) {
  std::vector<Piece> out;
  const std::size_t room = spec_.queue_bytes - std::min(spec_.queue_bytes, queued_bytes(now_ms));
  const std::size_t take = std::min(bytes, room);
  dropped_ += bytes - take;
  accepted_ += take;
  if (take == 0) return out;

  if (spec_.uses_trace()) {
    std::size_t left = take;
    while (left > 0) {
      // Opportunities that passed while the queue was empty are wasted.
      if (opportunity_time(opportunity_) < now_ms) {
        ++opportunity_;
        budget_left_ = spec_.mtu;
        continue;
      }
      const std::size_t n = std::min(left, budget_left_);
      const double t = opportunity_time(opportunity_);
      if (!out.empty() && out.back().deliver_at_ms == t + spec_.delay_ms) {
        out.back().bytes += n;
      } else {
        out.push_back({t + spec_.delay_ms, n});
      }
      backlog_.push_back({t, n});
      backlog_bytes_ += n;
      left -= n;
      budget_left_ -= n;
      if (budget_left_ == 0) {
        ++opportunity_;
        budget_left_ = spec_.mtu;
      }
    }
  } else if (spec_.rate_bps > 0.0) {
    std::size_t left = take;
    double start = std::max(now_ms, link_free_ms_);
    while (left > 0) {
      const std::size_t n = std::min(left, spec_.mtu);
      const double depart = start + static_cast<double>(n) * 8.0 * 1000.0 / spec_.rate_bps;
      out.push_back({depart + spec_.delay_ms, n});
      backlog_.push_back({depart, n});
      backlog_bytes_ += n;
      start = depart;
      left -= n;
    }
    link_free_ms_ = start;
  } else {
    out.push_back({now_ms + spec_.delay_ms, take});
  }
  return out;
}

}  // namespace teleopforge::netem
