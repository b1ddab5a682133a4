#include "teleopforge/analytics/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace teleopforge::analytics {

double ks_statistic(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw std::invalid_argument("ks: empty sample");
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> b(y.begin(), y.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    // Advance past every copy of the next pooled value before comparing, so
    // ties are evaluated on the right-continuous CDFs.
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == t) ++i;
    while (j < b.size() && b[j] == t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double q_ks(double lambda) {
  // Below 0.2 the tail differs from 1 by < 1e-25 but the alternating series
  // needs hundreds of terms and rounds to just under 1.
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k < 1000; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_p_value(double D, std::size_t n1, std::size_t n2) {
  const double ne = static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n1 + n2);
  const double s = std::sqrt(ne);
  return q_ks((s + 0.12 + 0.11 / s) * D);
}

KSResult ks_two_sample(std::span<const double> x, std::span<const double> y) {
  KSResult r;
  r.D = ks_statistic(x, y);
  r.n1 = x.size();
  r.n2 = y.size();
  r.p = ks_p_value(r.D, r.n1, r.n2);
  return r;
}

Summary summarize_values(std::string group, std::span<const double> values) {
  Summary s;
  s.group = std::move(group);
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

GroupKey parse_group_key(const std::string& name) {
  if (name == "task") return GroupKey::task;
  if (name == "user") return GroupKey::user;
  if (name == "condition") return GroupKey::condition;
  throw std::invalid_argument("unknown group key '" + name + "' (task|user|condition)");
}

namespace {

const std::string& key_of(const demostore::IndexRow& r, GroupKey key) {
  switch (key) {
    case GroupKey::task: return r.task;
    case GroupKey::user: return r.user;
    case GroupKey::condition: return r.condition;
  }
  return r.task;
}

const char* key_name(GroupKey key) {
  switch (key) {
    case GroupKey::task: return "task";
    case GroupKey::user: return "user";
    case GroupKey::condition: return "condition";
  }
  return "group";
}

}  // namespace

std::vector<Summary> summarize(const std::vector<demostore::IndexRow>& rows, GroupKey key) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : rows) {
    if (r.success) groups[key_of(r, key)].push_back(r.completion_time);
  }
  std::vector<Summary> out;
  for (const auto& [g, v] : groups) out.push_back(summarize_values(g, v));
  return out;
}

void write_summary_table(std::ostream& out, const std::vector<Summary>& rows, GroupKey key) {
  std::size_t width = std::string(key_name(key)).size();
  for (const auto& r : rows) width = std::max(width, r.group.size());
  out << std::left << std::setw(static_cast<int>(width)) << key_name(key) << std::right << std::setw(8) << "count"
      << std::setw(12) << "mean_s" << std::setw(12) << "std_s" << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << (r.group.empty() ? "-" : r.group) << std::right
        << std::setw(8) << r.count << std::setw(12) << r.mean << std::setw(12) << r.std << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

void write_summary_csv(std::ostream& out, const std::vector<Summary>& rows, GroupKey key) {
  out << key_name(key) << ",count,mean_s,std_s\n";
  out << std::setprecision(17);
  for (const auto& r : rows) out << r.group << ',' << r.count << ',' << r.mean << ',' << r.std << '\n';
}

StageTimings stage_timings(const demostore::EpisodeRecord& demo) {
  StageTimings out;
  if (demo.ticks.empty()) return out;
  const auto start = demo.ticks.front().tick;
  const double dt = demo.header.dt;
  auto seconds = [&](std::uint64_t tick) { return static_cast<double>(tick - start) * dt; };

  struct Track {
    std::uint64_t first_attach = 0;
    std::uint64_t last_attach = 0;
    std::optional<std::uint64_t> release;  // after last_attach
  };
  std::map<int, Track> tracks;
  std::vector<int> order;
  for (const auto& t : demo.ticks) {
    for (const auto& e : t.events) {
      if (e.kind == sim::EventKind::attach) {
        auto [it, fresh] = tracks.try_emplace(e.object_id);
        if (fresh) {
          it->second.first_attach = e.tick;
          order.push_back(e.object_id);
        }
        it->second.last_attach = e.tick;
        it->second.release.reset();
      } else if (e.kind == sim::EventKind::detach) {
        auto it = tracks.find(e.object_id);
        if (it != tracks.end()) it->second.release = e.tick;
      }
    }
  }
  std::uint64_t boundary = start;
  for (int id : order) {
    const auto& tr = tracks[id];
    ObjectStage s;
    s.object_id = id;
    s.attach_time = seconds(tr.first_attach);
    s.time_to_grasp = static_cast<double>(tr.first_attach - std::min(boundary, tr.first_attach)) * dt;
    if (tr.release) {
      s.time_grasp_to_place = static_cast<double>(*tr.release - tr.last_attach) * dt;
      boundary = std::max(boundary, *tr.release);
    }
    out.objects.push_back(s);
  }
  if (!order.empty()) out.time_to_first_grasp = out.objects.front().attach_time;
  return out;
}

std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram: zero bins");
  if (values.empty()) return {};
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn;
  const double width = (*mx > lo) ? (*mx - lo) / static_cast<double>(bins) : 1.0;
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = lo + width * static_cast<double>(b + 1);
  }
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    ++out[std::min(b, bins - 1)].count;
  }
  return out;
}

void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins) {
  out << "lo,hi,count\n" << std::setprecision(17);
  for (const auto& b : bins) out << b.lo << ',' << b.hi << ',' << b.count << '\n';
}

std::vector<double> read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::vector<double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": not a number: " + tok);
      }
      out.push_back(v);
    }
  }
  return out;
}

}  // namespace teleopforge::analytics
