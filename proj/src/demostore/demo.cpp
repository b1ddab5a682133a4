#include "teleopforge/demostore/demo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <zlib.h>

#include "json.hpp"

#include "teleopforge/util/canonical_json.hpp"

namespace teleopforge::demostore {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t EpisodeRecord::step_count() const {
  return static_cast<std::uint64_t>(std::count_if(ticks.begin(), ticks.end(), [](const TickRecord& t) {
    return !t.terminal();
  }));
}

EpisodeRecorder::EpisodeRecorder(EpisodeHeader header, const sim::SimState& initial) : current_(initial) {
  record_.header = std::move(header);
}

void EpisodeRecorder::record_step(const Eigen::VectorXd& q_target, bool gripper,
                                  const std::optional<transport::PoseCommand>& cmd, const sim::StepResult& result,
                                  double reward) {
  TickRecord t;
  t.tick = current_.tick;
  t.state = current_;
  t.command = cmd;
  t.q_target = q_target;
  t.gripper = gripper;
  t.reward = reward;
  t.events = result.events;
  record_.ticks.push_back(std::move(t));
  current_ = result.state;
}

EpisodeRecord EpisodeRecorder::finish(bool success, double finished_at_ms) {
  TickRecord t;
  t.tick = current_.tick;
  t.state = current_;
  record_.ticks.push_back(std::move(t));
  record_.header.success = success;
  record_.header.completion_time = static_cast<double>(record_.step_count()) * record_.header.dt;
  record_.header.finished_at = finished_at_ms;
  return std::move(record_);
}

namespace {

void write_command(CanonicalJsonWriter& w, const transport::PoseCommand& c) {
  const double quat[4] = {c.orientation.w(), c.orientation.x(), c.orientation.y(), c.orientation.z()};
  w.begin_object();
  w.field("seq", static_cast<std::uint64_t>(c.seq));
  w.field("client_timestamp", c.client_timestamp);
  w.key("position").array(std::span<const double>(c.position.data(), 3));
  w.key("orientation").array(quat);
  w.field("gripper", c.gripper);
  w.field("engaged", c.engaged);
  w.end_object();
}

transport::PoseCommand read_command(const json& j) {
  transport::PoseCommand c;
  c.seq = j.at("seq").get<std::uint64_t>();
  c.client_timestamp = j.at("client_timestamp").get<double>();
  const auto& p = j.at("position");
  c.position = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
  const auto& q = j.at("orientation");
  c.orientation =
      Eigen::Quaterniond(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(), q.at(3).get<double>());
  c.gripper = j.at("gripper").get<bool>();
  c.engaged = j.at("engaged").get<bool>();
  return c;
}

std::string header_line(const EpisodeHeader& h) {
  CanonicalJsonWriter w;
  w.begin_object();
  w.field("kind", "header");
  w.field("format_version", h.format_version);
  w.field("task", h.task);
  w.field("user", h.user);
  w.field("condition", h.condition);
  w.field("arm_config_hash", h.arm_config_hash);
  w.field("dt", h.dt);
  w.field("success", h.success);
  w.field("completion_time", h.completion_time);
  w.field("started_at", h.started_at);
  w.field("finished_at", h.finished_at);
  w.end_object();
  return w.take();
}

std::string tick_line(const TickRecord& t) {
  CanonicalJsonWriter w;
  w.begin_object();
  w.field("kind", "tick");
  w.field("tick", static_cast<std::uint64_t>(t.tick));
  w.key("state").raw(sim::to_json(t.state));
  w.key("command");
  if (t.command) {
    write_command(w, *t.command);
  } else {
    w.null();
  }
  w.key("q_target").array(std::span<const double>(t.q_target.data(), static_cast<std::size_t>(t.q_target.size())));
  w.field("gripper", t.gripper);
  w.field("reward", t.reward);
  w.key("events").begin_array();
  for (const auto& e : t.events) {
    w.begin_object();
    w.field("kind", sim::to_string(e.kind));
    w.field("object_id", e.object_id);
    w.field("tick", static_cast<std::uint64_t>(e.tick));
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.take();
}

[[noreturn]] void corrupt(const std::string& origin, const std::string& why) {
  throw CorruptFileError(origin + ": corrupt demonstration file: " + why);
}

}  // namespace

std::string serialize(const EpisodeRecord& record) {
  std::string out = header_line(record.header);
  out += '\n';
  for (const auto& t : record.ticks) {
    out += tick_line(t);
    out += '\n';
  }
  CanonicalJsonWriter w;
  w.begin_object().field("kind", "footer").field("records", static_cast<std::uint64_t>(record.ticks.size()));
  w.end_object();
  out += w.str();
  out += '\n';
  return out;
}

EpisodeRecord parse(std::string_view text, const std::string& origin) {
  EpisodeRecord rec;
  bool have_header = false;
  bool have_footer = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) corrupt(origin, "unterminated last line");
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (have_footer) corrupt(origin, "data after footer");
    json j;
    try {
      j = json::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      if (!have_header) {
        if (kind != "header") corrupt(origin, "first record is not a header");
        auto& h = rec.header;
        h.format_version = j.at("format_version").get<int>();
        if (h.format_version != kFormatVersion) {
          corrupt(origin, "unsupported format_version " + std::to_string(h.format_version));
        }
        h.task = j.at("task").get<std::string>();
        h.user = j.at("user").get<std::string>();
        h.condition = j.value("condition", "");
        h.arm_config_hash = j.at("arm_config_hash").get<std::string>();
        h.dt = j.at("dt").get<double>();
        h.success = j.at("success").get<bool>();
        h.completion_time = j.at("completion_time").get<double>();
        h.started_at = j.at("started_at").get<double>();
        h.finished_at = j.at("finished_at").get<double>();
        have_header = true;
      } else if (kind == "tick") {
        TickRecord t;
        t.tick = j.at("tick").get<std::uint64_t>();
        t.state = sim::state_from_json(j.at("state").dump());
        if (!j.at("command").is_null()) t.command = read_command(j.at("command"));
        const auto& qt = j.at("q_target");
        t.q_target.resize(static_cast<Eigen::Index>(qt.size()));
        for (std::size_t i = 0; i < qt.size(); ++i) t.q_target[static_cast<Eigen::Index>(i)] = qt[i].get<double>();
        t.gripper = j.at("gripper").get<bool>();
        t.reward = j.at("reward").get<double>();
        for (const auto& e : j.at("events")) {
          t.events.push_back({sim::parse_event_kind(e.at("kind").get<std::string>()), e.at("object_id").get<int>(),
                              e.at("tick").get<std::uint64_t>()});
        }
        if (!rec.ticks.empty() && t.tick <= rec.ticks.back().tick) corrupt(origin, "ticks not increasing");
        if (!rec.ticks.empty() && rec.ticks.back().terminal()) corrupt(origin, "record after terminal tick");
        rec.ticks.push_back(std::move(t));
      } else if (kind == "footer") {
        if (j.at("records").get<std::uint64_t>() != rec.ticks.size()) corrupt(origin, "footer record count mismatch");
        have_footer = true;
      } else {
        corrupt(origin, "unknown record kind '" + kind + "'");
      }
    } catch (const CorruptFileError&) {
      throw;
    } catch (const std::exception& e) {
      corrupt(origin, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) corrupt(origin, "missing header");
  if (!have_footer) corrupt(origin, "missing footer (truncated file)");
  if (rec.ticks.empty() || !rec.ticks.back().terminal()) corrupt(origin, "missing terminal tick");
  return rec;
}

namespace {

void write_text(const EpisodeRecord& record, const fs::path& path, bool gz) {
  const std::string text = serialize(record);
  gzFile f = gzopen(path.c_str(), gz ? "wb6" : "wbT");
  if (!f) throw std::runtime_error(path.string() + ": cannot open for writing");
  std::size_t off = 0;
  while (off < text.size()) {
    const auto chunk = static_cast<unsigned>(std::min<std::size_t>(text.size() - off, 1u << 20));
    if (gzwrite(f, text.data() + off, chunk) != static_cast<int>(chunk)) {
      gzclose(f);
      throw std::runtime_error(path.string() + ": write failed");
    }
    off += chunk;
  }
  if (gzclose(f) != Z_OK) throw std::runtime_error(path.string() + ": close failed");
}

}  // namespace

void write_demo_file(const EpisodeRecord& record, const fs::path& path) {
  write_text(record, path, path.extension() == ".gz");
}

namespace {

std::string sanitize(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s.empty() ? "anon" : s;
}

}  // namespace

fs::path write_demo(const EpisodeRecord& record, const fs::path& dir, bool compress) {
  fs::create_directories(dir);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream name;
  name << sanitize(record.header.task) << '-' << sanitize(record.header.user) << '-'
       << std::put_time(&tm, "%Y%m%dT%H%M%S") << '-' << std::hex << std::setw(8) << std::setfill('0')
       << (rng() & 0xffffffffu) << ".djsonl" << (compress ? ".gz" : "");
  const fs::path final_path = dir / name.str();
  // Temporary name does not match the demo suffix so scans ignore it.
  fs::path tmp = final_path;
  tmp += ".partial";
  write_text(record, tmp, compress);
  fs::rename(tmp, final_path);
  return final_path;
}

EpisodeRecord read_demo(const fs::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw CorruptFileError(path.string() + ": cannot open");
  std::string text;
  char buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      int err = 0;
      std::string msg = gzerror(f, &err);
      gzclose(f);
      corrupt(path.string(), "decompression failed: " + msg);
    }
    if (n == 0) break;
    text.append(buf, static_cast<std::size_t>(n));
  }
  gzclose(f);
  return parse(text, path.string());
}

bool is_demo_file(const fs::path& path) {
  const auto name = path.filename().string();
  auto ends_with = [&](std::string_view s) {
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends_with(".djsonl") || ends_with(".djsonl.gz");
}

IndexAggregates aggregate(const std::vector<IndexRow>& rows) {
  IndexAggregates a;
  a.count = rows.size();
  double sum = 0.0;
  for (const auto& r : rows) {
    if (!r.success) continue;
    ++a.successful;
    sum += r.completion_time;
  }
  a.mean_completion_time = a.successful ? sum / static_cast<double>(a.successful) : 0.0;
  return a;
}

std::vector<IndexRow> DatasetIndex::successful(const std::string& task) const {
  std::vector<IndexRow> out;
  for (const auto& r : rows) {
    if (r.success && r.task == task) out.push_back(r);
  }
  return out;
}

DatasetIndex build_index(const fs::path& dir, const std::function<void(const std::string&)>& warn) {
  DatasetIndex index;
  if (!fs::exists(dir)) return index;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && is_demo_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    try {
      const auto rec = read_demo(p);
      index.rows.push_back({p.string(), rec.header.task, rec.header.user, rec.header.condition, rec.header.success,
                            rec.header.completion_time, rec.step_count()});
    } catch (const CorruptFileError& e) {
      const std::string msg = std::string("skipping ") + e.what();
      index.warnings.push_back(msg);
      if (warn) warn(msg);
    }
  }
  index.totals = aggregate(index.rows);
  return index;
}

ResetSampler::ResetSampler(std::vector<EpisodeRecord> demos) : demos_(std::move(demos)) {
  std::erase_if(demos_, [](const EpisodeRecord& r) { return r.ticks.empty(); });
  if (demos_.empty()) throw EmptyDatasetError("no demonstrations to sample reset states from");
}

ResetSampler ResetSampler::from_index(const DatasetIndex& index, const std::string& task) {
  std::vector<EpisodeRecord> demos;
  for (const auto& row : index.successful(task)) demos.push_back(read_demo(row.path));
  if (demos.empty()) throw EmptyDatasetError("no successful '" + task + "' demonstrations in dataset");
  return ResetSampler(std::move(demos));
}

sim::SimState ResetSampler::sample(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> pick_demo(0, demos_.size() - 1);
  const auto& d = demos_[pick_demo(rng)];
  std::uniform_int_distribution<std::size_t> pick_tick(0, d.ticks.size() - 1);
  return d.ticks[pick_tick(rng)].state;
}

sim::SimState sample_reset_state(const DatasetIndex& index, const std::string& task, std::uint64_t seed) {
  const auto sampler = ResetSampler::from_index(index, task);
  std::mt19937_64 rng(seed);
  return sampler.sample(rng);
}

double state_distance(const sim::SimState& a, const sim::SimState& b) {
  if (a.arm.q.size() != b.arm.q.size() || a.objects.size() != b.objects.size()) {
    return std::numeric_limits<double>::infinity();
  }
  double d = 0.0;
  if (a.arm.q.size() > 0) {
    d = std::max(d, (a.arm.q - b.arm.q).cwiseAbs().maxCoeff());
    d = std::max(d, (a.arm.qdot - b.arm.qdot).cwiseAbs().maxCoeff());
  }
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    d = std::max(d, (a.objects[i].pose.position - b.objects[i].pose.position).cwiseAbs().maxCoeff());
    if (a.objects[i].attached != b.objects[i].attached) d = std::numeric_limits<double>::infinity();
  }
  if (a.arm.gripper_closed != b.arm.gripper_closed) d = std::numeric_limits<double>::infinity();
  return d;
}

ReplayReport replay(const EpisodeRecord& record, const sim::Simulator& sim) {
  if (record.header.arm_config_hash != sim.arm().hash()) {
    throw std::invalid_argument("arm config hash " + record.header.arm_config_hash +
                                " does not match simulator config " + sim.arm().hash());
  }
  if (record.ticks.empty()) throw std::invalid_argument("empty episode");
  ReplayReport report;
  sim::SimState state = record.ticks.front().state;
  for (std::size_t i = 0; i + 1 < record.ticks.size(); ++i) {
    const auto& t = record.ticks[i];
    if (t.terminal()) break;
    state = sim.step(state, t.q_target, t.gripper, record.header.dt).state;
    ++report.steps;
    report.max_deviation = std::max(report.max_deviation, state_distance(state, record.ticks[i + 1].state));
  }
  report.success = sim.check_success(state);
  report.final_state = std::move(state);
  return report;
}

}  // namespace teleopforge::demostore
