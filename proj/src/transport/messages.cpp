#include "teleopforge/transport/messages.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "json.hpp"

namespace teleopforge::transport {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v >> 8));
    u8(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) u8(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) u8(static_cast<std::uint8_t>(v >> s));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void flag(bool v) { u8(v ? 1 : 0); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void pose(const sim::Pose& p) {
    for (int i = 0; i < 3; ++i) f64(p.position[i]);
    quat(p.orientation);
  }
  void quat(const Eigen::Quaterniond& q) {
    f64(q.w());
    f64(q.x());
    f64(q.y());
    f64(q.z());
  }

  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() {
    std::uint16_t v = static_cast<std::uint16_t>(u8() << 8);
    return static_cast<std::uint16_t>(v | u8());
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | u8();
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool flag() {
    const auto v = u8();
    if (v > 1) throw WireError("flag byte out of range");
    return v == 1;
  }
  std::string rest() {
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), in_.size() - pos_);
    pos_ = in_.size();
    return s;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  sim::Pose pose() {
    sim::Pose p;
    for (int i = 0; i < 3; ++i) p.position[i] = f64();
    p.orientation = quat();
    return p;
  }
  Eigen::Quaterniond quat() {
    const double w = f64(), x = f64(), y = f64(), z = f64();
    return Eigen::Quaterniond(w, x, y, z);
  }
  void finish() const {
    if (pos_ != in_.size()) throw WireError("trailing bytes in payload");
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw WireError("payload truncated");
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

nlohmann::json parse_body(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw WireError("JSON body is not an object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw WireError(std::string("malformed JSON body: ") + e.what());
  }
}

template <typename T>
T json_field(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw WireError(std::string("JSON body lacks field '") + key + "'");
  }
}

void encode_payload(Writer& w, const Message& msg) {
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Hello>) {
          w.bytes(m.text);
        } else if constexpr (std::is_same_v<T, JoinRequest>) {
          nlohmann::ordered_json j;
          j["type"] = "join";
          j["user"] = m.user;
          j["task"] = m.task;
          w.bytes(j.dump());
        } else if constexpr (std::is_same_v<T, SessionInfo>) {
          nlohmann::ordered_json j;
          j["type"] = "session";
          j["session_id"] = m.session_id;
          j["endpoint"] = m.endpoint;
          j["token"] = m.token;
          w.bytes(j.dump());
        } else if constexpr (std::is_same_v<T, PoseCommand>) {
          w.u64(m.seq);
          w.f64(m.client_timestamp);
          for (int i = 0; i < 3; ++i) w.f64(m.position[i]);
          w.quat(m.orientation);
          w.flag(m.gripper);
          w.flag(m.engaged);
        } else if constexpr (std::is_same_v<T, StateFrame>) {
          w.u64(m.tick);
          w.f64(m.server_timestamp);
          w.f64(m.echoed_client_timestamp);
          w.f64(m.command_received_timestamp);
          if (m.q.size() > 0xffff || m.objects.size() > 0xffff) throw WireError("state frame too large");
          w.u16(static_cast<std::uint16_t>(m.q.size()));
          for (Eigen::Index i = 0; i < m.q.size(); ++i) w.f64(m.q[i]);
          w.pose(m.ee);
          w.u16(static_cast<std::uint16_t>(m.objects.size()));
          for (const auto& o : m.objects) {
            w.i32(o.id);
            w.pose(o.pose);
            w.flag(o.attached);
          }
          w.flag(m.task_done);
          w.f64(m.reward);
        } else if constexpr (std::is_same_v<T, HapticEvent>) {
          w.u8(static_cast<std::uint8_t>(m.kind));
          w.i32(m.object_id);
          w.u64(m.tick);
        } else if constexpr (std::is_same_v<T, Reset>) {
        } else if constexpr (std::is_same_v<T, DemoDone>) {
          nlohmann::ordered_json j;
          j["success"] = m.success;
          j["completion_time"] = m.completion_time;
          j["ticks"] = m.ticks;
          j["path"] = m.path;
          w.bytes(j.dump());
        } else if constexpr (std::is_same_v<T, Heartbeat>) {
          w.bytes(m.session_id);
        } else if constexpr (std::is_same_v<T, ErrorMessage>) {
          w.u16(static_cast<std::uint16_t>(m.code));
          w.bytes(m.message);
        }
      },
      msg);
}

}  // namespace

MessageType type_of(const Message& m) { return static_cast<MessageType>(m.index() + 1); }

std::vector<std::uint8_t> encode(const Message& msg) {
  Writer payload;
  encode_payload(payload, msg);
  const auto& body = payload.data();
  if (body.size() > kMaxPayload) {
    throw WireError("payload of " + std::to_string(body.size()) + " bytes exceeds the 64 KiB limit");
  }
  Writer frame;
  frame.u32(static_cast<std::uint32_t>(body.size() + 1));
  frame.u8(static_cast<std::uint8_t>(type_of(msg)));
  auto& out = frame.data();
  out.insert(out.end(), body.begin(), body.end());
  return std::move(out);
}

std::size_t frame_size(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) return 0;
  const std::uint32_t len = (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
                            (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
  return 4 + static_cast<std::size_t>(len);
}

Message decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw WireError("frame shorter than header");
  const std::size_t total = frame_size(bytes);
  if (total < kHeaderSize) throw WireError("declared length is zero");
  if (total - kHeaderSize > kMaxPayload) throw WireError("declared payload exceeds 64 KiB");
  if (total > bytes.size()) throw WireError("truncated frame: declared length exceeds available bytes");
  if (total < bytes.size()) throw WireError("trailing bytes after frame");

  const std::uint8_t code = bytes[4];
  Reader r(bytes.subspan(kHeaderSize));
  switch (static_cast<MessageType>(code)) {
    case MessageType::hello:
      return Hello{r.rest()};
    case MessageType::join: {
      const auto j = parse_body(r.rest());
      if (j.value("type", "") != "join") throw WireError("JOIN body has wrong type tag");
      return JoinRequest{json_field<std::string>(j, "user"), json_field<std::string>(j, "task")};
    }
    case MessageType::session: {
      const auto j = parse_body(r.rest());
      if (j.value("type", "") != "session") throw WireError("SESSION body has wrong type tag");
      return SessionInfo{json_field<std::string>(j, "session_id"), json_field<std::string>(j, "endpoint"),
                         json_field<std::string>(j, "token")};
    }
    case MessageType::pose_cmd: {
      PoseCommand c;
      c.seq = r.u64();
      c.client_timestamp = r.f64();
      for (int i = 0; i < 3; ++i) c.position[i] = r.f64();
      c.orientation = r.quat();
      c.gripper = r.flag();
      c.engaged = r.flag();
      r.finish();
      if (!std::isfinite(c.orientation.norm()) || std::abs(c.orientation.norm() - 1.0) > 1e-6) {
        throw WireError("POSE_CMD orientation is not a unit quaternion");
      }
      return c;
    }
    case MessageType::state_frame: {
      StateFrame f;
      f.tick = r.u64();
      f.server_timestamp = r.f64();
      f.echoed_client_timestamp = r.f64();
      f.command_received_timestamp = r.f64();
      const auto nq = r.u16();
      f.q.resize(nq);
      for (int i = 0; i < nq; ++i) f.q[i] = r.f64();
      f.ee = r.pose();
      const auto no = r.u16();
      for (int i = 0; i < no; ++i) {
        ObjectFrame o;
        o.id = r.i32();
        o.pose = r.pose();
        o.attached = r.flag();
        f.objects.push_back(o);
      }
      f.task_done = r.flag();
      f.reward = r.f64();
      r.finish();
      return f;
    }
    case MessageType::haptic_event: {
      HapticEvent h;
      const auto kind = r.u8();
      if (kind < 1 || kind > 4) throw WireError("unknown haptic event kind");
      h.kind = static_cast<sim::EventKind>(kind);
      h.object_id = r.i32();
      h.tick = r.u64();
      r.finish();
      return h;
    }
    case MessageType::reset:
      r.finish();
      return Reset{};
    case MessageType::demo_done: {
      const auto j = parse_body(r.rest());
      return DemoDone{json_field<bool>(j, "success"), json_field<double>(j, "completion_time"),
                      json_field<std::uint64_t>(j, "ticks"), json_field<std::string>(j, "path")};
    }
    case MessageType::heartbeat:
      return Heartbeat{r.rest()};
    case MessageType::error: {
      ErrorMessage e;
      e.code = static_cast<ErrorCode>(r.u16());
      e.message = r.rest();
      return e;
    }
  }
  throw WireError("unknown message type code " + std::to_string(code));
}

}  // namespace teleopforge::transport
