#include "teleopforge/util/canonical_json.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace teleopforge {

std::string format_double(double v) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument("canonical JSON cannot encode non-finite value");
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fnv1a64_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void CanonicalJsonWriter::separator() {
  if (need_comma_) out_ += ',';
  need_comma_ = true;
}

CanonicalJsonWriter& CanonicalJsonWriter::begin_object() {
  separator();
  out_ += '{';
  need_comma_ = false;
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::end_object() {
  out_ += '}';
  need_comma_ = true;
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::begin_array() {
  separator();
  out_ += '[';
  need_comma_ = false;
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::end_array() {
  out_ += ']';
  need_comma_ = true;
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::key(std::string_view k) {
  value(k);
  out_ += ':';
  need_comma_ = false;
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::value(double v) {
  separator();
  out_ += format_double(v);
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::value(std::int64_t v) {
  separator();
  out_ += std::to_string(v);
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::value(std::uint64_t v) {
  separator();
  out_ += std::to_string(v);
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::value(bool v) {
  separator();
  out_ += v ? "true" : "false";
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::value(std::string_view v) {
  separator();
  out_ += '"';
  for (char c : v) {
    switch (c) {
      case '"': out_ += "\\\""; break;
      case '\\': out_ += "\\\\"; break;
      case '\n': out_ += "\\n"; break;
      case '\r': out_ += "\\r"; break;
      case '\t': out_ += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out_ += buf;
        } else {
          out_ += c;
        }
    }
  }
  out_ += '"';
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::null() {
  separator();
  out_ += "null";
  return *this;
}

CanonicalJsonWriter& CanonicalJsonWriter::array(std::span<const double> values) {
  begin_array();
  for (double v : values) value(v);
  return end_array();
}

CanonicalJsonWriter& CanonicalJsonWriter::raw(std::string_view json) {
  separator();
  out_ += json;
  return *this;
}

}  // namespace teleopforge
