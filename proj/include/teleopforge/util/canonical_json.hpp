#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace teleopforge {

/// Append-only JSON writer with a fixed field order and 17-significant-digit
/// floats, so equal values always produce identical text and reparse to the
/// same bits.
class CanonicalJsonWriter {
 public:
  CanonicalJsonWriter& begin_object();
  CanonicalJsonWriter& end_object();
  CanonicalJsonWriter& begin_array();
  CanonicalJsonWriter& end_array();
  CanonicalJsonWriter& key(std::string_view k);

  CanonicalJsonWriter& value(double v);
  CanonicalJsonWriter& value(std::int64_t v);
  CanonicalJsonWriter& value(std::uint64_t v);
  CanonicalJsonWriter& value(int v) { return value(static_cast<std::int64_t>(v)); }
  CanonicalJsonWriter& value(bool v);
  CanonicalJsonWriter& value(std::string_view v);
  CanonicalJsonWriter& value(const char* v) { return value(std::string_view(v)); }
  CanonicalJsonWriter& null();
  CanonicalJsonWriter& array(std::span<const double> values);
  /// Splice an already-serialized JSON value.
  CanonicalJsonWriter& raw(std::string_view json);

  template <typename T>
  CanonicalJsonWriter& field(std::string_view k, const T& v) {
    key(k);
    return value(v);
  }

  const std::string& str() const { return out_; }
  std::string take() { return std::move(out_); }

 private:
  void separator();

  std::string out_;
  bool need_comma_ = false;
};

std::string format_double(double v);

/// FNV-1a 64-bit digest, hex encoded.
std::string fnv1a64_hex(std::string_view data);

}  // namespace teleopforge
