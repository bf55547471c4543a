#pragma once

// Canonical JSON text: keys sorted (nlohmann::json objects are ordered maps),
// no whitespace, floating-point numbers printed with exactly six decimals.
// Two equal documents always serialize to the same bytes.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "json.hpp"

namespace ramp3d {

using Json = nlohmann::json;

namespace detail {

inline void append_fixed6(std::string& out, double value) {
  if (!std::isfinite(value)) {
    out += "null";
    return;
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, 6);
  std::string_view text(buf, static_cast<std::size_t>(res.ptr - buf));
  if (text == "-0.000000") text = "0.000000";
  out += text;
}

inline void append_key(std::string& out, const std::string& key) {
  for (unsigned char c : key)
    if (c < 0x20 || c == '"' || c == '\\' || c >= 0x80) {
      out += Json(key).dump();
      return;
    }
  out += '"';
  out += key;
  out += '"';
}

inline void append_canonical(std::string& out, const Json& value) {
  switch (value.type()) {
    case Json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = value.begin(); it != value.end(); ++it) {
        if (!first) out += ',';
        first = false;
        append_key(out, it.key());
        out += ':';
        append_canonical(out, it.value());
      }
      out += '}';
      break;
    }
    case Json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& item : value) {
        if (!first) out += ',';
        first = false;
        append_canonical(out, item);
      }
      out += ']';
      break;
    }
    case Json::value_t::number_float:
      append_fixed6(out, value.get<double>());
      break;
    case Json::value_t::number_integer: {
      char buf[24];
      out.append(buf, static_cast<std::size_t>(std::to_chars(buf, buf + sizeof(buf), value.get<std::int64_t>()).ptr - buf));
      break;
    }
    case Json::value_t::number_unsigned: {
      char buf[24];
      out.append(buf, static_cast<std::size_t>(std::to_chars(buf, buf + sizeof(buf), value.get<std::uint64_t>()).ptr - buf));
      break;
    }
    default:
      out += value.dump();
      break;
  }
}

}  // namespace detail

inline std::string canonical_dump(const Json& value) {
  std::string out;
  detail::append_canonical(out, value);
  return out;
}

/// FNV-1a 64-bit over raw bytes; used for state digests and config digests.
struct Fnv1a64 {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      hash ^= c;
      hash *= 0x100000001b3ULL;
    }
  }
  /// One step per 64-bit word instead of per byte.
  void update_word(std::uint64_t word) {
    hash ^= word;
    hash *= 0x100000001b3ULL;
  }
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  Fnv1a64 h;
  h.update(bytes);
  return h.hash;
}

inline std::string hex_digest(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

inline std::string digest_of(const Json& value) {
  return hex_digest(fnv1a64(canonical_dump(value)));
}

}  // namespace ramp3d
