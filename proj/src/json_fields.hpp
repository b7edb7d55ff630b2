#pragma once
// Strict JSON object reader: every field access is checked and reported
// with its path, and finish() rejects fields nobody asked for.

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mcisim/error.hpp"

namespace mcisim::detail {

using json = nlohmann::json;

[[noreturn]] inline void format_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::Format, (path.empty() ? std::string("$") : path) + ": " + what);
}

// Parses text and converts parse errors into Format errors with line:column.
inline json parse_json_document(std::string_view text, std::string_view what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::Format, std::string(what) + ": parse error at line " +
                                       std::to_string(line) + ", column " + std::to_string(col) +
                                       ": " + e.what());
  }
}

class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) format_error(path_, "expected object");
  }

  std::string child(std::string_view key) const { return path_ + "." + std::string(key); }

  bool contains(std::string_view key) const { return obj_.contains(key); }

  const json& at(std::string_view key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) format_error(child(key), "missing field");
    seen_.insert(std::string(key));
    return *it;
  }

  bool get_bool(std::string_view key) {
    const json& v = at(key);
    if (!v.is_boolean()) format_error(child(key), "expected boolean");
    return v.get<bool>();
  }

  std::int64_t get_int(std::string_view key, std::int64_t lo, std::int64_t hi) {
    const json& v = at(key);
    if (!v.is_number_integer()) format_error(child(key), "expected integer");
    const auto x = v.get<std::int64_t>();
    if (x < lo || x > hi) {
      format_error(child(key), "value " + std::to_string(x) + " outside [" + std::to_string(lo) +
                                   ", " + std::to_string(hi) + "]");
    }
    return x;
  }

  std::uint64_t get_u64(std::string_view key) {
    const json& v = at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      format_error(child(key), "expected unsigned integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string get_string(std::string_view key) {
    const json& v = at(key);
    if (!v.is_string()) format_error(child(key), "expected string");
    return v.get<std::string>();
  }

  // Accepts a decimal string ("1.250") or a JSON number.
  double get_decimal(std::string_view key) {
    const json& v = at(key);
    double x = 0.0;
    if (v.is_number()) {
      x = v.get<double>();
    } else if (v.is_string()) {
      const auto s = v.get<std::string>();
      std::size_t used = 0;
      try {
        x = std::stod(s, &used);
      } catch (const std::exception&) {
        format_error(child(key), "expected decimal string, got '" + s + "'");
      }
      if (used != s.size()) format_error(child(key), "expected decimal string, got '" + s + "'");
    } else {
      format_error(child(key), "expected decimal");
    }
    if (!std::isfinite(x)) format_error(child(key), "expected finite number");
    return x;
  }

  const json& get_array(std::string_view key) {
    const json& v = at(key);
    if (!v.is_array()) format_error(child(key), "expected array");
    return v;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) format_error(child(it.key()), "unknown field");
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

}  // namespace mcisim::detail
