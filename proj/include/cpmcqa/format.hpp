#pragma once

#include <charconv>
#include <string>

namespace cpmcqa {

// Shortest round-trip decimal form of a double ("0.09", "1.61", "1e-09").
// Used for every floating-point value written to CSV/JSON/SVG output so that
// repeated runs produce byte-identical files.
inline std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Conservative [A-Za-z0-9._-] filter for path components derived from
// user-controlled names (models, subjects, question ids).
inline std::string sanitize_filename_component(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  for (const char c : raw) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-' || c == '_';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? std::string("_") : out;
}

}  // namespace cpmcqa
