#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace blockbp {

/// Shortest round-trip decimal form; deterministic across runs, unlike
/// locale- or precision-dependent stream output.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace blockbp
