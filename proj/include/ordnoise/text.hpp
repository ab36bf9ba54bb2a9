#pragma once

#include <charconv>
#include <string>

namespace ordnoise {

// Shortest decimal text that reads back to the same double.
inline std::string to_text(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace ordnoise
