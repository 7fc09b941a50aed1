#pragma once

#include <cstdio>
#include <string>

namespace recodec {

// Shortest exact decimal round-trip for doubles; "inf"/"nan" spellings come
// from printf and are stable across runs.
inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace recodec
