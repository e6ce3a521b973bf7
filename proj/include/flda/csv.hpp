#pragma once

#include <cstdio>
#include <string>

namespace flda {

// Fixed formatting for all CSV output: 9 significant digits, so repeated runs
// of the same invocation produce byte-identical files.
inline std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace flda
