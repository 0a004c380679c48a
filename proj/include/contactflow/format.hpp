#pragma once

#include <cstdio>
#include <string>

namespace contactflow {

/// Round-trip decimal formatting used for every numeric artifact.
inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace contactflow
