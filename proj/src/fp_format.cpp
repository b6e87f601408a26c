#include "ipr/fp_format.hpp"

#include <cstdio>
#include <cstdlib>

#include "ipr/errors.hpp"

namespace ipr {

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return std::string(buf);
}

double parse_double(const std::string& text) {
  if (text.empty()) {
    throw ParseError("parse_double: empty field");
  }
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size()) {
    throw ParseError("parse_double: trailing characters in '" + text + "'");
  }
  return v;
}

}  // namespace ipr
