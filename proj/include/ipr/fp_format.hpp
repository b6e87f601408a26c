#pragma once

#include <string>

namespace ipr {

// Round-trip-exact decimal formatting for 64-bit floats.  Checkpoints and
// other persisted artifacts store numbers through these two helpers so a
// save/load cycle reproduces the original bits.
std::string format_double(double value);

double parse_double(const std::string& text);

}  // namespace ipr
