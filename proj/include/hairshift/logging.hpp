#pragma once

#include <cstddef>
#include <string_view>

namespace hairshift::logging {

void info(std::string_view msg);
void warn(std::string_view msg);

// Suppress info output (warnings still print to stderr).
void set_quiet(bool quiet);

// Number of warnings emitted since process start; tests use this to assert
// that a code path warned instead of failing.
std::size_t warn_count();

}  // namespace hairshift::logging
