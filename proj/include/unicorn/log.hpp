#pragma once

#include <string_view>

namespace unicorn::log {

enum class Level { debug, info, warn, error, off };

void set_level(Level level);
Level level();

void info(std::string_view message);
void warn(std::string_view message);

/// Number of warnings emitted since process start; tests use it to observe
/// the "warn, don't fail" paths.
std::size_t warning_count();

}  // namespace unicorn::log
