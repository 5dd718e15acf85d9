#include "unicorn/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace unicorn::log {
namespace {

std::atomic<Level> g_level{Level::warn};
std::atomic<std::size_t> g_warnings{0};
std::mutex g_mutex;

void emit(const char* tag, std::string_view message) {
  std::lock_guard lock(g_mutex);
  std::cerr << "[" << tag << "] " << message << '\n';
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void info(std::string_view message) {
  if (g_level <= Level::info) emit("info", message);
}

void warn(std::string_view message) {
  ++g_warnings;
  if (g_level <= Level::warn) emit("warn", message);
}

std::size_t warning_count() { return g_warnings; }

}  // namespace unicorn::log
