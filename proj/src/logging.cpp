#include "hairshift/logging.hpp"

#include <atomic>
#include <cstdio>
#include <string>

namespace hairshift::logging {

namespace {
std::atomic<bool> g_quiet{false};
std::atomic<std::size_t> g_warn_count{0};
}  // namespace

void info(std::string_view msg) {
    if (g_quiet.load()) return;
    std::fprintf(stderr, "[info] %.*s\n", static_cast<int>(msg.size()), msg.data());
}

void warn(std::string_view msg) {
    g_warn_count.fetch_add(1);
    std::fprintf(stderr, "[warn] %.*s\n", static_cast<int>(msg.size()), msg.data());
}

void set_quiet(bool quiet) { g_quiet.store(quiet); }

std::size_t warn_count() { return g_warn_count.load(); }

}  // namespace hairshift::logging
