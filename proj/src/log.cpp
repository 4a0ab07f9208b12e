#include "bkinv/log.hpp"

#include <cstdio>
#include <mutex>

namespace bkinv {

namespace {
std::mutex g_mutex;
WarningSink g_sink;
}  // namespace

void set_warning_sink(WarningSink sink) {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_sink = std::move(sink);
}

void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_mutex);
  if (g_sink) {
    g_sink(msg);
    return;
  }
  std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

}  // namespace bkinv
