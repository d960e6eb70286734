#include "voxsim/rng.hpp"
#include "voxsim/util.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

namespace voxsim {

LogLevel log_level() {
    static LogLevel lvl = [] {
        const char* env = std::getenv("VOXSIM_LOG");
        if (!env) return LogLevel::warn;
        if (std::strcmp(env, "quiet") == 0) return LogLevel::quiet;
        if (std::strcmp(env, "info") == 0) return LogLevel::info;
        if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
        return LogLevel::warn;
    }();
    return lvl;
}

void log_msg(LogLevel lvl, const char* fmt, ...) {
    if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
    static const char* names[] = {"quiet", "warn", "info", "debug"};
    std::fprintf(stderr, "[voxsim %s] ", names[static_cast<int>(lvl)]);
    va_list args;
    va_start(args, fmt);
    std::vfprintf(stderr, fmt, args);
    va_end(args);
    std::fputc('\n', stderr);
}

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SimError("cannot open for hashing: " + path);
    uint64_t h = 14695981039346656037ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace voxsim
