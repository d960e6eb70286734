#pragma once

#include <bit>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxsim {

// Config/validation problem: CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Runtime simulation failure (divergence, deadlock, corruption): exit code 3.
struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

// Controlled by the VOXSIM_LOG env var (quiet|warn|info|debug), default warn.
LogLevel log_level();

void log_msg(LogLevel lvl, const char* fmt, ...)
#if defined(__GNUC__)
    __attribute__((format(printf, 2, 3)))
#endif
    ;

#define VOXSIM_INFO(...) ::voxsim::log_msg(::voxsim::LogLevel::info, __VA_ARGS__)
#define VOXSIM_WARN(...) ::voxsim::log_msg(::voxsim::LogLevel::warn, __VA_ARGS__)
#define VOXSIM_DEBUG(...) ::voxsim::log_msg(::voxsim::LogLevel::debug, __VA_ARGS__)

// FNV-1a 64-bit, used for manifest content hashes.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a_file(const std::string& path);

std::string hex64(uint64_t v);

// Little-endian scalar append/read for the binary table format.
template <typename T>
void put_le(std::vector<unsigned char>& buf, T v) {
    for (size_t i = 0; i < sizeof(T); ++i)
        buf.push_back(static_cast<unsigned char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

inline void put_f32(std::vector<unsigned char>& buf, float v) {
    put_le<uint32_t>(buf, std::bit_cast<uint32_t>(v));
}

inline float get_f32(const unsigned char* p) {
    return std::bit_cast<float>(get_le<uint32_t>(p));
}

} // namespace voxsim
