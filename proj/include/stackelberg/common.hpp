#ifndef STACKELBERG_COMMON_HPP
#define STACKELBERG_COMMON_HPP

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>

namespace stackelberg {

// Error hierarchy. Callers that can recover catch the specific type.
struct AllFleetsIdle : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FactorizationFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotConverged : std::runtime_error {
    double residual;
    explicit NotConverged(double r)
        : std::runtime_error("inner loop exhausted iteration budget, residual = " +
                             std::to_string(r)),
          residual(r) {}
};

struct OracleNotConverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LogLevel { Off = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("STACKELBERG_LOG");
        if (env == nullptr) return LogLevel::Off;
        if (std::strcmp(env, "info") == 0) return LogLevel::Info;
        if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
        return LogLevel::Off;
    }();
    return level;
}

inline void log_msg(LogLevel at, const std::string& msg) {
    if (static_cast<int>(log_level()) >= static_cast<int>(at)) {
        std::fprintf(stderr, "[stackelberg] %s\n", msg.c_str());
    }
}

// splitmix64, the usual seed expander.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from a root seed and a stream name.
// Adding a new named consumer never perturbs existing streams.
inline std::uint64_t stream_seed(std::uint64_t root, std::string_view stream_name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the name
    for (char c : stream_name) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001b3ULL;
    }
    std::uint64_t state = root ^ h;
    return splitmix64(state);
}

}  // namespace stackelberg

#endif  // STACKELBERG_COMMON_HPP
