#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sensched/errors.hpp"

namespace sensched {

inline constexpr const char* version_string = "0.1.0";

// FNV-1a over the raw file bytes; enough to pin the exact input document.
inline std::string file_hash_fnv1a(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file for hashing: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::ostringstream out;
    out << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

// Everything needed to reproduce an output byte-for-byte: tool version,
// input hash, fully resolved options and seeds.
struct RunManifest {
    std::string command;
    std::string scenario_path;
    std::string scenario_hash;
    nlohmann::json options;
    std::uint64_t seed = 0;
    std::string timestamp;

    static std::string now_iso8601() {
        const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        std::ostringstream out;
        out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
        return out.str();
    }

    nlohmann::json to_json() const {
        return {{"tool", "sensched"},   {"version", version_string},
                {"command", command},   {"scenario", scenario_path},
                {"scenario_hash", scenario_hash}, {"options", options},
                {"seed", seed},         {"timestamp", timestamp}};
    }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw ParseError("cannot write manifest: " + path);
        out << to_json().dump(2) << "\n";
    }
};

} // namespace sensched
