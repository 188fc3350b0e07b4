#pragma once

// Command-line front end. `run` is the whole program minus process exit so
// tests can drive it in-process.

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace salfield::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Provenance record written into the output location before any artifact.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    std::string config_path;
    std::map<std::string, std::string> config;  // resolved key-values
    std::uint64_t seed = 0;
    std::string output_dir;
    std::string started_at;
    std::string finished_at;  // empty until the run completes
    std::vector<std::string> outputs;

    std::string to_json() const;
    /// <output_dir>/run.<command>.json
    std::filesystem::path path() const;
    void write() const;
};

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace salfield::cli
