#pragma once

// Line-oriented key=value configuration with '#' comments.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace salfield {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<config>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const;
    void set(const std::string& key, const std::string& value);
    /// Later values win; used for CLI-over-file precedence.
    void merge(const KeyValueConfig& over);

    const std::map<std::string, std::string>& values() const noexcept { return values_; }
    std::string to_string() const;

    /// Errors on keys outside `known`.
    void require_known(const std::vector<std::string>& known) const;

    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;

private:
    std::string origin_ = "<config>";
    std::map<std::string, std::string> values_;
};

/// "64,128,256" <-> {64, 128, 256}; entries must be positive.
std::string join_sizes(const std::vector<std::size_t>& v);
std::vector<std::size_t> parse_sizes(const std::string& s, const std::string& key);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace salfield
