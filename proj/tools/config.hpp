#pragma once

// Flat key=value experiment configuration. Precedence, lowest first:
// built-in defaults, the config file, ECGSAL_* environment variables,
// command-line flags.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ecgsal::cli {

struct KeySpec {
    std::string key;
    std::optional<std::string> default_value;  // nullopt: must be supplied
    std::string help;
};

const std::vector<KeySpec>& schema();

/// "data.per_class" -> "ECGSAL_DATA_PER_CLASS".
std::string env_name(const std::string& key);

class ExperimentConfig {
public:
    ExperimentConfig();

    /// Lines "key = value"; '#' starts a comment. Unknown keys throw ConfigError.
    void load_text(const std::string& text);
    void load_file(const std::filesystem::path& path);
    /// Applies ECGSAL_* variables through `lookup` (getenv by default).
    void apply_env(const std::function<const char*(const char*)>& lookup);
    void set(const std::string& key, const std::string& value);

    std::string get(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    std::uint64_t get_seed() const;
    double get_double(const std::string& key) const;

    /// Throws ConfigError when a required key is missing or a value is malformed.
    void validate() const;

    /// Sorted "key=value" lines of everything except the output directory.
    std::string canonical() const;
    /// FNV-1a 64 of canonical(), as 16 hex digits.
    std::string hash() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace ecgsal::cli
