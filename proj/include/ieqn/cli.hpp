#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ieqn/dist.hpp"

namespace ieqn::cli {

struct KeySpec {
    std::string key;
    std::string default_value;
    std::string help;
    bool required = false;
};

/// Flat key = value configuration with '#' comments. Keys are fixed by the
/// subcommand schema; unknown keys are rejected. Values resolve in order:
/// schema default, config file, repeated --set overrides, then the --seed
/// flag for the "seed" key.
class RunConfig {
public:
    explicit RunConfig(std::span<const KeySpec> schema);

    void load_file(const std::filesystem::path& path);
    void apply_set(const std::string& key_equals_value);
    void set(const std::string& key, const std::string& value);
    /// Throws ConfigError if a required key is still unset.
    void finalize() const;

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::vector<std::size_t> get_size_list(const std::string& key) const;
    /// "mean:std:weight,mean:std:weight,..."
    dist::GaussianMixtureSpec get_mixture(const std::string& key) const;

private:
    const KeySpec& spec_for(const std::string& key) const;
    std::vector<KeySpec> schema_;
    std::map<std::string, std::string> values_;
};

const std::vector<KeySpec>& schema_for(const std::string& subcommand);
std::string schema_help(const std::string& subcommand);

struct CliOptions {
    std::string subcommand;
    std::string config_path;            // empty = defaults only
    std::vector<std::string> sets;      // KEY=VALUE overrides
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;  // overrides the seed key
    bool quiet = false;
};

/// Runs one subcommand end to end. Exit codes: 0 ok, 2 usage/config error,
/// 3 numerical divergence. All output files are buffered and flushed only
/// after the run succeeds.
int dispatch(const CliOptions& options);

}  // namespace ieqn::cli
