#pragma once

#include "glf/core.hpp"
#include "glf/simulate.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace glf {

/// Split one CSV line; double-quoted fields may contain commas.
std::vector<std::string> split_csv_line(std::string_view line);

/// Shortest text that parses back to the same double.
std::string format_double(double v);
/// Strict double parser; throws DataError naming `what` on failure.
double parse_double(std::string_view text, std::string_view what);

/// Flat `key = value` settings; '#' starts a comment. Keys must be unique.
class KeyValueConfig {
public:
    KeyValueConfig() = default;
    explicit KeyValueConfig(std::map<std::string, std::string> values) : values_(std::move(values)) {}

    /// Throws ConfigError on unreadable files, malformed lines or repeated keys.
    static KeyValueConfig parse(std::string_view text);
    static KeyValueConfig load(const std::filesystem::path& file);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma-separated list.
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

    /// Throws ConfigError for keys never read through a getter.
    void reject_unknown() const;

private:
    const std::string* find(const std::string& key) const;

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

/// Simulation settings from a key-value config; see README for the keys.
SimConfig sim_config_from(const KeyValueConfig& config);

/// Writes phenotypes.csv, timepoints.csv and (when present) markers.csv and
/// kinship.csv. Throws DataError when the directory cannot be written.
void write_dataset(const TrialDataset& data, const std::filesystem::path& dir);

/// Reads a dataset directory written by write_dataset or by hand. Throws
/// DataError on missing files, malformed rows, duplicate or missing cells.
TrialDataset read_dataset(const std::filesystem::path& dir);

/// Writes a matrix with a header row; used for truth dumps.
void write_matrix_csv(const std::filesystem::path& file, const std::vector<std::string>& header,
                      const Matrix& values);

}  // namespace glf
