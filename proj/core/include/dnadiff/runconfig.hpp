#pragma once

// Flat key=value configuration with section-prefixed keys ("vae.lr",
// "diff.batch"), environment overrides under the DDK_ prefix, and run
// manifest emission.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dnadiff {

struct RunConfig {
    std::map<std::string, std::string> values;
    std::string source_path;

    static RunConfig from_file(const std::string& path);    // parse + DDK_ env overlay
    static RunConfig from_string(const std::string& text);  // parse only

    // DDK_VAE_LR=x becomes vae.lr=x (first underscore after the prefix turns
    // into the section dot).
    void apply_env_overrides();

    bool has(const std::string& key) const { return values.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values[key] = value; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    int64_t get_i64(const std::string& key, int64_t fallback) const;
    double get_f64(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int64_t> get_i64_list(const std::string& key, const std::vector<int64_t>& fallback) const;

    std::string serialize() const;  // sorted key=value lines
};

// Reproducibility record: command, seed, config snapshot, input digests,
// output digests (computed here), wall time.
void write_manifest(const std::string& path, const std::string& command, const RunConfig& config, uint64_t seed,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    double wall_seconds);

}  // namespace dnadiff
