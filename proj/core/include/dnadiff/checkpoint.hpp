#pragma once

// "DDKP" checkpoint container: versioned header (magic, format version,
// precision flag) followed by named tensor records, all little-endian.
// Record layout: u32 name length, name bytes, u64 rank, u64 dims, raw
// little-endian float payload.

#include <map>
#include <string>
#include <vector>

#include "dnadiff/optim.hpp"
#include "dnadiff/tensor.hpp"

namespace dnadiff {

struct StateDict {
    // Insertion-ordered records; lookup index on the side.
    std::vector<std::pair<std::string, nn::Tensor<float>>> records;
    std::map<std::string, size_t> index;

    void put(const std::string& name, nn::Tensor<float> t);
    bool has(const std::string& name) const { return index.count(name) != 0; }
    const nn::Tensor<float>& get(const std::string& name) const;
    size_t size() const { return records.size(); }
};

enum class CheckpointPrecision : uint32_t { Single = 0, Double = 1 };

void save_checkpoint(const std::string& path, const StateDict& sd,
                     CheckpointPrecision precision = CheckpointPrecision::Single);
StateDict load_checkpoint(const std::string& path);

// Parameter <-> StateDict bridging. Loading throws if a parameter is missing
// from the dict or shapes disagree.
StateDict collect_state(const std::vector<nn::Parameter<float>*>& params);
void restore_state(const StateDict& sd, const std::vector<nn::Parameter<float>*>& params);

}  // namespace dnadiff
