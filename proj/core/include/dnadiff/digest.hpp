#pragma once

// FNV-1a 64-bit digests for provenance records and run manifests.

#include <cstdint>
#include <string>

namespace dnadiff {

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a64_str(const std::string& s);
uint64_t fnv1a64_file(const std::string& path);
std::string digest_hex(uint64_t d);

}  // namespace dnadiff
