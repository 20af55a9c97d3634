#pragma once

// DNA <-> tensor codec. Channel order is fixed as (A, T, G, C); 'N' encodes
// as the uniform column {0.25, 0.25, 0.25, 0.25} and argmax ties resolve in
// channel order.

#include <iosfwd>
#include <string>
#include <vector>

#include "dnadiff/tensor.hpp"

namespace dnadiff {

inline constexpr char kBases[4] = {'A', 'T', 'G', 'C'};

// 0..3 for A/T/G/C, -1 for N, -2 for anything else. Case-insensitive.
int base_index(char c);

// Validates and upper-cases; throws ValueError naming `what` and the offending
// 0-based position on any character outside {A,C,G,T,N}.
std::string normalize_sequence(const std::string& raw, const std::string& what = "sequence");

// [4, L] one-hot (or uniform-N) matrix for a validated sequence.
nn::Tensor<float> one_hot_encode(const std::string& seq);

// Per-column argmax of a [4, L] matrix; ties go to the earliest channel.
std::string decode_argmax(const nn::Tensor<float>& t);

// Rows of a [B, 4, L] batch decoded independently.
std::vector<std::string> decode_argmax_batch(const nn::Tensor<float>& t);

struct FastaRecord {
    std::string header;  // text after '>', without leading/trailing spaces
    std::string seq;     // validated, upper-case
};

std::vector<FastaRecord> parse_fasta(std::istream& in);
std::vector<FastaRecord> parse_fasta_file(const std::string& path);
void write_fasta(std::ostream& out, const std::vector<FastaRecord>& records, size_t line_width = 70);
void write_fasta_file(const std::string& path, const std::vector<FastaRecord>& records, size_t line_width = 70);

}  // namespace dnadiff
