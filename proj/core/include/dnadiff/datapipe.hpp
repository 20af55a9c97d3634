#pragma once

// Corpus construction: FASTA + TSV metadata join, TSS-centred windowing,
// exact-duplicate removal, seeded train/validation split, and the "DDTB"
// portable binary container.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dnadiff/tensor.hpp"

namespace dnadiff {

struct ExpressionSample {
    std::string sample_name;
    double value = 0.0;
};

struct PromoterRecord {
    std::string pid;
    std::string species;
    std::string sequence;  // validated, upper-case, length == table window_length
    int64_t tss_offset = 0;
    std::vector<ExpressionSample> expression;
    std::string description;
};

enum class Split : uint8_t { Train = 0, Validation = 1 };

struct DatasetTable {
    int64_t window_length = 2048;
    int64_t tss_offset = 1024;  // TSS index within each window
    std::vector<PromoterRecord> records;
    std::vector<Split> splits;  // one label per record
    std::vector<std::pair<std::string, std::string>> provenance;  // (source path, digest hex)
    std::string ingested_at;

    std::vector<size_t> indices_of(Split s) const;
    std::map<std::string, int64_t> species_counts() const;
};

struct IngestReport {
    size_t parsed = 0;
    size_t kept = 0;
    size_t dropped_duplicates = 0;
    size_t skipped_bounds = 0;
    size_t metadata_rows = 0;
    size_t metadata_bad_rows = 0;
    std::vector<std::string> warnings;
};

// Inclusive slice [tss - W/2, tss + W/2 - 1]; throws ValueError when the
// window would leave the sequence.
std::string extract_window(const std::string& genomic_sequence, int64_t tss_index, int64_t window_length = 2048);

// FASTA headers: first token is the pid; optional "species=...", "tss=..."
// tokens are honored. Sequences longer than the window are cut around their
// TSS (header tss, else sequence centre); exact window-length sequences pass
// through. Metadata TSVs have a header row and columns
// pid, species, sample_name, expression_value, gene_description.
DatasetTable ingest(const std::vector<std::string>& fasta_paths, const std::vector<std::string>& metadata_paths,
                    int64_t window_length, IngestReport* report = nullptr);

DatasetTable filter_species(const DatasetTable& table, const std::vector<std::string>& species);

// Seeded shuffle, then the first round(fraction * N) shuffled records become
// the validation split. Labels attach to the table in original record order.
void split_table(DatasetTable& table, double validation_fraction, uint64_t seed);

void persist_table(const DatasetTable& table, const std::string& path);
DatasetTable load_table(const std::string& path);

}  // namespace dnadiff
