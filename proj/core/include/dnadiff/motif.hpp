#pragma once

// Motif scanning and TSS-relative positional histograms. Patterns are exact
// strings over {A, C, G, T} plus the IUPAC code W (A or T).

#include <cstdint>
#include <string>
#include <vector>

namespace dnadiff {

// All overlapping match start positions, 0-based. 'N' in the sequence
// matches nothing.
std::vector<int64_t> motif_scan(const std::string& seq, const std::string& pattern);

struct MotifHistogram {
    std::string pattern;
    int64_t bin_width = 1;
    int64_t tss_offset = 0;        // window-local TSS index used for relabelling
    std::vector<int64_t> counts;   // bin b covers absolute starts [b*w, (b+1)*w)
    int64_t total_sequences = 0;
    int64_t total_hits = 0;

    // Relative start position (bin left edge minus TSS) of bin b.
    int64_t bin_rel_start(int64_t b) const { return b * bin_width - tss_offset; }
    int64_t modal_bin() const;  // lowest index among maxima; -1 when empty
};

MotifHistogram motif_histogram(const std::vector<std::string>& seqs, const std::string& pattern,
                               int64_t bin_width, int64_t tss_offset, int64_t window_length);

// Total variation distance between the normalized histograms; both sides
// empty -> 0, exactly one side empty -> 1.
double histogram_distance(const MotifHistogram& a, const MotifHistogram& b);

// Centered moving average for plot emission; window is clipped at the edges.
std::vector<double> smooth_counts(const std::vector<int64_t>& counts, int64_t window);

}  // namespace dnadiff
