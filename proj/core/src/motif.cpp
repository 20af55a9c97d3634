#include "dnadiff/motif.hpp"

#include <cmath>

#include "dnadiff/tensor.hpp"

namespace dnadiff {

namespace {
bool pattern_char_matches(char pc, char sc) {
    if (pc == 'W') return sc == 'A' || sc == 'T';
    return pc == sc;
}

void validate_pattern(const std::string& pattern) {
    if (pattern.empty()) throw ValueError("motif pattern is empty");
    for (size_t i = 0; i < pattern.size(); ++i) {
        char c = pattern[i];
        if (c != 'A' && c != 'C' && c != 'G' && c != 'T' && c != 'W')
            throw ValueError("motif pattern: unsupported character '" + std::string(1, c) + "' at position " +
                             std::to_string(i));
    }
}
}  // namespace

std::vector<int64_t> motif_scan(const std::string& seq, const std::string& pattern) {
    validate_pattern(pattern);
    std::vector<int64_t> hits;
    if (seq.size() < pattern.size()) return hits;
    const int64_t last = static_cast<int64_t>(seq.size() - pattern.size());
    for (int64_t s = 0; s <= last; ++s) {
        bool ok = true;
        for (size_t k = 0; k < pattern.size(); ++k)
            if (!pattern_char_matches(pattern[k], seq[static_cast<size_t>(s) + k])) {
                ok = false;
                break;
            }
        if (ok) hits.push_back(s);
    }
    return hits;
}

int64_t MotifHistogram::modal_bin() const {
    int64_t best = -1, bv = 0;
    for (size_t b = 0; b < counts.size(); ++b)
        if (counts[b] > bv) {
            bv = counts[b];
            best = static_cast<int64_t>(b);
        }
    return best;
}

MotifHistogram motif_histogram(const std::vector<std::string>& seqs, const std::string& pattern,
                               int64_t bin_width, int64_t tss_offset, int64_t window_length) {
    validate_pattern(pattern);
    if (bin_width < 1) throw ValueError("motif_histogram: bin width must be >= 1");
    if (window_length < 1) throw ValueError("motif_histogram: window length must be >= 1");
    MotifHistogram h;
    h.pattern = pattern;
    h.bin_width = bin_width;
    h.tss_offset = tss_offset;
    h.counts.assign((window_length + bin_width - 1) / bin_width, 0);
    h.total_sequences = static_cast<int64_t>(seqs.size());
    for (const auto& s : seqs) {
        if (static_cast<int64_t>(s.size()) != window_length)
            throw ShapeError("motif_histogram: sequence length " + std::to_string(s.size()) +
                             " does not match window " + std::to_string(window_length));
        for (int64_t pos : motif_scan(s, pattern)) {
            h.counts[pos / bin_width]++;
            h.total_hits++;
        }
    }
    return h;
}

double histogram_distance(const MotifHistogram& a, const MotifHistogram& b) {
    if (a.counts.size() != b.counts.size() || a.bin_width != b.bin_width)
        throw ShapeError("histogram_distance: binnings differ");
    if (a.total_hits == 0 && b.total_hits == 0) return 0.0;
    if (a.total_hits == 0 || b.total_hits == 0) return 1.0;
    double tv = 0.0;
    for (size_t i = 0; i < a.counts.size(); ++i) {
        double pa = static_cast<double>(a.counts[i]) / static_cast<double>(a.total_hits);
        double pb = static_cast<double>(b.counts[i]) / static_cast<double>(b.total_hits);
        tv += std::abs(pa - pb);
    }
    return tv / 2.0;
}

std::vector<double> smooth_counts(const std::vector<int64_t>& counts, int64_t window) {
    if (window < 1) throw ValueError("smooth_counts: window must be >= 1");
    const int64_t n = static_cast<int64_t>(counts.size());
    std::vector<double> out(counts.size(), 0.0);
    const int64_t half = window / 2;
    for (int64_t i = 0; i < n; ++i) {
        int64_t lo = std::max<int64_t>(0, i - half);
        int64_t hi = std::min<int64_t>(n - 1, i + half);
        double acc = 0;
        for (int64_t j = lo; j <= hi; ++j) acc += static_cast<double>(counts[j]);
        out[i] = acc / static_cast<double>(hi - lo + 1);
    }
    return out;
}

}  // namespace dnadiff
