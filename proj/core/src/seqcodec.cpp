#include "dnadiff/seqcodec.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dnadiff {

int base_index(char c) {
    switch (std::toupper(static_cast<unsigned char>(c))) {
        case 'A': return 0;
        case 'T': return 1;
        case 'G': return 2;
        case 'C': return 3;
        case 'N': return -1;
        default: return -2;
    }
}

std::string normalize_sequence(const std::string& raw, const std::string& what) {
    std::string out(raw.size(), '\0');
    for (size_t i = 0; i < raw.size(); ++i) {
        int idx = base_index(raw[i]);
        if (idx == -2)
            throw ValueError(what + ": invalid character '" + std::string(1, raw[i]) + "' at position " +
                             std::to_string(i));
        out[i] = idx == -1 ? 'N' : kBases[idx];
    }
    return out;
}

nn::Tensor<float> one_hot_encode(const std::string& seq) {
    const int64_t L = static_cast<int64_t>(seq.size());
    if (L == 0) throw ValueError("one_hot_encode: empty sequence");
    nn::Tensor<float> t({4, L}, 0.0f);
    for (int64_t i = 0; i < L; ++i) {
        int idx = base_index(seq[i]);
        if (idx == -2)
            throw ValueError("one_hot_encode: invalid character at position " + std::to_string(i));
        if (idx == -1)
            for (int c = 0; c < 4; ++c) t.at(c, i) = 0.25f;
        else
            t.at(idx, i) = 1.0f;
    }
    return t;
}

std::string decode_argmax(const nn::Tensor<float>& t) {
    require_rank(t, 2, "decode_argmax input");
    if (t.dim(0) != 4) throw ShapeError("decode_argmax: expected 4 channels, got " + std::to_string(t.dim(0)));
    const int64_t L = t.dim(1);
    std::string s(L, '\0');
    for (int64_t i = 0; i < L; ++i) {
        int best = 0;
        float bv = t.at(0, i);
        if (!std::isfinite(bv)) throw ValueError("decode_argmax: non-finite entry at column " + std::to_string(i));
        for (int c = 1; c < 4; ++c) {
            float v = t.at(c, i);
            if (!std::isfinite(v))
                throw ValueError("decode_argmax: non-finite entry at column " + std::to_string(i));
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        s[i] = kBases[best];
    }
    return s;
}

std::vector<std::string> decode_argmax_batch(const nn::Tensor<float>& t) {
    require_rank(t, 3, "decode_argmax_batch input");
    const int64_t B = t.dim(0), L = t.dim(2);
    std::vector<std::string> out;
    out.reserve(B);
    for (int64_t b = 0; b < B; ++b) {
        nn::Tensor<float> row({4, L});
        std::copy(t.ptr() + b * 4 * L, t.ptr() + (b + 1) * 4 * L, row.ptr());
        out.push_back(decode_argmax(row));
    }
    return out;
}

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}
}  // namespace

std::vector<FastaRecord> parse_fasta(std::istream& in) {
    std::vector<FastaRecord> records;
    std::string line;
    size_t line_no = 0;
    bool have_header = false;
    std::string header, seq;
    auto flush = [&]() {
        if (!have_header) return;
        records.push_back({header, normalize_sequence(seq, "record '" + header + "'")});
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '>') {
            flush();
            header = trim(t.substr(1));
            seq.clear();
            have_header = true;
        } else {
            if (!have_header)
                throw ParseError("FASTA: sequence data before first header at line " + std::to_string(line_no));
            seq += t;
        }
    }
    flush();
    return records;
}

std::vector<FastaRecord> parse_fasta_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    try {
        return parse_fasta(in);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    } catch (const ValueError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_fasta(std::ostream& out, const std::vector<FastaRecord>& records, size_t line_width) {
    if (line_width == 0) line_width = 70;
    for (const auto& r : records) {
        out << '>' << r.header << '\n';
        for (size_t i = 0; i < r.seq.size(); i += line_width)
            out << r.seq.substr(i, line_width) << '\n';
        if (r.seq.empty()) out << '\n';
    }
}

void write_fasta_file(const std::string& path, const std::vector<FastaRecord>& records, size_t line_width) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_fasta(out, records, line_width);
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace dnadiff
