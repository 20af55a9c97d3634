#include "dnadiff/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dnadiff/digest.hpp"
#include "dnadiff/rng.hpp"
#include "dnadiff/seqcodec.hpp"
#include "dnadiff/wire.hpp"

namespace dnadiff {

std::vector<size_t> DatasetTable::indices_of(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < records.size(); ++i)
        if (i < splits.size() && splits[i] == s) out.push_back(i);
    return out;
}

std::map<std::string, int64_t> DatasetTable::species_counts() const {
    std::map<std::string, int64_t> counts;
    for (const auto& r : records) counts[r.species]++;
    return counts;
}

std::string extract_window(const std::string& genomic_sequence, int64_t tss_index, int64_t window_length) {
    if (window_length < 2 || window_length % 2 != 0)
        throw ValueError("extract_window: window length must be even and >= 2");
    const int64_t half = window_length / 2;
    const int64_t L = static_cast<int64_t>(genomic_sequence.size());
    const int64_t lo = tss_index - half;
    const int64_t hi = tss_index + half - 1;  // inclusive
    if (lo < 0 || hi >= L)
        throw ValueError("extract_window: window [" + std::to_string(lo) + ", " + std::to_string(hi) +
                         "] leaves sequence of length " + std::to_string(L));
    return genomic_sequence.substr(static_cast<size_t>(lo), static_cast<size_t>(window_length));
}

namespace {

struct MetaRow {
    std::string species;
    std::vector<ExpressionSample> expression;
    std::string description;
};

std::vector<std::string> split_tsv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

void read_metadata(const std::string& path, std::unordered_map<std::string, MetaRow>& meta, IngestReport& rep) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metadata '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("metadata '" + path + "' is empty (header row required)");
    auto header = split_tsv(line);
    if (header.size() < 5 || header[0] != "pid")
        throw ParseError("metadata '" + path +
                         "': expected header 'pid\\tspecies\\tsample_name\\texpression_value\\tgene_description'");
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ++rep.metadata_rows;
        auto f = split_tsv(line);
        if (f.size() < 5 || f[0].empty()) {
            ++rep.metadata_bad_rows;
            rep.warnings.push_back(path + ":" + std::to_string(line_no) + ": malformed metadata row skipped");
            continue;
        }
        double value = 0.0;
        bool have_value = !f[3].empty();
        if (have_value) {
            try {
                size_t used = 0;
                value = std::stod(f[3], &used);
                if (used != f[3].size()) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                ++rep.metadata_bad_rows;
                rep.warnings.push_back(path + ":" + std::to_string(line_no) +
                                       ": unparsable expression value skipped");
                continue;
            }
        }
        MetaRow& row = meta[f[0]];
        if (row.species.empty()) row.species = f[1];
        if (row.description.empty()) row.description = f[4];
        if (have_value) row.expression.push_back({f[2], value});
    }
}

std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::vector<std::string> header_tokens(const std::string& header) {
    std::vector<std::string> toks;
    std::istringstream ss(header);
    std::string t;
    while (ss >> t) toks.push_back(t);
    return toks;
}

}  // namespace

DatasetTable ingest(const std::vector<std::string>& fasta_paths, const std::vector<std::string>& metadata_paths,
                    int64_t window_length, IngestReport* report) {
    IngestReport local;
    IngestReport& rep = report ? *report : local;

    std::unordered_map<std::string, MetaRow> meta;
    for (const auto& p : metadata_paths) read_metadata(p, meta, rep);

    DatasetTable table;
    table.window_length = window_length;
    table.tss_offset = window_length / 2;
    table.ingested_at = now_iso8601();

    std::unordered_set<std::string> seen_sequences;
    std::unordered_map<std::string, std::string> pid_to_seq;

    for (const auto& path : fasta_paths) {
        auto records = parse_fasta_file(path);
        table.provenance.emplace_back(path, digest_hex(fnv1a64_file(path)));
        for (auto& fr : records) {
            ++rep.parsed;
            auto toks = header_tokens(fr.header);
            if (toks.empty()) {
                rep.warnings.push_back(path + ": record with empty header skipped");
                continue;
            }
            PromoterRecord r;
            r.pid = toks[0];
            int64_t tss = -1;
            for (size_t i = 1; i < toks.size(); ++i) {
                if (toks[i].rfind("species=", 0) == 0) r.species = toks[i].substr(8);
                else if (toks[i].rfind("tss=", 0) == 0) tss = std::stoll(toks[i].substr(4));
            }

            std::string window;
            if (static_cast<int64_t>(fr.seq.size()) == window_length && tss < 0) {
                window = fr.seq;
            } else {
                if (tss < 0) tss = static_cast<int64_t>(fr.seq.size()) / 2;
                try {
                    window = extract_window(fr.seq, tss, window_length);
                } catch (const ValueError& e) {
                    ++rep.skipped_bounds;
                    rep.warnings.push_back("record '" + r.pid + "': " + e.what());
                    continue;
                }
            }

            auto prev = pid_to_seq.find(r.pid);
            if (prev != pid_to_seq.end()) {
                if (prev->second != window)
                    throw ValueError("pid '" + r.pid + "' appears twice with different sequences");
            } else {
                pid_to_seq[r.pid] = window;
            }
            if (!seen_sequences.insert(window).second) {
                ++rep.dropped_duplicates;
                continue;
            }

            r.sequence = std::move(window);
            r.tss_offset = table.tss_offset;
            auto mit = meta.find(r.pid);
            if (mit != meta.end()) {
                if (r.species.empty()) r.species = mit->second.species;
                r.expression = mit->second.expression;
                r.description = mit->second.description;
            }
            table.records.push_back(std::move(r));
            ++rep.kept;
        }
    }
    table.splits.assign(table.records.size(), Split::Train);
    return table;
}

DatasetTable filter_species(const DatasetTable& table, const std::vector<std::string>& species) {
    std::unordered_set<std::string> keep(species.begin(), species.end());
    DatasetTable out;
    out.window_length = table.window_length;
    out.tss_offset = table.tss_offset;
    out.provenance = table.provenance;
    out.ingested_at = table.ingested_at;
    for (size_t i = 0; i < table.records.size(); ++i) {
        if (!keep.count(table.records[i].species)) continue;
        out.records.push_back(table.records[i]);
        out.splits.push_back(i < table.splits.size() ? table.splits[i] : Split::Train);
    }
    return out;
}

void split_table(DatasetTable& table, double validation_fraction, uint64_t seed) {
    if (validation_fraction < 0.0 || validation_fraction > 1.0)
        throw ValueError("split: validation fraction must lie in [0, 1]");
    const size_t n = table.records.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    RngStream rng(seed);
    for (size_t i = n; i > 1; --i) {
        size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    size_t n_val = static_cast<size_t>(std::llround(validation_fraction * static_cast<double>(n)));
    table.splits.assign(n, Split::Train);
    for (size_t i = 0; i < n_val && i < n; ++i) table.splits[order[i]] = Split::Validation;
}

namespace {
constexpr char kTableMagic[4] = {'D', 'D', 'T', 'B'};
constexpr uint32_t kTableVersion = 1;

void pack_sequence(std::ostream& os, const std::string& seq) {
    const size_t L = seq.size();
    wire::put_u64(os, L);
    // N-escape bitmap, then 2-bit packed bases (N positions packed as 0).
    std::vector<unsigned char> bitmap((L + 7) / 8, 0);
    std::vector<unsigned char> packed((L + 3) / 4, 0);
    for (size_t i = 0; i < L; ++i) {
        int idx = base_index(seq[i]);
        if (idx == -1) {
            bitmap[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
            idx = 0;
        }
        packed[i / 4] |= static_cast<unsigned char>(idx << (2 * (i % 4)));
    }
    os.write(reinterpret_cast<const char*>(bitmap.data()), static_cast<std::streamsize>(bitmap.size()));
    os.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
}

std::string unpack_sequence(std::istream& is) {
    uint64_t L = wire::get_u64(is, "sequence length");
    if (L > (1ull << 32)) throw ParseError("implausible sequence length");
    std::vector<unsigned char> bitmap((L + 7) / 8);
    std::vector<unsigned char> packed((L + 3) / 4);
    if (L) {
        if (!is.read(reinterpret_cast<char*>(bitmap.data()), static_cast<std::streamsize>(bitmap.size())))
            throw ParseError("truncated table file in sequence bitmap");
        if (!is.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size())))
            throw ParseError("truncated table file in packed bases");
    }
    std::string seq(L, '\0');
    for (uint64_t i = 0; i < L; ++i) {
        if (bitmap[i / 8] & (1u << (i % 8))) seq[i] = 'N';
        else seq[i] = kBases[(packed[i / 4] >> (2 * (i % 4))) & 3];
    }
    return seq;
}
}  // namespace

void persist_table(const DatasetTable& table, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kTableMagic, 4);
    wire::put_u32(os, kTableVersion);
    wire::put_u64(os, static_cast<uint64_t>(table.window_length));
    wire::put_u64(os, static_cast<uint64_t>(table.tss_offset));
    wire::put_string(os, table.ingested_at);
    wire::put_u64(os, table.provenance.size());
    for (const auto& [src, dig] : table.provenance) {
        wire::put_string(os, src);
        wire::put_string(os, dig);
    }
    wire::put_u64(os, table.records.size());
    for (size_t i = 0; i < table.records.size(); ++i) {
        const PromoterRecord& r = table.records[i];
        wire::put_string(os, r.pid);
        wire::put_string(os, r.species);
        wire::put_string(os, r.description);
        wire::put_u64(os, static_cast<uint64_t>(r.tss_offset));
        wire::put_u64(os, r.expression.size());
        for (const auto& e : r.expression) {
            wire::put_string(os, e.sample_name);
            wire::put_f64(os, e.value);
        }
        pack_sequence(os, r.sequence);
        os.put(static_cast<char>(i < table.splits.size() ? static_cast<uint8_t>(table.splits[i]) : 0));
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

DatasetTable load_table(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kTableMagic, 4) != 0)
        throw ParseError("'" + path + "' is not a DDTB table (bad magic)");
    uint32_t version = wire::get_u32(is, "table version");
    if (version != kTableVersion)
        throw ParseError("unsupported table version " + std::to_string(version) + " in '" + path + "'");
    DatasetTable table;
    table.window_length = static_cast<int64_t>(wire::get_u64(is, "window length"));
    table.tss_offset = static_cast<int64_t>(wire::get_u64(is, "tss offset"));
    table.ingested_at = wire::get_string(is, "timestamp");
    uint64_t nprov = wire::get_u64(is, "provenance count");
    if (nprov > (1u << 20)) throw ParseError("implausible provenance count in '" + path + "'");
    for (uint64_t i = 0; i < nprov; ++i) {
        std::string src = wire::get_string(is, "provenance path");
        std::string dig = wire::get_string(is, "provenance digest");
        table.provenance.emplace_back(std::move(src), std::move(dig));
    }
    uint64_t nrec = wire::get_u64(is, "record count");
    if (nrec > (1ull << 32)) throw ParseError("implausible record count in '" + path + "'");
    table.records.reserve(nrec);
    table.splits.reserve(nrec);
    for (uint64_t i = 0; i < nrec; ++i) {
        PromoterRecord r;
        r.pid = wire::get_string(is, "record pid");
        r.species = wire::get_string(is, "record species");
        r.description = wire::get_string(is, "record description");
        r.tss_offset = static_cast<int64_t>(wire::get_u64(is, "record tss"));
        uint64_t nexp = wire::get_u64(is, "expression count");
        if (nexp > (1u << 20)) throw ParseError("implausible expression count in '" + path + "'");
        for (uint64_t e = 0; e < nexp; ++e) {
            ExpressionSample s;
            s.sample_name = wire::get_string(is, "expression sample name");
            s.value = wire::get_f64(is, "expression value");
            r.expression.push_back(std::move(s));
        }
        r.sequence = unpack_sequence(is);
        int split_byte = is.get();
        if (split_byte == EOF) throw ParseError("truncated table file at split label");
        if (split_byte > 1) throw ParseError("bad split label in '" + path + "'");
        table.records.push_back(std::move(r));
        table.splits.push_back(static_cast<Split>(split_byte));
    }
    return table;
}

}  // namespace dnadiff
