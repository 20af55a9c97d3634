#include "dnadiff/runconfig.hpp"

#include <cctype>
#include <ctime>
#include <fstream>
#include <sstream>

#include "dnadiff/digest.hpp"
#include "dnadiff/tensor.hpp"

extern char** environ;

namespace dnadiff {

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}
}  // namespace

RunConfig RunConfig::from_string(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ParseError("config line " + std::to_string(line_no) + ": expected key=value, got '" + t + "'");
        cfg.values[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig cfg;
    try {
        cfg = from_string(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
    cfg.source_path = path;
    cfg.apply_env_overrides();
    return cfg;
}

void RunConfig::apply_env_overrides() {
    for (char** e = environ; e && *e; ++e) {
        std::string entry(*e);
        if (entry.rfind("DDK_", 0) != 0) continue;
        size_t eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string raw = entry.substr(4, eq - 4);
        if (raw.empty()) continue;
        std::string key;
        bool dotted = false;
        for (char c : raw) {
            if (c == '_' && !dotted) {
                key += '.';
                dotted = true;
            } else {
                key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            }
        }
        values[key] = entry.substr(eq + 1);
    }
}

std::string RunConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

int64_t RunConfig::get_i64(const std::string& key, int64_t fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        size_t used = 0;
        int64_t v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': expected integer, got '" + it->second + "'");
    }
}

double RunConfig::get_f64(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': expected number, got '" + it->second + "'");
    }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ParseError("config key '" + key + "': expected boolean, got '" + v + "'");
}

std::vector<int64_t> RunConfig::get_i64_list(const std::string& key, const std::vector<int64_t>& fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::vector<int64_t> out;
    std::stringstream ss(it->second);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::string t = trim(cell);
        if (t.empty()) continue;
        try {
            out.push_back(std::stoll(t));
        } catch (const std::exception&) {
            throw ParseError("config key '" + key + "': expected integer list, got '" + it->second + "'");
        }
    }
    return out;
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& [k, v] : values) out += k + "=" + v + "\n";
    return out;
}

void write_manifest(const std::string& path, const std::string& command, const RunConfig& config, uint64_t seed,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    double wall_seconds) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open manifest '" + path + "' for writing");
    std::time_t t = std::time(nullptr);
    char tbuf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(tbuf, sizeof(tbuf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    os << "command=" << command << "\n";
    os << "created=" << tbuf << "\n";
    os << "seed=" << seed << "\n";
    os << "wall_seconds=" << wall_seconds << "\n";
    for (const auto& [k, v] : config.values) os << "config." << k << "=" << v << "\n";
    for (const auto& p : inputs) os << "input." << p << "=" << digest_hex(fnv1a64_file(p)) << "\n";
    for (const auto& p : outputs) os << "output." << p << "=" << digest_hex(fnv1a64_file(p)) << "\n";
    if (!os) throw IoError("write failed for manifest '" + path + "'");
}

}  // namespace dnadiff
