#include "dnadiff/checkpoint.hpp"

#include <fstream>

#include "dnadiff/wire.hpp"

namespace dnadiff {

namespace {
constexpr char kMagic[4] = {'D', 'D', 'K', 'P'};
constexpr uint32_t kVersion = 1;
}  // namespace

void StateDict::put(const std::string& name, nn::Tensor<float> t) {
    auto it = index.find(name);
    if (it != index.end()) {
        records[it->second].second = std::move(t);
        return;
    }
    index[name] = records.size();
    records.emplace_back(name, std::move(t));
}

const nn::Tensor<float>& StateDict::get(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw ValueError("checkpoint record '" + name + "' not found");
    return records[it->second].second;
}

void save_checkpoint(const std::string& path, const StateDict& sd, CheckpointPrecision precision) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    wire::put_u32(os, kVersion);
    wire::put_u32(os, static_cast<uint32_t>(precision));
    wire::put_u64(os, sd.records.size());
    for (const auto& [name, t] : sd.records) {
        wire::put_string(os, name);
        wire::put_u64(os, t.rank());
        for (int64_t d : t.shape) wire::put_u64(os, static_cast<uint64_t>(d));
        if (precision == CheckpointPrecision::Single)
            for (int64_t i = 0; i < t.numel(); ++i) wire::put_f32(os, t[i]);
        else
            for (int64_t i = 0; i < t.numel(); ++i) wire::put_f64(os, static_cast<double>(t[i]));
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

StateDict load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("'" + path + "' is not a DDKP checkpoint (bad magic)");
    uint32_t version = wire::get_u32(is, "checkpoint version");
    if (version != kVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version) + " in '" + path + "'");
    uint32_t prec = wire::get_u32(is, "checkpoint precision flag");
    if (prec > 1) throw ParseError("bad precision flag in '" + path + "'");
    uint64_t count = wire::get_u64(is, "checkpoint record count");
    StateDict sd;
    for (uint64_t r = 0; r < count; ++r) {
        std::string name = wire::get_string(is, "record name");
        uint64_t rank = wire::get_u64(is, "record rank");
        if (rank > 8) throw ParseError("implausible tensor rank in '" + path + "'");
        nn::Shape shape(rank);
        int64_t numel = 1;
        for (uint64_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int64_t>(wire::get_u64(is, "record dims"));
            if (shape[d] <= 0) throw ParseError("non-positive dimension in record '" + name + "'");
            numel *= shape[d];
        }
        nn::Tensor<float> t(shape);
        if (prec == 0)
            for (int64_t i = 0; i < numel; ++i) t[i] = wire::get_f32(is, "record payload");
        else
            for (int64_t i = 0; i < numel; ++i) t[i] = static_cast<float>(wire::get_f64(is, "record payload"));
        sd.put(name, std::move(t));
    }
    return sd;
}

StateDict collect_state(const std::vector<nn::Parameter<float>*>& params) {
    StateDict sd;
    for (const auto* p : params) sd.put(p->name, p->var->value);
    return sd;
}

void restore_state(const StateDict& sd, const std::vector<nn::Parameter<float>*>& params) {
    for (auto* p : params) {
        const nn::Tensor<float>& t = sd.get(p->name);
        if (t.shape != p->var->value.shape)
            throw ShapeError("checkpoint record '" + p->name + "' has shape " + nn::shape_str(t.shape) +
                             ", expected " + nn::shape_str(p->var->value.shape));
        p->var->value = t;
    }
}

}  // namespace dnadiff
