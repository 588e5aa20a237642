#include "loraflow/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace loraflow {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'L', 'F', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) write_u64(os, static_cast<uint64_t>(d));
    std::vector<float> f(t.data.size());
    for (size_t i = 0; i < t.data.size(); ++i) f[i] = static_cast<float>(t.data[i]);
    os.write(reinterpret_cast<const char*>(f.data()),
             static_cast<std::streamsize>(f.size() * sizeof(float)));
}

std::pair<std::string, Tensor> read_tensor(std::istream& is) {
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t rank = read_u32(is);
    std::vector<int64_t> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_u64(is));
    Tensor t(shape);
    std::vector<float> f(t.data.size());
    is.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor table");
    for (size_t i = 0; i < f.size(); ++i) t.data[i] = static_cast<double>(f[i]);
    return {std::move(name), std::move(t)};
}

nlohmann::json config_json(const ModelConfig& c) {
    return {{"width", c.width},
            {"depth", c.depth},
            {"heads", c.heads},
            {"downsample_factor", c.downsample_factor},
            {"fourier_dim", c.fourier_dim},
            {"cond_dim", c.cond_dim},
            {"sf_max", c.sf_max},
            {"ff_mult", c.ff_mult},
            {"rope_base", c.rope_base}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.width = j.at("width").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.downsample_factor = j.at("downsample_factor").get<int>();
    c.fourier_dim = j.at("fourier_dim").get<int>();
    c.cond_dim = j.at("cond_dim").get<int>();
    c.sf_max = j.at("sf_max").get<int>();
    c.ff_mult = j.at("ff_mult").get<int>();
    c.rope_base = j.at("rope_base").get<double>();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamStore& store, const TrainMeta& meta) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);

    nlohmann::json header{{"model", config_json(config)},
                          {"meta",
                           {{"step", meta.step}, {"phase", meta.phase}, {"seed", meta.seed}}}};
    const std::string hj = header.dump();
    write_u64(os, hj.size());
    os.write(hj.data(), static_cast<std::streamsize>(hj.size()));

    write_u64(os, store.entries().size());
    for (const auto& [name, e] : store.entries()) write_tensor(os, name, e.value);
    write_u64(os, 2 * store.entries().size());
    for (const auto& [name, e] : store.entries()) {
        write_tensor(os, "m." + name, e.m);
        write_tensor(os, "v." + name, e.v);
    }
    os.close();
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != std::string(kMagic, 4))
        throw std::runtime_error("not a checkpoint file: " + path);
    const uint32_t version = read_u32(is);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    const uint64_t hlen = read_u64(is);
    std::string hj(hlen, '\0');
    is.read(hj.data(), static_cast<std::streamsize>(hlen));
    Checkpoint ck;
    try {
        const nlohmann::json header = nlohmann::json::parse(hj);
        ck.config = config_from_json(header.at("model"));
        ck.meta.step = header.at("meta").at("step").get<int64_t>();
        ck.meta.phase = header.at("meta").at("phase").get<std::string>();
        ck.meta.seed = header.at("meta").at("seed").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed checkpoint header: " + std::string(e.what()));
    }
    ck.config.validate();

    const uint64_t n_params = read_u64(is);
    for (uint64_t i = 0; i < n_params; ++i) {
        auto [name, t] = read_tensor(is);
        ck.store.add(name, std::move(t));
    }
    const uint64_t n_moments = read_u64(is);
    for (uint64_t i = 0; i < n_moments; ++i) {
        auto [name, t] = read_tensor(is);
        if (name.size() < 3 || name[1] != '.')
            throw std::runtime_error("malformed optimizer tensor name: " + name);
        const std::string base = name.substr(2);
        if (!ck.store.has(base))
            throw std::runtime_error("optimizer state for unknown parameter: " + base);
        if (name[0] == 'm')
            ck.store.entry(base).m = std::move(t);
        else if (name[0] == 'v')
            ck.store.entry(base).v = std::move(t);
        else
            throw std::runtime_error("malformed optimizer tensor name: " + name);
    }
    return ck;
}

}  // namespace loraflow
