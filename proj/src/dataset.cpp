#include "loraflow/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace loraflow {

static_assert(std::endian::native == std::endian::little,
              "dataset payload writer assumes a little-endian host");

std::vector<SampleRecord> generate_synthetic(const std::vector<int>& sf_set, double bw) {
    const ChirpDirection both[] = {ChirpDirection::Up, ChirpDirection::Down};
    return generate_synthetic(sf_set, bw, both);
}

std::vector<SampleRecord> generate_synthetic(const std::vector<int>& sf_set, double bw,
                                             std::span<const ChirpDirection> directions) {
    std::vector<SampleRecord> out;
    for (int sf : sf_set) {
        for (ChirpDirection dir : directions) {
            LoRaParams params{sf, bw, dir};
            params.validate();
            const int64_t n = params.symbol_len();
            for (int64_t m = 0; m < n; ++m) {
                SampleRecord rec;
                rec.iq = modulate_symbol(params, m);
                rec.label = m;
                rec.sf = sf;
                rec.direction = dir;
                rec.source = SampleSource::Synthetic;
                out.push_back(std::move(rec));
            }
        }
    }
    return out;
}

void save_dataset(const std::string& path, std::span<const SampleRecord> records, double bw) {
    if (records.empty()) throw std::invalid_argument("save_dataset: no records");
    const int sf = records[0].sf;
    const ChirpDirection dir = records[0].direction;
    const int64_t n = int64_t{1} << sf;
    nlohmann::json labels = nlohmann::json::array();
    for (const SampleRecord& r : records) {
        if (r.sf != sf || r.direction != dir)
            throw std::invalid_argument("save_dataset: records must share (sf, direction)");
        if (static_cast<int64_t>(r.iq.size()) != n)
            throw std::invalid_argument("save_dataset: record length != 2^sf");
        labels.push_back(r.label);
    }

    std::ofstream payload(path, std::ios::binary | std::ios::trunc);
    if (!payload) throw std::runtime_error("save_dataset: cannot open " + path);
    std::vector<float> row(2 * n);
    for (const SampleRecord& r : records) {
        for (int64_t i = 0; i < n; ++i) {
            row[2 * i] = static_cast<float>(r.iq[i].real());
            row[2 * i + 1] = static_cast<float>(r.iq[i].imag());
        }
        payload.write(reinterpret_cast<const char*>(row.data()),
                      static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    payload.close();
    if (!payload) throw std::runtime_error("save_dataset: write failed for " + path);

    nlohmann::json sidecar{{"version", 1},
                           {"sf", sf},
                           {"bw", bw},
                           {"direction", to_string(dir)},
                           {"count", records.size()},
                           {"labels", labels}};
    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side) throw std::runtime_error("save_dataset: cannot open " + path + ".json");
    side << sidecar.dump(2) << "\n";
}

std::vector<SampleRecord> load_dataset(const std::string& path, SampleSource source) {
    nlohmann::json sidecar;
    {
        std::ifstream side(path + ".json");
        if (!side)
            throw std::runtime_error("malformed dataset header: missing sidecar " + path +
                                     ".json");
        try {
            side >> sidecar;
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("malformed dataset header: " + std::string(e.what()));
        }
    }
    int version, sf;
    int64_t count;
    std::string dir_str;
    std::vector<int64_t> labels;
    try {
        version = sidecar.at("version").get<int>();
        sf = sidecar.at("sf").get<int>();
        count = sidecar.at("count").get<int64_t>();
        dir_str = sidecar.at("direction").get<std::string>();
        labels = sidecar.at("labels").get<std::vector<int64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed dataset header: " + std::string(e.what()));
    }
    if (version != 1)
        throw std::runtime_error("malformed dataset header: unsupported version " +
                                 std::to_string(version));
    if (sf < 5 || sf > 12)
        throw std::runtime_error("malformed dataset header: sf out of range");
    if (static_cast<int64_t>(labels.size()) != count)
        throw std::runtime_error("malformed dataset header: label count " +
                                 std::to_string(labels.size()) + " != count " +
                                 std::to_string(count));
    const ChirpDirection dir = direction_from_string(dir_str);
    const int64_t n = int64_t{1} << sf;
    for (int64_t label : labels) {
        if (label < 0 || label >= n)
            throw std::runtime_error("label out of range: " + std::to_string(label) +
                                     " not in [0, " + std::to_string(n) + ")");
    }

    std::ifstream payload(path, std::ios::binary | std::ios::ate);
    if (!payload) throw std::runtime_error("cannot open dataset payload " + path);
    const int64_t actual = static_cast<int64_t>(payload.tellg());
    const int64_t expected = count * n * 2 * static_cast<int64_t>(sizeof(float));
    if (actual != expected)
        throw std::runtime_error("truncated dataset payload: expected " +
                                 std::to_string(expected) + " bytes, got " +
                                 std::to_string(actual));
    payload.seekg(0);

    std::vector<SampleRecord> out;
    out.reserve(count);
    std::vector<float> row(2 * n);
    for (int64_t r = 0; r < count; ++r) {
        payload.read(reinterpret_cast<char*>(row.data()),
                     static_cast<std::streamsize>(row.size() * sizeof(float)));
        SampleRecord rec;
        rec.iq.resize(n);
        for (int64_t i = 0; i < n; ++i)
            rec.iq[i] = cplx(static_cast<double>(row[2 * i]), static_cast<double>(row[2 * i + 1]));
        rec.label = labels[r];
        rec.sf = sf;
        rec.direction = dir;
        rec.source = source;
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<SampleRecord> load_real(const std::string& path) {
    std::vector<SampleRecord> records = load_dataset(path, SampleSource::Real);
    for (SampleRecord& r : records) {
        const double p = mean_power(r.iq);
        if (p <= 0.0) throw std::runtime_error("real dataset record has zero power");
        const double s = 1.0 / std::sqrt(p);
        for (cplx& v : r.iq) v *= s;
    }
    return records;
}

namespace {

// class identity inside the sampler: (sf, direction, label)
using ClassKey = std::tuple<int, int, int64_t>;

ClassKey key_of(const SampleRecord& r) {
    return {r.sf, r.direction == ChirpDirection::Up ? 0 : 1, r.label};
}

}  // namespace

MixtureSampler::MixtureSampler(std::vector<SampleRecord> real, std::vector<SampleRecord> synth,
                               double p_real, uint64_t seed)
    : real_(std::move(real)), synth_(std::move(synth)), rng_(seed), p_real_(p_real) {
    if (synth_.empty())
        throw std::invalid_argument("mixture sampler requires a non-empty synthetic set");
    std::map<ClassKey, std::vector<size_t>> by_class;
    for (size_t i = 0; i < real_.size(); ++i) by_class[key_of(real_[i])].push_back(i);
    for (auto& [key, idx] : by_class) real_by_class_.push_back(std::move(idx));
}

const SampleRecord& MixtureSampler::next() {
    ++draws_;
    if (!real_by_class_.empty() && rng_.uniform() < p_real_) {
        ++real_draws_;
        const auto& klass =
            real_by_class_[rng_.uniform_int(0, static_cast<int64_t>(real_by_class_.size()) - 1)];
        return real_[klass[rng_.uniform_int(0, static_cast<int64_t>(klass.size()) - 1)]];
    }
    return synth_[rng_.uniform_int(0, static_cast<int64_t>(synth_.size()) - 1)];
}

}  // namespace loraflow
