#pragma once

#include <cstdint>
#include <string>

#include "loraflow/model.hpp"
#include "loraflow/params.hpp"

namespace loraflow {

/// Training progress carried inside a checkpoint.
struct TrainMeta {
    int64_t step = 0;
    std::string phase = "synthetic";
    uint64_t seed = 0;
};

struct Checkpoint {
    ModelConfig config;
    ParamStore store;
    TrainMeta meta;
};

/// Versioned binary container: magic/version, a JSON block echoing the model
/// config and training meta, then two little-endian float32 tensor tables
/// (parameter values, Adam moments). Layout details in docs/formats.md.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamStore& store, const TrainMeta& meta);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace loraflow
