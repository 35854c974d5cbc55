#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "promptface/model.hpp"

namespace promptface {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    std::uint64_t seed = 0;
    int version = kCheckpointVersion;
};

/// Single JSON document: version, seed, model config, dataset registry
/// (descriptors, mean shapes) and every tensor keyed by name. Doubles are
/// written with round-trip precision, so save/load is lossless.
nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json tensor_to_json(const Matrix& m);
Matrix tensor_from_json(const nlohmann::json& j);

}  // namespace promptface
