// checkpoint.hpp - binary checkpoint container and JSON configuration.
//
// Layout: the 8-byte magic "PGDVAECK", a little-endian u64 header length,
// a UTF-8 JSON header, then every tensor as row-major little-endian
// float64. The header holds the model config, the training config, the
// completed epoch, the optimizer step and a tensor index
// [{name, group, rows, cols, offset}] with offsets counted in doubles.

#ifndef PGDVAE_CHECKPOINT_HPP
#define PGDVAE_CHECKPOINT_HPP

#include "pgdvae/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace pgd {

struct Checkpoint {
  TrainState state;
  TrainConfig config;
};

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const TrainConfig& config);

/// Throws on a malformed container or on tensors whose shapes disagree with
/// the stored model config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const ModelConfig& c);
nlohmann::ordered_json to_json(const TrainConfig& c);

/// Overlays the keys present in `j` on `base`; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::ordered_json& j, TrainConfig base = {});
ModelConfig model_config_from_json(const nlohmann::ordered_json& j, ModelConfig base = {});

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

}  // namespace pgd

#endif  // PGDVAE_CHECKPOINT_HPP
