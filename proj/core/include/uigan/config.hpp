#pragma once

#include "uigan/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>

namespace uigan {

/// Architecture hyperparameters shared by every stage.
struct ModelConfig {
  int channels = 64;          // C, feature width of every CM-TM and TUN
  int residual_blocks = 4;    // R, residual blocks per TUN
  int landmarks = kNumLandmarks;
  // Attention tokens are k x k patches so that the token grid never exceeds
  // attn_max_side^2 positions; stages at or below this side attend per pixel.
  int attn_max_side = 16;
  int disc_channels = 32;     // base width of Local-D and Global-D
  uint64_t seed = 0;

  int token_patch(int feature_side) const {
    return feature_side > attn_max_side ? feature_side / attn_max_side : 1;
  }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace uigan
