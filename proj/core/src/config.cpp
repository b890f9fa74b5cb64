#include "uigan/config.hpp"

namespace uigan {

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"channels", c.channels},         {"residual_blocks", c.residual_blocks}, {"landmarks", c.landmarks},
       {"attn_max_side", c.attn_max_side}, {"disc_channels", c.disc_channels},     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const ModelConfig d;
  c.channels = j.value("channels", d.channels);
  c.residual_blocks = j.value("residual_blocks", d.residual_blocks);
  c.landmarks = j.value("landmarks", d.landmarks);
  c.attn_max_side = j.value("attn_max_side", d.attn_max_side);
  c.disc_channels = j.value("disc_channels", d.disc_channels);
  c.seed = j.value("seed", d.seed);
  if (c.channels < 1 || c.residual_blocks < 0 || c.landmarks < 5 || c.attn_max_side < 1 || c.disc_channels < 1) {
    throw Error("model config: invalid sizes");
  }
}

}  // namespace uigan
