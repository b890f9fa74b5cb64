#pragma once

#include "uigan/cmtm.hpp"
#include "uigan/config.hpp"

#include <torch/torch.h>

#include <array>
#include <set>

namespace uigan {

/// Per-stage products of one generator pass. Index s-1 holds stage s.
struct StageOutputs {
  std::array<torch::Tensor, kNumStages> images;          // [B, 3, 32|64|128, ...]
  std::array<torch::Tensor, kNumStages> heatmaps;        // decoded estimates, [B, K, 16|32|64, ...]
  std::array<torch::Tensor, kNumStages> priors;          // heatmaps the TUN actually consumed
  std::array<torch::Tensor, kNumStages> prior_features;  // F_P
  int stages = 0;                                        // number of stages evaluated

  const torch::Tensor& final_image() const { return images[stages - 1]; }
};

/// Knobs for a generator pass; the defaults give plain inference.
struct ForwardOptions {
  int last_stage = kNumStages;
  // P-FP ablation: the TUN receives F_A in place of the prior features.
  bool bypass_priors = false;
  // Replacement heatmaps per stage ([B|1, K, h, w]); undefined keeps the estimate.
  std::array<torch::Tensor, kNumStages> override_heatmaps;
  // Optional bool [K] per stage selecting which channels the override replaces.
  std::array<torch::Tensor, kNumStages> override_channels;
};

struct TunOutput {
  torch::Tensor features;  // [B, C, 2h, 2w]
  torch::Tensor image;     // [B, 3, 2h, 2w], clamped to [0, 1]
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Transformative upsampling net: concat -> fuse -> R residual blocks ->
/// sub-pixel 2x upscale -> RGB head. The head predicts a correction to
/// `base` (the previous image upsampled 2x), or to mid-grey without one.
class TransformativeUpsamplerImpl : public torch::nn::Module {
 public:
  TransformativeUpsamplerImpl(int channels, int residual_blocks);

  TunOutput forward(const torch::Tensor& prior_features, const torch::Tensor& appearance,
                    const torch::Tensor& base = {});
  /// Features after the residual stack, before upscaling.
  torch::Tensor refine(const torch::Tensor& prior_features, const torch::Tensor& appearance);

  torch::nn::Conv2d fuse{nullptr}, expand{nullptr}, head{nullptr};
  torch::nn::ModuleList blocks{nullptr};
};
TORCH_MODULE(TransformativeUpsampler);

/// One UI-block: landmark encoder, CM-TM, heatmap decoder, prior embedding
/// and TUN for a single 2x stage.
class UIBlockImpl : public torch::nn::Module {
 public:
  UIBlockImpl(int stage, const ModelConfig& config);

  LandmarkEncoder encoder{nullptr};
  torch::nn::Sequential stem{nullptr};  // stage 1 only: LR image -> F_C
  CrossModalAttention cmtm{nullptr};
  HeatmapDecoder decoder{nullptr};
  torch::nn::Conv2d prior_embed{nullptr};
  TransformativeUpsampler tun{nullptr};

  int stage() const { return stage_; }

 private:
  int stage_;
};
TORCH_MODULE(UIBlock);

/// The three-stage progressive generator (16 -> 32 -> 64 -> 128).
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const ModelConfig& config);

  /// Batched pass; `lr` is [B, 3, 16, 16].
  StageOutputs forward(const torch::Tensor& lr, const ForwardOptions& options = {});

  UIBlock& block(int stage) { return blocks_.at(static_cast<size_t>(stage - 1)); }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  std::array<UIBlock, kNumStages> blocks_{nullptr, nullptr, nullptr};
};
TORCH_MODULE(Generator);

/// Builds a generator with deterministic initialisation from config.seed.
Generator make_generator(const ModelConfig& config);

/// Single-image inference; `lr` is [3, 16, 16]. Outputs keep a batch dim of 1.
StageOutputs hallucinate(Generator& generator, const torch::Tensor& lr);

/// Replaces the decoded heatmaps of the selected stages by heatmaps rendered
/// from `edited` before the TUN consumes them. `channels` (bool [K]) limits
/// the replacement to some landmarks; undefined means all of them.
StageOutputs hallucinate_with_prior_override(Generator& generator, const torch::Tensor& lr,
                                             const Landmarks& edited, const std::set<int>& stages,
                                             const torch::Tensor& channels = {});

void validate_stages(const std::set<int>& stages);

}  // namespace uigan
