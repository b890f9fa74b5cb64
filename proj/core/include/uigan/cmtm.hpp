#pragma once

#include "uigan/config.hpp"

#include <torch/torch.h>

namespace uigan {

/// Result of one cross-modal attention pass (batched).
struct AttentionOutput {
  torch::Tensor attention;   // [B, n, n]; rows: landmark tokens, cols: facial tokens
  torch::Tensor priors;      // F_P, [B, C, h, w]
  torch::Tensor appearance;  // F_A, [B, C, h, w]
};

/// Trainable landmark-feature encoder. Stage 1 sees only the LR image;
/// later stages see the previous stage's image plus its upsampled priors.
class LandmarkEncoderImpl : public torch::nn::Module {
 public:
  LandmarkEncoderImpl(int stage, const ModelConfig& config);

  torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& prior_heatmaps = {});

  torch::nn::Conv2d& final_layer() { return conv4_; }
  int side() const { return side_; }

 private:
  int stage_;
  int side_;
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr}, conv4_{nullptr};
};
TORCH_MODULE(LandmarkEncoder);

/// Single-head cross attention between landmark features (queries) and
/// facial features (keys). The attention matrix is reused in both
/// directions:
///   F_P = fuse_p(F_L + A V_C),  F_A = fuse_a(F_C + A^T V_L)
/// where the fusion convolutions start as the identity.
class CrossModalAttentionImpl : public torch::nn::Module {
 public:
  CrossModalAttentionImpl(int channels, int token_patch = 1);

  AttentionOutput forward(const torch::Tensor& landmark_features, const torch::Tensor& facial_features);

  torch::nn::Conv2d query{nullptr}, key{nullptr}, value_facial{nullptr}, value_landmark{nullptr};
  torch::nn::Conv2d fuse_priors{nullptr}, fuse_appearance{nullptr};

  int token_patch() const { return patch_; }

 private:
  int patch_;
};
TORCH_MODULE(CrossModalAttention);

/// Maps prior features to K landmark heatmaps squashed into [0, 1].
class HeatmapDecoderImpl : public torch::nn::Module {
 public:
  HeatmapDecoderImpl(int channels, int landmarks);

  torch::Tensor forward(const torch::Tensor& prior_features);

  torch::nn::Conv2d hidden{nullptr}, out{nullptr};
};
TORCH_MODULE(HeatmapDecoder);

}  // namespace uigan
