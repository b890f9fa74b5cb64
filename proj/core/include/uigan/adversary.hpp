#pragma once

#include "uigan/config.hpp"
#include "uigan/types.hpp"

#include <torch/torch.h>

#include <vector>

namespace uigan {

inline constexpr int kCropSide = 64;

/// Crops `box` (HR pixels) out of a [3, 128, 128] or [1, 3, 128, 128]
/// image and bilinearly resamples it to 64x64. Differentiable.
torch::Tensor crop_box(const torch::Tensor& image, const Box& box);

/// Local-D input for one sample. Throws on an empty mask.
torch::Tensor crop_occluded_region(const torch::Tensor& image, const Mask& mask);

/// Crops every sample of `images` [B, 3, 128, 128] whose box is non-empty.
/// Returns [B', 3, 64, 64]; `kept` receives the batch indices used.
torch::Tensor crop_regions(const torch::Tensor& images, const std::vector<Box>& boxes, std::vector<int64_t>* kept = nullptr);

/// Strided convolutional classifier with a logistic output.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(int input_side, int base_channels);

  /// Probabilities in (0, 1), shape [B].
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor logits(const torch::Tensor& x);

  torch::nn::Sequential features{nullptr};
  torch::nn::Linear classifier{nullptr};

 private:
  int side_;
};
TORCH_MODULE(Discriminator);

/// Local-D (64x64 region crops) and Global-D (128x128 faces), with
/// independent parameters.
struct Discriminators {
  Discriminator local{nullptr};
  Discriminator global{nullptr};

  static Discriminators make(const ModelConfig& config);
  std::vector<torch::Tensor> parameters() const;
};

}  // namespace uigan
