#include "uigan/adversary.hpp"


namespace uigan {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

torch::Tensor crop_box(const torch::Tensor& image, const Box& box) {
  const auto batched = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (batched.dim() != 4 || batched.size(0) != 1) throw Error("crop_box: expected a single image");
  if (box.empty() || box.x < 0 || box.y < 0 || box.x + box.w > batched.size(3) || box.y + box.h > batched.size(2)) {
    throw Error("crop_box: box outside image");
  }
  auto crop = batched.slice(2, box.y, box.y + box.h).slice(3, box.x, box.x + box.w);
  if (box.w != kCropSide || box.h != kCropSide) {
    crop = F::interpolate(crop, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{kCropSide, kCropSide})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
  }
  return image.dim() == 3 ? crop.squeeze(0) : crop;
}

torch::Tensor crop_occluded_region(const torch::Tensor& image, const Mask& mask) {
  if (mask.is_empty()) throw Error("crop_occluded_region: empty mask (Local-D inapplicable)");
  return crop_box(image, mask.box);
}

torch::Tensor crop_regions(const torch::Tensor& images, const std::vector<Box>& boxes, std::vector<int64_t>* kept) {
  if (static_cast<int64_t>(boxes.size()) != images.size(0)) throw Error("crop_regions: one box per sample required");
  std::vector<torch::Tensor> crops;
  if (kept) kept->clear();
  for (int64_t i = 0; i < images.size(0); ++i) {
    if (boxes[static_cast<size_t>(i)].empty()) continue;
    crops.push_back(crop_box(images.slice(0, i, i + 1), boxes[static_cast<size_t>(i)]));
    if (kept) kept->push_back(i);
  }
  if (crops.empty()) return torch::empty({0, 3, kCropSide, kCropSide}, images.options());
  return torch::cat(crops, 0);
}

DiscriminatorImpl::DiscriminatorImpl(int input_side, int base_channels) : side_(input_side) {
  features = register_module("features", nn::Sequential());
  int in = 3;
  const int widths[] = {base_channels / 2, base_channels, 2 * base_channels, 2 * base_channels};
  for (int width : widths) {
    features->push_back(nn::Conv2d(nn::Conv2dOptions(in, width, 4).stride(2).padding(1)));
    features->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = width;
  }
  const int out_side = input_side / 16;
  classifier = register_module("classifier", nn::Linear(in * out_side * out_side, 1));
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(2) != side_ || x.size(3) != side_) {
    throw Error("discriminator: expected [B, 3, " + std::to_string(side_) + ", " + std::to_string(side_) + "]");
  }
  return classifier(features->forward(x).flatten(1)).squeeze(1);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) { return torch::sigmoid(logits(x)); }

Discriminators Discriminators::make(const ModelConfig& config) {
  std::lock_guard lock(torch_seed_mutex());
  torch::manual_seed(config.seed + 1);
  return {Discriminator(kCropSide, config.disc_channels), Discriminator(kHighRes, config.disc_channels)};
}

std::vector<torch::Tensor> Discriminators::parameters() const {
  auto p = local->parameters();
  for (auto& t : global->parameters()) p.push_back(t);
  return p;
}

}  // namespace uigan
