#include "uigan/cmtm.hpp"

#include "uigan/datagen.hpp"

#include <cmath>

namespace uigan {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

nn::Conv2d conv(int in, int out, int kernel) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).padding(kernel / 2));
}

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) throw Error(std::string("cross_attention: non-finite ") + what);
}

// [B, D, h, w] -> [B, n, D * p * p] with p x p patch tokens.
torch::Tensor tokens(const torch::Tensor& x, int patch) {
  auto t = patch > 1 ? torch::pixel_unshuffle(x, patch) : x;
  return t.flatten(2).transpose(1, 2);
}

torch::Tensor untokens(const torch::Tensor& t, int patch, int64_t h, int64_t w) {
  auto x = t.transpose(1, 2).reshape({t.size(0), t.size(2), h / patch, w / patch});
  return patch > 1 ? torch::pixel_shuffle(x, patch) : x;
}

}  // namespace

LandmarkEncoderImpl::LandmarkEncoderImpl(int stage, const ModelConfig& config)
    : stage_(stage), side_(stage_feature_side(stage)) {
  const int in = stage == 1 ? 3 : 3 + config.landmarks;
  const int c = config.channels;
  conv1_ = register_module("conv1", conv(in, c, 3));
  conv2_ = register_module("conv2", conv(c, c, 3));
  conv3_ = register_module("conv3", conv(c, c, 3));
  conv4_ = register_module("conv4", conv(c, c, 3));
}

torch::Tensor LandmarkEncoderImpl::forward(const torch::Tensor& image, const torch::Tensor& prior_heatmaps) {
  if (image.dim() != 4 || image.size(2) != side_ || image.size(3) != side_) {
    throw Error("encode_landmark_features: image resolution does not match stage " + std::to_string(stage_));
  }
  auto x = image;
  if (stage_ > 1) {
    if (!prior_heatmaps.defined() || prior_heatmaps.size(2) != side_) {
      throw Error("encode_landmark_features: stage " + std::to_string(stage_) + " needs priors at " +
                  std::to_string(side_));
    }
    x = torch::cat({image, prior_heatmaps}, 1);
  }
  x = lrelu(conv1_(x));
  x = lrelu(conv2_(x));
  x = lrelu(conv3_(x));
  return conv4_(x);
}

CrossModalAttentionImpl::CrossModalAttentionImpl(int channels, int token_patch) : patch_(token_patch) {
  query = register_module("query", conv(channels, channels, 1));
  key = register_module("key", conv(channels, channels, 1));
  value_facial = register_module("value_facial", conv(channels, channels, 1));
  value_landmark = register_module("value_landmark", conv(channels, channels, 1));
  fuse_priors = register_module("fuse_priors", conv(channels, channels, 1));
  fuse_appearance = register_module("fuse_appearance", conv(channels, channels, 1));
  torch::NoGradGuard guard;
  for (auto* fuse : {&fuse_priors, &fuse_appearance}) {
    (*fuse)->weight.zero_();
    (*fuse)->weight.squeeze(-1).squeeze(-1).fill_diagonal_(1.0);
    (*fuse)->bias.zero_();
  }
}

AttentionOutput CrossModalAttentionImpl::forward(const torch::Tensor& landmark_features,
                                                 const torch::Tensor& facial_features) {
  if (landmark_features.sizes() != facial_features.sizes() || landmark_features.dim() != 4) {
    throw Error("cross_attention: F_L and F_C must share [B, C, h, w]");
  }
  require_finite(landmark_features, "landmark features");
  require_finite(facial_features, "facial features");
  const int64_t h = landmark_features.size(2), w = landmark_features.size(3);
  if (h % patch_ != 0 || w % patch_ != 0) throw Error("cross_attention: side not divisible by token patch");

  const auto q = tokens(query(landmark_features), patch_);
  const auto k = tokens(key(facial_features), patch_);
  const auto v_facial = tokens(value_facial(facial_features), patch_);
  const auto v_landmark = tokens(value_landmark(landmark_features), patch_);

  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(2)));
  const auto attention = torch::softmax(torch::bmm(q, k.transpose(1, 2)) * scale, -1);

  const auto to_landmark = untokens(torch::bmm(attention, v_facial), patch_, h, w);
  const auto to_facial = untokens(torch::bmm(attention.transpose(1, 2), v_landmark), patch_, h, w);
  return {attention, fuse_priors(landmark_features + to_landmark), fuse_appearance(facial_features + to_facial)};
}

HeatmapDecoderImpl::HeatmapDecoderImpl(int channels, int landmarks) {
  hidden = register_module("hidden", conv(channels, channels, 3));
  out = register_module("out", conv(channels, landmarks, 1));
  // Start near the mean target value (about 3% of a Gaussian map is lit);
  // starting at 0.5 drives the logistic into saturation within a few steps.
  torch::NoGradGuard guard;
  out->weight.mul_(0.1);
  out->bias.fill_(-3.5);
}

torch::Tensor HeatmapDecoderImpl::forward(const torch::Tensor& prior_features) {
  return torch::sigmoid(out(lrelu(hidden(prior_features))));
}

}  // namespace uigan
