#include "uigan/generator.hpp"

#include "uigan/datagen.hpp"


namespace uigan {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

nn::Conv2d conv(int in, int out, int kernel) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).padding(kernel / 2));
}

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  conv1 = register_module("conv1", conv(channels, channels, 3));
  conv2 = register_module("conv2", conv(channels, channels, 3));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + conv2(lrelu(conv1(x))); }

TransformativeUpsamplerImpl::TransformativeUpsamplerImpl(int channels, int residual_blocks) {
  fuse = register_module("fuse", conv(2 * channels, channels, 3));
  blocks = register_module("blocks", nn::ModuleList());
  for (int i = 0; i < residual_blocks; ++i) blocks->push_back(ResidualBlock(channels));
  expand = register_module("expand", conv(channels, 4 * channels, 3));
  head = register_module("head", conv(channels, 3, 1));
  torch::NoGradGuard guard;
  head->weight.mul_(0.1);
  head->bias.zero_();
}

torch::Tensor TransformativeUpsamplerImpl::refine(const torch::Tensor& prior_features, const torch::Tensor& appearance) {
  if (prior_features.sizes() != appearance.sizes()) throw Error("tun_forward: F_P and F_A shapes differ");
  auto x = fuse(torch::cat({prior_features, appearance}, 1));
  for (const auto& block : *blocks) x = block->as<ResidualBlock>()->forward(x);
  return x;
}

TunOutput TransformativeUpsamplerImpl::forward(const torch::Tensor& prior_features, const torch::Tensor& appearance,
                                               const torch::Tensor& base) {
  auto features = lrelu(torch::pixel_shuffle(expand(refine(prior_features, appearance)), 2));
  auto residual = head(features);
  if (base.defined() && base.sizes() != residual.sizes()) throw Error("tun_forward: base image has the wrong shape");
  auto image = torch::clamp(base.defined() ? base + residual : residual + 0.5, 0.0, 1.0);
  return {features, image};
}

UIBlockImpl::UIBlockImpl(int stage, const ModelConfig& config) : stage_(stage) {
  const int c = config.channels;
  encoder = register_module("encoder", LandmarkEncoder(stage, config));
  if (stage == 1) {
    stem = register_module("stem", nn::Sequential(conv(3, c, 3), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)),
                                                  conv(c, c, 3)));
  }
  cmtm = register_module("cmtm", CrossModalAttention(c, config.token_patch(stage_feature_side(stage))));
  decoder = register_module("decoder", HeatmapDecoder(c, config.landmarks));
  prior_embed = register_module("prior_embed", conv(config.landmarks, c, 3));
  tun = register_module("tun", TransformativeUpsampler(c, config.residual_blocks));
}

GeneratorImpl::GeneratorImpl(const ModelConfig& config) : config_(config) {
  for (int s = 1; s <= kNumStages; ++s) {
    blocks_[s - 1] = register_module("block" + std::to_string(s), UIBlock(s, config));
  }
}

StageOutputs GeneratorImpl::forward(const torch::Tensor& lr, const ForwardOptions& options) {
  if (lr.dim() != 4 || lr.size(1) != 3 || lr.size(2) != kLowRes || lr.size(3) != kLowRes) {
    throw Error("hallucinate: expected [B, 3, 16, 16] input");
  }
  if (options.last_stage < 1 || options.last_stage > kNumStages) throw Error("hallucinate: invalid last_stage");

  StageOutputs out;
  torch::Tensor image = lr, features, handoff;
  for (int s = 1; s <= options.last_stage; ++s) {
    auto& b = *blocks_[s - 1];
    const auto landmark_features = s == 1 ? b.encoder(image) : b.encoder(image, handoff);
    const auto facial_features = s == 1 ? b.stem->forward(image) : features;
    auto att = b.cmtm(landmark_features, facial_features);
    const auto estimated = b.decoder(att.priors);

    auto prior = estimated;
    if (const auto& replacement = options.override_heatmaps[s - 1]; replacement.defined()) {
      auto r = replacement.to(estimated.dtype()).expand_as(estimated);
      if (const auto& channels = options.override_channels[s - 1]; channels.defined()) {
        r = torch::where(channels.to(torch::kBool).view({1, -1, 1, 1}), r, estimated);
      }
      prior = r;
    }

    const auto prior_features = options.bypass_priors ? att.appearance : lrelu(b.prior_embed(prior));
    auto tun = b.tun(prior_features, att.appearance, upsample2x(image));

    out.images[s - 1] = tun.image;
    out.heatmaps[s - 1] = estimated;
    out.priors[s - 1] = prior;
    out.prior_features[s - 1] = att.priors;
    image = tun.image;
    features = tun.features;
    handoff = upsample2x(prior);
  }
  out.stages = options.last_stage;
  return out;
}

Generator make_generator(const ModelConfig& config) {
  std::lock_guard lock(torch_seed_mutex());
  torch::manual_seed(config.seed);
  return Generator(config);
}

StageOutputs hallucinate(Generator& generator, const torch::Tensor& lr) {
  check_image(lr, kLowRes);
  return generator->forward(lr.unsqueeze(0));
}

void validate_stages(const std::set<int>& stages) {
  for (int s : stages) {
    if (s < 1 || s > kNumStages) throw Error("invalid stage " + std::to_string(s) + " (expected 1..3)");
  }
}

StageOutputs hallucinate_with_prior_override(Generator& generator, const torch::Tensor& lr, const Landmarks& edited,
                                             const std::set<int>& stages, const torch::Tensor& channels) {
  check_image(lr, kLowRes);
  validate_stages(stages);
  if (edited.size() != generator->config().landmarks) throw Error("prior override: landmark count mismatch");
  ForwardOptions options;
  for (int s : stages) {
    options.override_heatmaps[s - 1] = render_heatmaps(edited, stage_feature_side(s)).unsqueeze(0);
    if (channels.defined()) options.override_channels[s - 1] = channels;
  }
  return generator->forward(lr.unsqueeze(0), options);
}

}  // namespace uigan
