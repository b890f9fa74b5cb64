#pragma once

#include "uigan/generator.hpp"

#include <torch/torch.h>

#include <array>
#include <memory>
#include <optional>
#include <string>

namespace uigan {

/// Weights of the staged objectives. The `use_*` switches drop whole terms
/// for loss-subset ablations; they default to the full objective.
struct LossWeights {
  double alpha = 0.01;   // identity
  double beta = 0.01;    // geometry
  double psi = 0.01;     // adversarial
  double gamma_a = 10.0; // style, stage 1
  double gamma_b = 10.0; // style, stage 2
  double gamma_c = 1.0;  // style, stage 3
  bool use_symmetry = true;
  bool use_local_adv = true;
  bool use_global_adv = true;
  // Geometry term in the objectives: squared L2 norm per map (summed over
  // pixels) when true, geometry_loss's per-pixel mean when false.
  bool geometry_pixel_sum = true;

  double gamma(int stage) const { return stage == 1 ? gamma_a : stage == 2 ? gamma_b : gamma_c; }

  /// Named loss subsets: "LG-" (mse+h), "LG+" (mse+id+h), "LG++" (+sym),
  /// "LG*" (+style+local adv) and "LG" (everything).
  static LossWeights preset(const std::string& name);
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// Named taps of a frozen feature network.
struct FeatureTaps {
  torch::Tensor identity;              // relu3_2-like tap
  std::array<torch::Tensor, 3> style;  // pool1/2/3-like taps
};

/// Frozen perceptual feature network. Implementations never update their
/// parameters; a pretrained network can be slotted in behind this interface.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual FeatureTaps taps(const torch::Tensor& images) = 0;
  virtual void to(torch::Dtype dtype) = 0;
};

/// Seeded six-convolution stand-in with VGG-like tap placement:
/// conv-conv-pool1, conv-conv-pool2, conv-conv(relu3_2)-pool3.
class SeededFeatureExtractor final : public FeatureExtractor {
 public:
  explicit SeededFeatureExtractor(uint64_t seed = 1234, int base_channels = 8);
  FeatureTaps taps(const torch::Tensor& images) override;
  void to(torch::Dtype dtype) override;

 private:
  torch::nn::Sequential block1_{nullptr}, block2_{nullptr}, block3_{nullptr};
};

std::shared_ptr<FeatureExtractor> default_feature_extractor();

// Per-element-mean losses on batched [B, C, H, W] tensors (a leading batch
// dimension is optional). All return scalar tensors.
torch::Tensor intensity_loss(const torch::Tensor& pred, const torch::Tensor& gt);
torch::Tensor identity_loss(const torch::Tensor& pred, const torch::Tensor& gt, FeatureExtractor& fx);
torch::Tensor symmetry_loss(const torch::Tensor& pred);
torch::Tensor geometry_loss(const torch::Tensor& est, const torch::Tensor& gt);
/// [.., C, H, W] -> [.., C, C], scaled by 1 / (C H W).
torch::Tensor gram(const torch::Tensor& features);
torch::Tensor style_loss(const torch::Tensor& pred, const torch::Tensor& gt, FeatureExtractor& fx);

inline constexpr double kScoreEpsilon = 1e-7;
/// -[ln d_real + ln(1 - d_fake)], batch-averaged. Scores must lie in [0, 1];
/// they are clamped to [eps, 1 - eps] before the logarithm.
torch::Tensor d_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake);
/// -ln d_fake, batch-averaged.
torch::Tensor g_adv_loss(const torch::Tensor& d_fake);

/// Individual terms of one stage's objective.
struct StageTerms {
  torch::Tensor sym, mse, id, h, style;
};

struct AdversarialTerms {
  torch::Tensor local;   // L^l_adv; undefined when no sample has a mask
  torch::Tensor global;  // L^g_adv
};

struct StageLosses {
  torch::Tensor net1, net2, net3, total;
};

/// Combines per-stage terms into L_net1..3 and L_G. Undefined terms (stages
/// not evaluated, adversarial terms inactive) contribute nothing.
StageLosses compose_losses(const std::array<StageTerms, kNumStages>& terms,
                           const std::optional<AdversarialTerms>& adversarial, const LossWeights& weights);

/// Supervision targets for a batch: images at 32/64/128, heatmaps at 16/32/64.
struct StageTargets {
  std::array<torch::Tensor, kNumStages> images;
  std::array<torch::Tensor, kNumStages> heatmaps;
};

/// Evaluates the similarity terms of stages first_stage..outputs.stages.
std::array<StageTerms, kNumStages> stage_terms(const StageOutputs& outputs, const StageTargets& targets,
                                               FeatureExtractor& fx, const LossWeights& weights, int first_stage = 1);

/// Discriminator probabilities on generated samples.
struct DiscriminatorScores {
  torch::Tensor local;   // Local-D on crops of masked samples; may be undefined
  torch::Tensor global;  // Global-D on final images
};

/// L_net1, L_net2, L_net3 and L_G for a generator pass. `d_scores` is
/// present only when the adversarial terms are active.
StageLosses stage_losses(const StageOutputs& outputs, const StageTargets& targets, FeatureExtractor& fx,
                         const LossWeights& weights, const std::optional<DiscriminatorScores>& d_scores = std::nullopt,
                         int first_stage = 1);

}  // namespace uigan
