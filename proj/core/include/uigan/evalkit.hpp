#pragma once

#include "uigan/datagen.hpp"
#include "uigan/generator.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <string>
#include <vector>

namespace uigan {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for [0, 1] images, capped at 99 dB.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

/// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2, valid-region mean per channel, averaged over channels.
/// Accepts [C, H, W] images with H, W >= 11.
double ssim(const torch::Tensor& a, const torch::Tensor& b);

/// Argmax location of each map of a [K, r, r] stack, in HR coordinates.
Landmarks heatmap_landmarks(const torch::Tensor& heatmaps);

/// RMS landmark distance normalised by the ground-truth inter-ocular distance.
double nrmse(const Landmarks& est, const Landmarks& gt);
double landmark_nrmse(const torch::Tensor& heatmaps, const Landmarks& gt);

struct SampleScore {
  int64_t id = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double nrmse = 0.0;
};

struct EvalReport {
  std::string variant;
  std::vector<SampleScore> per_sample;
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  double nrmse_mean = 0.0;

  int64_t n() const { return static_cast<int64_t>(per_sample.size()); }
  void finalize();  // recomputes the means from per_sample
  nlohmann::json to_json() const;
};

/// Ablation variants: "baseline", "P-FP" (priors bypassed), "P+GT"
/// (ground-truth heatmaps injected) and mask bins "m1".."m5".
const std::vector<std::string>& prior_variants();
const std::vector<std::string>& mask_variants();
int mask_bin_side(const std::string& variant);  // m1..m5 -> 16, 24, 32, 48, 64

/// Scores the final-stage outputs over a dataset for one variant.
EvalReport evaluate(Generator& generator, const Dataset& dataset, const std::string& variant = "baseline",
                    int batch_size = 8);

/// One report per variant; throws on unknown variant names.
std::vector<EvalReport> ablation_sweep(Generator& generator, const Dataset& dataset,
                                       const std::vector<std::string>& variants, int batch_size = 8);

/// Bicubic 8x upsampling of LR inputs, clamped to [0, 1]; the trivial baseline.
torch::Tensor bicubic_upsample(const torch::Tensor& lr);

}  // namespace uigan
