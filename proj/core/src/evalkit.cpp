#include "uigan/evalkit.hpp"

#include <algorithm>
#include <cmath>

namespace uigan {

namespace F = torch::nn::functional;

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw Error("psnr: shape mismatch");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).square().mean().item<double>();
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

torch::Tensor gaussian_window(int size, double sigma) {
  auto x = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  auto g = torch::exp(-x.square() / (2.0 * sigma * sigma));
  g = g / g.sum();
  return torch::outer(g, g);
}

}  // namespace

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  constexpr int kWindow = 11;
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  if (a.sizes() != b.sizes() || a.dim() != 3) throw Error("ssim: expected two [C, H, W] images of equal shape");
  if (a.size(1) < kWindow || a.size(2) < kWindow) throw Error("ssim: image smaller than the 11x11 window");

  const int64_t c = a.size(0);
  const auto window = gaussian_window(kWindow, 1.5).expand({c, 1, kWindow, kWindow}).contiguous();
  auto filter = [&](const torch::Tensor& x) { return F::conv2d(x, window, F::Conv2dFuncOptions().groups(c)); };

  const auto x = a.to(torch::kFloat64).unsqueeze(0);
  const auto y = b.to(torch::kFloat64).unsqueeze(0);
  const auto mu_x = filter(x), mu_y = filter(y);
  const auto var_x = filter(x * x) - mu_x.square();
  const auto var_y = filter(y * y) - mu_y.square();
  const auto cov = filter(x * y) - mu_x * mu_y;
  const auto map = ((2.0 * mu_x * mu_y + kC1) * (2.0 * cov + kC2)) /
                   ((mu_x.square() + mu_y.square() + kC1) * (var_x + var_y + kC2));
  return map.mean({2, 3}).mean().item<double>();
}

Landmarks heatmap_landmarks(const torch::Tensor& heatmaps) {
  if (heatmaps.dim() != 3 || heatmaps.size(1) != heatmaps.size(2)) throw Error("heatmap_landmarks: expected [K, r, r]");
  const int64_t r = heatmaps.size(1);
  const auto idx = heatmaps.reshape({heatmaps.size(0), -1}).argmax(1).to(torch::kCPU);
  Landmarks lm;
  for (int64_t k = 0; k < idx.size(0); ++k) {
    const int64_t flat = idx[k].item<int64_t>();
    lm.points.push_back({from_grid(static_cast<double>(flat % r), static_cast<int>(r)),
                         from_grid(static_cast<double>(flat / r), static_cast<int>(r))});
  }
  return lm;
}

double nrmse(const Landmarks& est, const Landmarks& gt) {
  if (est.size() != gt.size() || gt.size() == 0) throw Error("nrmse: landmark count mismatch");
  const double iod = gt.inter_ocular();
  if (!(iod >= 1.0)) throw Error("nrmse: degenerate inter-ocular distance");
  double sum = 0.0;
  for (int k = 0; k < gt.size(); ++k) {
    const double dx = est.points[k].x - gt.points[k].x, dy = est.points[k].y - gt.points[k].y;
    sum += dx * dx + dy * dy;
  }
  return std::sqrt(sum / gt.size()) / iod;
}

double landmark_nrmse(const torch::Tensor& heatmaps, const Landmarks& gt) {
  return nrmse(heatmap_landmarks(heatmaps), gt);
}

void EvalReport::finalize() {
  psnr_mean = ssim_mean = nrmse_mean = 0.0;
  if (per_sample.empty()) return;
  for (const auto& s : per_sample) {
    psnr_mean += s.psnr;
    ssim_mean += s.ssim;
    nrmse_mean += s.nrmse;
  }
  const double n = static_cast<double>(per_sample.size());
  psnr_mean /= n;
  ssim_mean /= n;
  nrmse_mean /= n;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : per_sample) {
    samples.push_back({{"id", s.id}, {"psnr", s.psnr}, {"ssim", s.ssim}, {"nrmse", s.nrmse}});
  }
  return {{"variant", variant},     {"n", n()},
          {"psnr_mean", psnr_mean}, {"ssim_mean", ssim_mean},
          {"nrmse_mean", nrmse_mean}, {"per_sample", samples}};
}

const std::vector<std::string>& prior_variants() {
  static const std::vector<std::string> v = {"P-FP", "baseline", "P+GT"};
  return v;
}

const std::vector<std::string>& mask_variants() {
  static const std::vector<std::string> v = {"m1", "m2", "m3", "m4", "m5"};
  return v;
}

int mask_bin_side(const std::string& variant) {
  static const int sides[] = {16, 24, 32, 48, 64};
  const auto& names = mask_variants();
  const auto it = std::find(names.begin(), names.end(), variant);
  if (it == names.end()) throw Error("unknown mask bin '" + variant + "'");
  return sides[it - names.begin()];
}

torch::Tensor bicubic_upsample(const torch::Tensor& lr) {
  const auto batched = lr.dim() == 3 ? lr.unsqueeze(0) : lr;
  auto up = F::interpolate(batched, F::InterpolateFuncOptions()
                                        .size(std::vector<int64_t>{kHighRes, kHighRes})
                                        .mode(torch::kBicubic)
                                        .align_corners(false))
                .clamp(0.0, 1.0);
  return lr.dim() == 3 ? up.squeeze(0) : up;
}

EvalReport evaluate(Generator& generator, const Dataset& dataset, const std::string& variant, int batch_size) {
  const bool is_prior = std::find(prior_variants().begin(), prior_variants().end(), variant) != prior_variants().end();
  const bool is_mask = std::find(mask_variants().begin(), mask_variants().end(), variant) != mask_variants().end();
  if (!is_prior && !is_mask) throw Error("unknown variant '" + variant + "'");

  torch::NoGradGuard no_grad;
  auto lr_all = dataset.lr;
  if (is_mask) {
    // Same placement seed for every bin so only the size changes.
    const int side = mask_bin_side(variant);
    std::vector<torch::Tensor> lrs;
    for (const auto& p : dataset.pairs) {
      const auto mask = random_mask(p.landmarks, mix_seed(dataset.seed ^ 0x5eedULL, static_cast<uint64_t>(p.id)), side);
      lrs.push_back(quantize8(degrade(p.hr_clean, mask)));
    }
    lr_all = torch::stack(lrs);
  }

  EvalReport report;
  report.variant = variant;
  for (int64_t begin = 0; begin < dataset.size(); begin += batch_size) {
    const int64_t end = std::min<int64_t>(begin + batch_size, dataset.size());
    ForwardOptions options;
    options.bypass_priors = variant == "P-FP";
    if (variant == "P+GT") {
      for (int s = 1; s <= kNumStages; ++s) options.override_heatmaps[s - 1] = dataset.heatmap_targets[s - 1].slice(0, begin, end);
    }
    const auto out = generator->forward(lr_all.slice(0, begin, end), options);
    const auto& images = out.final_image();
    const auto& heat = out.heatmaps[kNumStages - 1];
    for (int64_t i = begin; i < end; ++i) {
      const auto& pair = dataset.pairs[static_cast<size_t>(i)];
      const auto pred = images[i - begin];
      report.per_sample.push_back({pair.id, psnr(pred, pair.hr_clean), ssim(pred, pair.hr_clean),
                                   landmark_nrmse(heat[i - begin], pair.landmarks)});
    }
  }
  report.finalize();
  return report;
}

std::vector<EvalReport> ablation_sweep(Generator& generator, const Dataset& dataset,
                                       const std::vector<std::string>& variants, int batch_size) {
  for (const auto& v : variants) {
    const auto& p = prior_variants();
    const auto& m = mask_variants();
    if (std::find(p.begin(), p.end(), v) == p.end() && std::find(m.begin(), m.end(), v) == m.end()) {
      throw Error("unknown variant '" + v + "'");
    }
  }
  std::vector<EvalReport> reports;
  for (const auto& v : variants) reports.push_back(evaluate(generator, dataset, v, batch_size));
  return reports;
}

}  // namespace uigan
