#include "uigan/losses.hpp"


namespace uigan {

namespace nn = torch::nn;

LossWeights LossWeights::preset(const std::string& name) {
  LossWeights w;
  if (name == "LG") return w;
  w.use_global_adv = false;
  if (name == "LG*") return w;
  w.use_local_adv = false;
  w.gamma_a = w.gamma_b = w.gamma_c = 0.0;
  if (name == "LG++") return w;
  w.use_symmetry = false;
  if (name == "LG+") return w;
  w.alpha = 0.0;
  if (name == "LG-") return w;
  throw Error("unknown loss preset '" + name + "'");
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"alpha", w.alpha},           {"beta", w.beta},
       {"psi", w.psi},               {"gamma_a", w.gamma_a},
       {"gamma_b", w.gamma_b},       {"gamma_c", w.gamma_c},
       {"use_symmetry", w.use_symmetry}, {"use_local_adv", w.use_local_adv},
       {"use_global_adv", w.use_global_adv}, {"geometry_pixel_sum", w.geometry_pixel_sum}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  w = j.contains("preset") ? LossWeights::preset(j.at("preset").get<std::string>()) : LossWeights{};
  w.alpha = j.value("alpha", w.alpha);
  w.beta = j.value("beta", w.beta);
  w.psi = j.value("psi", w.psi);
  w.gamma_a = j.value("gamma_a", w.gamma_a);
  w.gamma_b = j.value("gamma_b", w.gamma_b);
  w.gamma_c = j.value("gamma_c", w.gamma_c);
  w.use_symmetry = j.value("use_symmetry", w.use_symmetry);
  w.use_local_adv = j.value("use_local_adv", w.use_local_adv);
  w.use_global_adv = j.value("use_global_adv", w.use_global_adv);
  w.geometry_pixel_sum = j.value("geometry_pixel_sum", w.geometry_pixel_sum);
  for (double v : {w.alpha, w.beta, w.psi, w.gamma_a, w.gamma_b, w.gamma_c}) {
    if (v < 0.0) throw Error("loss weights must be nonnegative");
  }
}

SeededFeatureExtractor::SeededFeatureExtractor(uint64_t seed, int base_channels) {
  std::lock_guard lock(torch_seed_mutex());
  torch::manual_seed(seed);
  const int c1 = base_channels, c2 = 2 * base_channels, c3 = 4 * base_channels;
  auto conv = [](int in, int out) { return nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)); };
  block1_ = nn::Sequential(conv(3, c1), nn::ReLU(), conv(c1, c1), nn::ReLU(), nn::MaxPool2d(2));
  block2_ = nn::Sequential(conv(c1, c2), nn::ReLU(), conv(c2, c2), nn::ReLU(), nn::MaxPool2d(2));
  block3_ = nn::Sequential(conv(c2, c3), nn::ReLU(), conv(c3, c3), nn::ReLU());
  for (auto* b : {&block1_, &block2_, &block3_}) {
    for (auto& p : (*b)->parameters()) p.set_requires_grad(false);
    (*b)->eval();
  }
}

FeatureTaps SeededFeatureExtractor::taps(const torch::Tensor& images) {
  FeatureTaps out;
  const auto x = images.dim() == 3 ? images.unsqueeze(0) : images;
  out.style[0] = block1_->forward(x);
  out.style[1] = block2_->forward(out.style[0]);
  out.identity = block3_->forward(out.style[1]);
  out.style[2] = torch::max_pool2d(out.identity, {2, 2});
  return out;
}

void SeededFeatureExtractor::to(torch::Dtype dtype) {
  for (auto* b : {&block1_, &block2_, &block3_}) (*b)->to(dtype);
}

std::shared_ptr<FeatureExtractor> default_feature_extractor() { return std::make_shared<SeededFeatureExtractor>(); }

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw Error(std::string(what) + ": shape mismatch");
}

torch::Tensor batched(const torch::Tensor& x) { return x.dim() == 3 ? x.unsqueeze(0) : x; }

void require_probabilities(const torch::Tensor& p, const char* what) {
  if (!((p >= 0.0) & (p <= 1.0)).all().item<bool>()) {
    throw Error(std::string(what) + ": scores must lie in [0, 1]");
  }
}

torch::Tensor clamp_score(const torch::Tensor& p) { return p.clamp(kScoreEpsilon, 1.0 - kScoreEpsilon); }

}  // namespace

torch::Tensor intensity_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
  require_same_shape(pred, gt, "intensity_loss");
  return (pred - gt).square().mean();
}

torch::Tensor identity_loss(const torch::Tensor& pred, const torch::Tensor& gt, FeatureExtractor& fx) {
  require_same_shape(pred, gt, "identity_loss");
  return (fx.taps(pred).identity - fx.taps(gt).identity).square().mean();
}

torch::Tensor symmetry_loss(const torch::Tensor& pred) { return (pred - pred.flip({-1})).square().mean(); }

torch::Tensor geometry_loss(const torch::Tensor& est, const torch::Tensor& gt) {
  if (est.size(-3) != gt.size(-3)) throw Error("geometry_loss: landmark count mismatch");
  require_same_shape(est, gt, "geometry_loss");
  // (1/K) sum_k mean_pixels == mean over all elements for equal-sized maps.
  return (est - gt).square().mean();
}

torch::Tensor gram(const torch::Tensor& features) {
  const auto c = features.size(-3), h = features.size(-2), w = features.size(-1);
  const auto flat = features.reshape({-1, c, h * w});
  auto g = torch::bmm(flat, flat.transpose(1, 2)) / static_cast<double>(c * h * w);
  if (features.dim() == 3) return g.squeeze(0);
  return g;
}

namespace {

torch::Tensor style_from_taps(const FeatureTaps& a, const FeatureTaps& b) {
  torch::Tensor total;
  for (size_t n = 0; n < a.style.size(); ++n) {
    auto term = (gram(a.style[n]) - gram(b.style[n])).abs().sum({1, 2}).mean();
    total = total.defined() ? total + term : term;
  }
  return total;
}

}  // namespace

torch::Tensor style_loss(const torch::Tensor& pred, const torch::Tensor& gt, FeatureExtractor& fx) {
  require_same_shape(pred, gt, "style_loss");
  return style_from_taps(fx.taps(batched(pred)), fx.taps(batched(gt)));
}

torch::Tensor d_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  require_probabilities(d_real, "d_loss");
  require_probabilities(d_fake, "d_loss");
  return -(torch::log(clamp_score(d_real)).mean() + torch::log(1.0 - clamp_score(d_fake)).mean());
}

torch::Tensor g_adv_loss(const torch::Tensor& d_fake) {
  require_probabilities(d_fake, "g_adv_loss");
  return -torch::log(clamp_score(d_fake)).mean();
}

StageLosses compose_losses(const std::array<StageTerms, kNumStages>& terms,
                           const std::optional<AdversarialTerms>& adversarial, const LossWeights& weights) {
  auto add = [](torch::Tensor acc, const torch::Tensor& term, double weight) {
    if (!term.defined() || weight == 0.0) return acc;
    auto t = weight == 1.0 ? term : term * weight;
    return acc.defined() ? acc + t : t;
  };
  std::array<torch::Tensor, kNumStages> net;
  for (int s = 1; s <= kNumStages; ++s) {
    const auto& t = terms[s - 1];
    if (!t.mse.defined()) continue;
    // Small-weight terms first, so unit components sum to the exact decimal totals.
    torch::Tensor acc;
    acc = add(acc, t.id, weights.alpha);
    acc = add(acc, t.h, weights.beta);
    if (s == 3 && adversarial) {
      if (weights.use_local_adv) acc = add(acc, adversarial->local, weights.psi);
      if (weights.use_global_adv) acc = add(acc, adversarial->global, weights.psi);
    }
    acc = add(acc, t.style, weights.gamma(s));
    acc = add(acc, t.mse, 1.0);
    if (s == 1 && weights.use_symmetry) acc = add(acc, t.sym, 1.0);
    net[s - 1] = acc;
  }
  StageLosses out{net[0], net[1], net[2], {}};
  for (const auto& n : net) out.total = add(out.total, n, 1.0);
  return out;
}

std::array<StageTerms, kNumStages> stage_terms(const StageOutputs& outputs, const StageTargets& targets,
                                               FeatureExtractor& fx, const LossWeights& weights, int first_stage) {
  std::array<StageTerms, kNumStages> terms;
  for (int s = first_stage; s <= outputs.stages; ++s) {
    const auto& pred = outputs.images[s - 1];
    const auto& gt = targets.images[s - 1];
    if (!pred.defined() || !gt.defined()) throw Error("stage_losses: missing output for stage " + std::to_string(s));
    auto& t = terms[s - 1];
    t.mse = intensity_loss(pred, gt);
    if (s == 1 && weights.use_symmetry) t.sym = symmetry_loss(pred);
    if (weights.beta != 0.0) {
      const auto& est = outputs.heatmaps[s - 1];
      t.h = geometry_loss(est, targets.heatmaps[s - 1]);
      if (weights.geometry_pixel_sum) t.h = t.h * static_cast<double>(est.size(-2) * est.size(-1));
    }
    if (weights.alpha == 0.0 && weights.gamma(s) == 0.0) continue;
    // One feature pass per image serves both the identity and style terms.
    const auto fp = fx.taps(pred);
    const auto fg = fx.taps(gt);
    if (weights.alpha != 0.0) t.id = (fp.identity - fg.identity).square().mean();
    if (weights.gamma(s) != 0.0) t.style = style_from_taps(fp, fg);
  }
  return terms;
}

StageLosses stage_losses(const StageOutputs& outputs, const StageTargets& targets, FeatureExtractor& fx,
                         const LossWeights& weights, const std::optional<DiscriminatorScores>& d_scores,
                         int first_stage) {
  const auto terms = stage_terms(outputs, targets, fx, weights, first_stage);
  std::optional<AdversarialTerms> adversarial;
  if (d_scores) {
    if (outputs.stages < kNumStages) throw Error("stage_losses: adversarial terms need the final stage");
    adversarial.emplace();
    if (d_scores->local.defined() && d_scores->local.numel() > 0) adversarial->local = g_adv_loss(d_scores->local);
    if (d_scores->global.defined()) adversarial->global = g_adv_loss(d_scores->global);
  }
  return compose_losses(terms, adversarial, weights);
}

}  // namespace uigan
