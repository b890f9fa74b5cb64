#include "oracles.hpp"
#include "support.hpp"

#include "uigan/losses.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>

using namespace uigan;
using uigan::testing::max_fd_error;

namespace {

auto f64(std::vector<int64_t> shape) { return torch::rand(shape, torch::kFloat64); }

std::shared_ptr<FeatureExtractor> fx64() {
  auto fx = std::make_shared<SeededFeatureExtractor>();
  fx->to(torch::kFloat64);
  return fx;
}

StageOutputs unit_outputs() {
  StageOutputs o;
  o.stages = 3;
  for (int s = 1; s <= 3; ++s) {
    o.images[s - 1] = torch::full({1, 3, 16 << s, 16 << s}, 0.5);
    o.heatmaps[s - 1] = torch::zeros({1, kNumLandmarks, 8 << s, 8 << s});
  }
  return o;
}

std::array<StageTerms, kNumStages> ones() {
  std::array<StageTerms, kNumStages> t;
  const auto one = torch::ones({}, torch::kFloat64);
  for (auto& s : t) s = {one, one, one, one, one};
  return t;
}

}  // namespace

TEST(Intensity, KnownValues) {
  const auto a = f64({2, 3, 4, 4});
  EXPECT_EQ(intensity_loss(a, a).item<double>(), 0.0);
  EXPECT_NEAR(intensity_loss(a + 0.1, a).item<double>(), 0.01, 1e-12);
}

TEST(Intensity, BruteForceAndGradient) {
  const auto a = f64({3, 4, 4}), b = f64({3, 4, 4});
  EXPECT_NEAR(intensity_loss(a, b).item<double>(), oracle::mse(a, b), 1e-10);
  const auto gt = f64({1, 3, 8, 8});
  EXPECT_LT(max_fd_error([&](const torch::Tensor& x) { return intensity_loss(x, gt); }, f64({1, 3, 8, 8})), 1e-4);
}

TEST(Intensity, ShapeMismatch) { EXPECT_THROW(intensity_loss(f64({3, 4, 4}), f64({3, 4, 5})), Error); }

TEST(Identity, ZeroNonnegativeAndOracle) {
  auto fx = fx64();
  const auto a = f64({1, 3, 8, 8}), b = f64({1, 3, 8, 8});
  EXPECT_EQ(identity_loss(a, a, *fx).item<double>(), 0.0);
  EXPECT_GE(identity_loss(a, b, *fx).item<double>(), 0.0);
  const auto ta = fx->taps(a).identity, tb = fx->taps(b).identity;
  EXPECT_NEAR(identity_loss(a, b, *fx).item<double>(), oracle::mse(ta, tb), 1e-10);
}

TEST(Identity, GradientMatchesFiniteDifferences) {
  auto fx = fx64();
  const auto gt = f64({1, 3, 8, 8});
  EXPECT_LT(max_fd_error([&](const torch::Tensor& x) { return identity_loss(x, gt, *fx); }, f64({1, 3, 8, 8})), 1e-4);
}

TEST(Symmetry, KnownValues) {
  const auto half = f64({3, 8, 4});
  const auto symmetric = torch::cat({half, half.flip({-1})}, -1);
  EXPECT_EQ(symmetry_loss(symmetric).item<double>(), 0.0);
  EXPECT_EQ(symmetry_loss(torch::full({3, 8, 8}, 0.3, torch::kFloat64)).item<double>(), 0.0);
}

TEST(Symmetry, SingleMirroredPairGap) {
  // One pixel pair (i, j) / (i, W-1-j) in a single channel differs by d; the
  // mean over 3HW elements counts the difference twice.
  const int h = 6, w = 8;
  const double d = 0.3;
  auto img = torch::full({3, h, w}, 0.4, torch::kFloat64);
  img[1][2][1] = 0.4 + d;
  EXPECT_NEAR(symmetry_loss(img).item<double>(), 2 * d * d / (3.0 * h * w), 1e-12);
}

TEST(Symmetry, BruteForceAndGradient) {
  const auto a = f64({3, 4, 4});
  EXPECT_NEAR(symmetry_loss(a).item<double>(), oracle::symmetry(a), 1e-10);
  EXPECT_LT(max_fd_error([](const torch::Tensor& x) { return symmetry_loss(x); }, f64({1, 3, 8, 8})), 1e-4);
}

TEST(Geometry, KnownValuesAndOracle) {
  const auto a = f64({3, 4, 4}), b = f64({3, 4, 4});
  EXPECT_EQ(geometry_loss(a, a).item<double>(), 0.0);
  EXPECT_NEAR(geometry_loss(a + 0.1, a).item<double>(), 0.01, 1e-12);
  EXPECT_NEAR(geometry_loss(a, b).item<double>(), oracle::geometry(a, b), 1e-10);
  EXPECT_THROW(geometry_loss(f64({3, 4, 4}), f64({2, 4, 4})), Error);
  const auto gt = f64({1, 5, 8, 8});
  EXPECT_LT(max_fd_error([&](const torch::Tensor& x) { return geometry_loss(x, gt); }, f64({1, 5, 8, 8})), 1e-4);
}

TEST(Gram, KnownValues) {
  EXPECT_EQ(gram(torch::zeros({3, 2, 2}, torch::kFloat64)).abs().sum().item<double>(), 0.0);
  const double c = 0.7;
  const auto g = gram(torch::full({1, 5, 3}, c, torch::kFloat64));
  EXPECT_NEAR(g.item<double>(), c * c, 1e-15);
}

TEST(Gram, SymmetricPsdAndMatchesOracle) {
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = torch::randn({3, 2, 2}, torch::kFloat64);
    const auto g = gram(f);
    const auto oracle = oracle::gram(f);
    Eigen::MatrixXd m(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        m(i, j) = g[i][j].item<double>();
        EXPECT_NEAR(m(i, j), oracle(i, j), 1e-12);
      }
    EXPECT_NEAR((m - m.transpose()).cwiseAbs().maxCoeff(), 0.0, 1e-15);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(Style, ZeroNonnegativeOracleAndGradient) {
  auto fx = fx64();
  const auto a = f64({3, 8, 8}), b = f64({3, 8, 8});
  EXPECT_EQ(style_loss(a, a, *fx).item<double>(), 0.0);
  EXPECT_GE(style_loss(a, b, *fx).item<double>(), 0.0);
  EXPECT_NEAR(style_loss(a, b, *fx).item<double>(), oracle::style(a, b, *fx), 1e-10);
  const auto gt = f64({1, 3, 8, 8});
  EXPECT_LT(max_fd_error([&](const torch::Tensor& x) { return style_loss(x, gt, *fx); }, f64({1, 3, 8, 8})), 1e-4);
}

TEST(FeatureExtractor, FrozenAndDeterministic) {
  SeededFeatureExtractor a, b;
  const auto x = torch::rand({2, 3, 32, 32});
  const auto ta = a.taps(x), tb = b.taps(x);
  EXPECT_TRUE(torch::equal(ta.identity, tb.identity));
  for (int n = 0; n < 3; ++n) EXPECT_TRUE(torch::equal(ta.style[n], tb.style[n]));
  EXPECT_EQ(ta.style[0].size(-1), 16);
  EXPECT_EQ(ta.style[1].size(-1), 8);
  EXPECT_EQ(ta.identity.size(-1), 8);
  EXPECT_EQ(ta.style[2].size(-1), 4);
  // Gradients flow to inputs but never to the extractor's own weights.
  auto xi = x.clone().set_requires_grad(true);
  a.taps(xi).identity.sum().backward();
  EXPECT_TRUE(xi.grad().defined());
}

TEST(Adversarial, ClosedFormValues) {
  const auto half = torch::full({4}, 0.5, torch::kFloat64);
  EXPECT_NEAR(d_loss(half, half).item<double>(), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(d_loss(torch::ones({4}, torch::kFloat64), torch::zeros({4}, torch::kFloat64)).item<double>(), 0.0,
              1e-6);
  EXPECT_NEAR(d_loss(torch::full({2}, 0.9, torch::kFloat64), torch::full({2}, 0.1, torch::kFloat64)).item<double>(),
              -(std::log(0.9) + std::log(0.9)), 1e-12);
  EXPECT_NEAR(d_loss(torch::full({2}, 0.9, torch::kFloat64), torch::full({2}, 0.1, torch::kFloat64)).item<double>(),
              0.210721, 1e-6);
  EXPECT_NEAR(g_adv_loss(torch::ones({3}, torch::kFloat64)).item<double>(), 0.0, 1e-6);
  EXPECT_NEAR(g_adv_loss(half).item<double>(), std::log(2.0), 1e-12);
  EXPECT_NEAR(g_adv_loss(torch::full({1}, std::exp(-2.0), torch::kFloat64)).item<double>(), 2.0, 1e-12);
}

TEST(Adversarial, OutOfRangeRejectedAndClampedFinite) {
  EXPECT_THROW(d_loss(torch::full({1}, 1.5), torch::full({1}, 0.5)), Error);
  EXPECT_THROW(d_loss(torch::full({1}, 0.5), torch::full({1}, -0.1)), Error);
  EXPECT_THROW(g_adv_loss(torch::full({1}, std::nan(""))), Error);
  const auto d = d_loss(torch::zeros({1}, torch::kFloat64), torch::ones({1}, torch::kFloat64)).item<double>();
  const auto g = g_adv_loss(torch::zeros({1}, torch::kFloat64)).item<double>();
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_TRUE(std::isfinite(g));
  EXPECT_NEAR(g, -std::log(kScoreEpsilon), 1e-9);
}

TEST(Composite, AllComponentsForcedToOne) {
  AdversarialTerms adv{torch::ones({}, torch::kFloat64), torch::ones({}, torch::kFloat64)};
  const auto l = compose_losses(ones(), adv, LossWeights{});
  EXPECT_EQ(l.net1.item<double>(), 12.02);
  EXPECT_EQ(l.net2.item<double>(), 11.02);
  EXPECT_EQ(l.net3.item<double>(), 2.04);
  EXPECT_EQ(l.total.item<double>(), 25.08);
}

TEST(Composite, ZeroWeightsLeaveSymmetryAndMse) {
  LossWeights w;
  w.alpha = w.beta = w.psi = w.gamma_a = w.gamma_b = w.gamma_c = 0.0;
  AdversarialTerms adv{torch::ones({}, torch::kFloat64), torch::ones({}, torch::kFloat64)};
  auto terms = ones();
  terms[0].mse = torch::full({}, 0.25, torch::kFloat64);
  terms[1].mse = torch::full({}, 0.5, torch::kFloat64);
  terms[2].mse = torch::full({}, 2.0, torch::kFloat64);
  terms[0].sym = torch::full({}, 0.125, torch::kFloat64);
  const auto l = compose_losses(terms, adv, w);
  EXPECT_DOUBLE_EQ(l.total.item<double>(), 0.125 + 0.25 + 0.5 + 2.0);
}

TEST(Composite, LinearInEachWeight) {
  auto terms = ones();
  for (auto& t : terms) {
    t.id = torch::full({}, 0.3, torch::kFloat64);
    t.style = torch::full({}, 0.7, torch::kFloat64);
  }
  const auto eval = [&](double alpha) {
    LossWeights w;
    w.alpha = alpha;
    return compose_losses(terms, std::nullopt, w).total.item<double>();
  };
  EXPECT_NEAR(eval(2.0) - eval(1.0), eval(1.0) - eval(0.0), 1e-12);
  EXPECT_NEAR(eval(1.0) - eval(0.0), 3 * 0.3, 1e-12);
}

TEST(Composite, PresetsDropTerms) {
  const auto lg = LossWeights::preset("LG");
  EXPECT_TRUE(lg.use_global_adv && lg.use_local_adv && lg.use_symmetry);
  const auto minus = LossWeights::preset("LG-");
  EXPECT_EQ(minus.alpha, 0.0);
  EXPECT_EQ(minus.gamma_a, 0.0);
  EXPECT_FALSE(minus.use_symmetry || minus.use_local_adv || minus.use_global_adv);
  EXPECT_EQ(minus.beta, 0.01);
  EXPECT_THROW(LossWeights::preset("nope"), Error);
}

TEST(StageLosses, PerfectPredictionLeavesOnlyAdversarial) {
  auto fx = default_feature_extractor();
  const auto pair = make_pair(1, 0);
  const auto face = pair.hr_clean.flip({-1}).add(pair.hr_clean).div(2);  // symmetric target
  StageOutputs out;
  StageTargets tgt;
  out.stages = 3;
  for (int s = 1; s <= 3; ++s) {
    tgt.images[s - 1] = area_downsample(face, 16 << s).unsqueeze(0);
    tgt.heatmaps[s - 1] = render_heatmaps(pair.landmarks, 8 << s).unsqueeze(0);
    out.images[s - 1] = tgt.images[s - 1].clone();
    out.heatmaps[s - 1] = tgt.heatmaps[s - 1].clone();
  }
  DiscriminatorScores scores{torch::full({1}, 0.5), torch::full({1}, 0.5)};
  const auto l = stage_losses(out, tgt, *fx, LossWeights{}, scores);
  EXPECT_NEAR(l.net1.item<double>(), 0.0, 1e-12);
  EXPECT_EQ(l.net2.item<double>(), 0.0);
  EXPECT_NEAR(l.net3.item<double>(), 0.01 * 2 * std::log(2.0), 1e-6);
}

TEST(StageLosses, MissingStageOutputRejected) {
  auto fx = default_feature_extractor();
  auto out = unit_outputs();
  StageTargets tgt;
  for (int s = 1; s <= 3; ++s) {
    tgt.images[s - 1] = out.images[s - 1];
    tgt.heatmaps[s - 1] = out.heatmaps[s - 1];
  }
  out.images[1] = torch::Tensor();
  EXPECT_THROW(stage_losses(out, tgt, *fx, LossWeights{}), Error);
}

TEST(LossWeights, JsonRoundTripAndValidation) {
  LossWeights w;
  w.gamma_b = 3.5;
  w.use_symmetry = false;
  w.geometry_pixel_sum = false;
  const nlohmann::json j = w;
  const auto back = j.get<LossWeights>();
  EXPECT_FALSE(back.geometry_pixel_sum);
  EXPECT_EQ(back.gamma_b, 3.5);
  EXPECT_FALSE(back.use_symmetry);
  EXPECT_THROW((nlohmann::json{{"alpha", -1.0}}.get<LossWeights>()), Error);
  EXPECT_EQ((nlohmann::json{{"preset", "LG+"}}.get<LossWeights>().gamma_c), 0.0);
}

TEST(StageTerms, GeometryTermSumsOverPixelsByDefault) {
  auto fx = default_feature_extractor();
  StageOutputs out;
  StageTargets tgt;
  out.stages = 3;
  for (int s = 1; s <= 3; ++s) {
    tgt.images[s - 1] = torch::rand({1, 3, 16 << s, 16 << s});
    out.images[s - 1] = tgt.images[s - 1].clone();
    tgt.heatmaps[s - 1] = torch::rand({1, kNumLandmarks, 8 << s, 8 << s}, torch::kFloat64);
    out.heatmaps[s - 1] = torch::rand({1, kNumLandmarks, 8 << s, 8 << s}, torch::kFloat64);
  }
  LossWeights w;
  const auto summed = stage_terms(out, tgt, *fx, w, 1);
  w.geometry_pixel_sum = false;
  const auto mean = stage_terms(out, tgt, *fx, w, 1);
  for (int s = 1; s <= 3; ++s) {
    const double per_pixel = oracle::geometry(out.heatmaps[s - 1][0], tgt.heatmaps[s - 1][0]);
    const double pixels = static_cast<double>((8 << s) * (8 << s));
    EXPECT_NEAR(mean[s - 1].h.item<double>(), per_pixel, 1e-10);
    EXPECT_NEAR(summed[s - 1].h.item<double>(), per_pixel * pixels, 1e-8);
  }
}
