#include "support.hpp"

#include "uigan/evalkit.hpp"
#include "uigan/generator.hpp"

#include <gtest/gtest.h>

using namespace uigan;
using uigan::testing::bit_equal;
using uigan::testing::tiny_config;

TEST(Tun, DoublesSideAndClampsImage) {
  torch::manual_seed(0);
  TransformativeUpsampler tun(8, 2);
  const auto out = tun(torch::randn({2, 8, 16, 16}) * 10, torch::randn({2, 8, 16, 16}) * 10);
  EXPECT_EQ(out.features.sizes(), (std::vector<int64_t>{2, 8, 32, 32}));
  EXPECT_EQ(out.image.sizes(), (std::vector<int64_t>{2, 3, 32, 32}));
  EXPECT_GE(out.image.min().item<double>(), 0.0);
  EXPECT_LE(out.image.max().item<double>(), 1.0);
}

TEST(Tun, ZeroedResidualBlocksAreIdentity) {
  torch::manual_seed(1);
  TransformativeUpsampler tun(4, 3);
  {
    torch::NoGradGuard g;
    for (const auto& b : *tun->blocks) {
      for (auto& p : b->parameters()) p.zero_();
    }
  }
  const auto fp = torch::randn({1, 4, 6, 6}), fa = torch::randn({1, 4, 6, 6});
  EXPECT_TRUE(torch::equal(tun->refine(fp, fa), tun->fuse(torch::cat({fp, fa}, 1))));
}

TEST(Tun, RejectsMismatchedInputs) {
  TransformativeUpsampler tun(4, 1);
  EXPECT_THROW(tun(torch::zeros({1, 4, 4, 4}), torch::zeros({1, 4, 8, 8})), Error);
}

TEST(Generator, ResolutionChainAndRange) {
  auto gen = make_generator(tiny_config());
  torch::NoGradGuard g;
  for (int i = 0; i < 5; ++i) {
    const auto out = gen->forward(torch::rand({2, 3, 16, 16}));
    ASSERT_EQ(out.stages, 3);
    for (int s = 1; s <= 3; ++s) {
      const int side = 16 << s;
      EXPECT_EQ(out.images[s - 1].sizes(), (std::vector<int64_t>{2, 3, side, side}));
      EXPECT_EQ(out.heatmaps[s - 1].sizes(), (std::vector<int64_t>{2, kNumLandmarks, side / 2, side / 2}));
      EXPECT_GE(out.images[s - 1].min().item<double>(), 0.0);
      EXPECT_LE(out.images[s - 1].max().item<double>(), 1.0);
      EXPECT_TRUE(torch::isfinite(out.prior_features[s - 1]).all().item<bool>());
    }
  }
}

TEST(Generator, DeterministicGivenParameters) {
  auto a = make_generator(tiny_config(3)), b = make_generator(tiny_config(3));
  const auto lr = torch::rand({3, 16, 16});
  const auto oa = hallucinate(a, lr), ob = hallucinate(b, lr), oa2 = hallucinate(a, lr);
  for (int s = 0; s < 3; ++s) {
    EXPECT_TRUE(bit_equal(oa.images[s], ob.images[s]));
    EXPECT_TRUE(bit_equal(oa.images[s], oa2.images[s]));
    EXPECT_TRUE(bit_equal(oa.heatmaps[s], oa2.heatmaps[s]));
  }
}

TEST(Generator, SeedChangesInitialisation) {
  auto a = make_generator(tiny_config(1)), b = make_generator(tiny_config(2));
  EXPECT_FALSE(bit_equal(a->parameters()[0], b->parameters()[0]));
}

TEST(Generator, RejectsWrongResolution) {
  auto gen = make_generator(tiny_config());
  EXPECT_THROW(hallucinate(gen, torch::rand({3, 8, 8})), Error);
  EXPECT_THROW(gen->forward(torch::rand({1, 3, 32, 32})), Error);
}

TEST(Generator, EmptyMaskPairsTakeTheSamePath) {
  auto gen = make_generator(tiny_config());
  const auto face = make_toy_face(4);
  const auto lr = quantize8(degrade(face.image, Mask::empty()));
  const auto out = hallucinate(gen, lr);
  EXPECT_EQ(out.final_image().sizes(), (std::vector<int64_t>{1, 3, 128, 128}));
}

TEST(Generator, GradientReachesEveryStageOneParameter) {
  auto gen = make_generator(tiny_config(5));
  const auto out = gen->forward(torch::rand({2, 3, 16, 16}));
  out.final_image().sum().backward();
  for (const auto& item : gen->block(1)->named_parameters()) {
    ASSERT_TRUE(item.value().grad().defined()) << item.key();
    EXPECT_GT(item.value().grad().abs().sum().item<double>(), 0.0) << item.key();
  }
}

TEST(Generator, PartialForwardStopsEarly) {
  auto gen = make_generator(tiny_config());
  ForwardOptions o;
  o.last_stage = 2;
  const auto out = gen->forward(torch::rand({1, 3, 16, 16}), o);
  EXPECT_EQ(out.stages, 2);
  EXPECT_EQ(out.final_image().size(-1), 64);
  EXPECT_FALSE(out.images[2].defined());
}

TEST(Generator, ParametersRoundTripThroughArchive) {
  auto a = make_generator(tiny_config(1)), b = make_generator(tiny_config(2));
  torch::serialize::OutputArchive out;
  a->save(out);
  std::ostringstream buf;
  out.save_to(buf);
  torch::serialize::InputArchive in;
  std::istringstream is(buf.str());
  in.load_from(is);
  b->load(in);
  const auto pa = a->parameters(), pb = b->parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(bit_equal(pa[i], pb[i]));
}

TEST(PriorOverride, OwnEstimatesReproduceOutput) {
  auto gen = make_generator(tiny_config(7));
  const auto lr = torch::rand({1, 3, 16, 16});
  torch::NoGradGuard g;
  const auto plain = gen->forward(lr);
  ForwardOptions o;
  for (int s = 0; s < 3; ++s) o.override_heatmaps[s] = plain.heatmaps[s];
  const auto again = gen->forward(lr, o);
  for (int s = 0; s < 3; ++s) EXPECT_TRUE(bit_equal(plain.images[s], again.images[s]));
}

TEST(PriorOverride, UnselectedChannelsKeepEstimates) {
  auto gen = make_generator(tiny_config(7));
  const auto lr = torch::rand({3, 16, 16});
  const auto lm = make_toy_face(1).landmarks;
  torch::NoGradGuard g;
  const auto plain = hallucinate(gen, lr);
  const auto none = hallucinate_with_prior_override(gen, lr, lm, {1, 2, 3}, torch::zeros({kNumLandmarks}, torch::kBool));
  EXPECT_TRUE(bit_equal(plain.final_image(), none.final_image()));
}

TEST(PriorOverride, DifferentHeatmapsChangeOutput) {
  auto gen = make_generator(tiny_config(7));
  const auto lr = torch::rand({3, 16, 16});
  const auto lm = make_toy_face(1).landmarks;
  torch::NoGradGuard g;
  const auto plain = hallucinate(gen, lr);
  const auto edited = hallucinate_with_prior_override(gen, lr, lm, {1, 2, 3});
  EXPECT_GT((plain.final_image() - edited.final_image()).abs().max().item<double>(), 0.0);
  const auto again = hallucinate_with_prior_override(gen, lr, lm, {1, 2, 3});
  EXPECT_TRUE(bit_equal(edited.final_image(), again.final_image()));
}

TEST(PriorOverride, OnlySelectedStagesChange) {
  auto gen = make_generator(tiny_config(7));
  const auto lr = torch::rand({3, 16, 16});
  const auto lm = make_toy_face(1).landmarks;
  torch::NoGradGuard g;
  const auto plain = hallucinate(gen, lr);
  const auto edited = hallucinate_with_prior_override(gen, lr, lm, {2});
  EXPECT_TRUE(bit_equal(plain.images[0], edited.images[0]));
  EXPECT_TRUE(bit_equal(plain.priors[0], edited.priors[0]));
  EXPECT_TRUE(bit_equal(edited.priors[1][0], render_heatmaps(lm, 32)));
}

TEST(PriorOverride, InvalidStagesAndLandmarkCount) {
  auto gen = make_generator(tiny_config());
  const auto lr = torch::rand({3, 16, 16});
  const auto lm = make_toy_face(1).landmarks;
  EXPECT_THROW(hallucinate_with_prior_override(gen, lr, lm, {0}), Error);
  EXPECT_THROW(hallucinate_with_prior_override(gen, lr, lm, {4}), Error);
  Landmarks short_lm;
  short_lm.points.resize(3);
  EXPECT_THROW(hallucinate_with_prior_override(gen, lr, short_lm, {1}), Error);
}

TEST(PriorBypass, ChangesOutputWithoutChangingShape) {
  auto gen = make_generator(tiny_config(9));
  const auto lr = torch::rand({1, 3, 16, 16});
  torch::NoGradGuard g;
  ForwardOptions o;
  o.bypass_priors = true;
  const auto a = gen->forward(lr), b = gen->forward(lr, o);
  EXPECT_EQ(a.final_image().sizes(), b.final_image().sizes());
  EXPECT_GT((a.final_image() - b.final_image()).abs().max().item<double>(), 0.0);
}
