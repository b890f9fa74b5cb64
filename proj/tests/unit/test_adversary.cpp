#include "support.hpp"

#include "uigan/adversary.hpp"

#include <gtest/gtest.h>

using namespace uigan;
using uigan::testing::bit_equal;
using uigan::testing::tiny_config;

TEST(Crop, SixtyFourBoxIsRawSubImage) {
  const auto img = torch::rand({3, 128, 128});
  const auto crop = crop_occluded_region(img, Mask::square({20, 33, 64, 64}));
  EXPECT_TRUE(torch::equal(crop, img.slice(1, 33, 97).slice(2, 20, 84)));
}

TEST(Crop, ConstantImageGivesConstantCrop) {
  const auto crop = crop_occluded_region(torch::full({3, 128, 128}, 0.25f), Mask::square({5, 9, 23, 23}));
  EXPECT_EQ(crop.sizes(), (std::vector<int64_t>{3, 64, 64}));
  EXPECT_LT((crop - 0.25).abs().max().item<double>(), 1e-7);
}

TEST(Crop, Deterministic) {
  const auto img = torch::rand({3, 128, 128});
  const auto m = Mask::square({50, 50, 37, 37});
  EXPECT_TRUE(bit_equal(crop_occluded_region(img, m), crop_occluded_region(img, m)));
}

TEST(Crop, EmptyMaskRejected) {
  EXPECT_THROW(crop_occluded_region(torch::rand({3, 128, 128}), Mask::empty()), Error);
}

TEST(Crop, NeverSeesPixelsOutsideTheBox) {
  const auto img = torch::rand({3, 128, 128});
  const Box box{30, 40, 20, 20};
  auto altered = img.clone();
  altered.slice(1, 0, 40).fill_(7.0);
  altered.slice(1, 60, 128).fill_(-7.0);
  altered.slice(2, 0, 30).fill_(3.0);
  altered.slice(2, 50, 128).fill_(-3.0);
  EXPECT_TRUE(torch::equal(crop_box(img, box), crop_box(altered, box)));
}

TEST(Crop, BatchSkipsEmptyBoxes) {
  const auto imgs = torch::rand({3, 3, 128, 128});
  std::vector<int64_t> kept;
  const auto crops = crop_regions(imgs, {Box{0, 0, 16, 16}, Box{}, Box{10, 10, 64, 64}}, &kept);
  EXPECT_EQ(crops.size(0), 2);
  EXPECT_EQ(kept, (std::vector<int64_t>{0, 2}));
  EXPECT_TRUE(torch::equal(crops[1], imgs[2].slice(1, 10, 74).slice(2, 10, 74)));
}

TEST(Discriminators, OutputsStrictlyInsideUnitInterval) {
  auto d = Discriminators::make(tiny_config());
  torch::NoGradGuard g;
  const auto l = d.local(torch::rand({4, 3, 64, 64}));
  const auto gl = d.global(torch::rand({4, 3, 128, 128}));
  EXPECT_EQ(l.sizes(), (std::vector<int64_t>{4}));
  EXPECT_EQ(gl.sizes(), (std::vector<int64_t>{4}));
  for (const auto& s : {l, gl}) {
    EXPECT_GT(s.min().item<double>(), 0.0);
    EXPECT_LT(s.max().item<double>(), 1.0);
  }
}

TEST(Discriminators, ZeroFinalLayerGivesHalf) {
  auto d = Discriminators::make(tiny_config());
  {
    torch::NoGradGuard g;
    for (auto* disc : {&d.local, &d.global}) {
      (*disc)->classifier->weight.zero_();
      (*disc)->classifier->bias.zero_();
    }
  }
  EXPECT_TRUE(torch::all(d.local(torch::rand({2, 3, 64, 64})) == 0.5f).item<bool>());
  EXPECT_TRUE(torch::all(d.global(torch::rand({2, 3, 128, 128})) == 0.5f).item<bool>());
}

TEST(Discriminators, DeterministicAndIndependent) {
  auto a = Discriminators::make(tiny_config(4)), b = Discriminators::make(tiny_config(4));
  const auto x = torch::rand({1, 3, 128, 128});
  EXPECT_TRUE(bit_equal(a.global(x), b.global(x)));
  EXPECT_TRUE(bit_equal(a.global(x), a.global(x)));
  // Independent parameter sets: updating one leaves the other untouched.
  const auto local_before = a.local->parameters()[0].clone();
  {
    torch::NoGradGuard g;
    for (auto& p : a.global->parameters()) p.add_(1.0);
  }
  EXPECT_TRUE(bit_equal(a.local->parameters()[0], local_before));
}

TEST(Discriminators, FiniteOnExtremeValidImages) {
  auto d = Discriminators::make(tiny_config());
  torch::NoGradGuard g;
  for (float v : {0.0f, 1.0f}) {
    EXPECT_TRUE(torch::isfinite(d.global(torch::full({1, 3, 128, 128}, v))).all().item<bool>());
    EXPECT_TRUE(torch::isfinite(d.local(torch::full({1, 3, 64, 64}, v))).all().item<bool>());
  }
}

TEST(Discriminators, RejectWrongInputSide) {
  auto d = Discriminators::make(tiny_config());
  EXPECT_THROW(d.local(torch::rand({1, 3, 128, 128})), Error);
}
