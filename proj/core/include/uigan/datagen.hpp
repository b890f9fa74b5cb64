#pragma once

#include "uigan/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uigan {

struct FaceOptions {
  // Rotation (radians), isotropic scale jitter and translation (HR pixels)
  // drawn uniformly in [-x, x]. All-zero renders the canonical pose.
  double max_rotation = 0.12;
  double max_scale_jitter = 0.08;
  double max_shift = 5.0;
  // Large shifts that may push landmarks off-frame; flagged on the result.
  bool extreme_pose = false;

  static FaceOptions canonical() { return {0.0, 0.0, 0.0, false}; }
};

struct ToyFace {
  torch::Tensor image;  // [3, 128, 128], quantised to 8-bit levels
  Landmarks landmarks;
};

/// Procedurally renders a symmetric face-like image with known landmarks.
ToyFace make_toy_face(uint64_t seed, const FaceOptions& options = {});

/// Component boxes (left eye, right eye, nose, mouth) in HR pixels.
std::vector<Box> component_boxes(const Landmarks& landmarks);

/// Square mask with side uniform in [16, 64] that overlaps at least one
/// facial component box. `side` pins the side length (mask-size sweeps).
Mask random_mask(const Landmarks& landmarks, uint64_t seed, std::optional<int> side = std::nullopt);

inline constexpr int kMinMaskSide = 16;
inline constexpr int kMaxMaskSide = 64;

/// Fills occluded pixels with mid-gray, then 8x area-average downsamples.
torch::Tensor degrade(const torch::Tensor& hr, const Mask& mask);

/// Area-average downsample of [3, H, W] (or [B, 3, H, W]) to `side`.
torch::Tensor area_downsample(const torch::Tensor& image, int side);

/// Rounds to the nearest 8-bit level, as stored on disk.
torch::Tensor quantize8(const torch::Tensor& image);

/// Default heatmap sigma: 1.5 px at 16x16, proportional to resolution.
inline double heatmap_sigma(int resolution) { return 1.5 * resolution / kLowRes; }

/// Maps an HR (128-scale) coordinate onto a `resolution` pixel grid where
/// pixel centres sit at integer coordinates.
inline double to_grid(double hr_coord, int resolution) {
  return (hr_coord + 0.5) * resolution / kHighRes - 0.5;
}
inline double from_grid(double grid_coord, int resolution) {
  return (grid_coord + 0.5) * kHighRes / resolution - 0.5;
}

/// Renders K Gaussian maps [K, r, r], each normalised to peak exactly 1 at
/// the pixel nearest its landmark. Off-grid landmarks yield all-zero maps.
torch::Tensor render_heatmaps(const Landmarks& landmarks, int resolution, double sigma);
inline torch::Tensor render_heatmaps(const Landmarks& landmarks, int resolution) {
  return render_heatmaps(landmarks, resolution, heatmap_sigma(resolution));
}

/// Generates one pair: face, mask, degraded LR, all from (seed, id).
ImagePair make_pair(uint64_t seed, int64_t id, const FaceOptions& options = {});

/// Applies one of the 8 dihedral transforms (rotation quarter-turns, then
/// optional horizontal flip) to a pair's HR image, mask and landmarks.
ImagePair augment_pair(const ImagePair& pair, int quarter_turns, bool flip);

struct BuildOptions {
  int n = 1;
  uint64_t seed = 0;
  bool augment = false;
  FaceOptions face;
};

/// Writes a dataset directory: manifest.json and pairs/{id:06d}/.
/// Returns the number of pairs written (n, or 8n with augmentation).
int build_dataset(const std::filesystem::path& dir, const BuildOptions& options);

/// In-memory dataset with per-stage supervision targets precomputed.
struct Dataset {
  std::vector<ImagePair> pairs;
  torch::Tensor lr;        // [N, 3, 16, 16]
  torch::Tensor hr;        // [N, 3, 128, 128]
  std::array<torch::Tensor, kNumStages> image_targets;    // 32, 64, 128
  std::array<torch::Tensor, kNumStages> heatmap_targets;  // 16, 32, 64
  uint64_t seed = 0;

  int64_t size() const { return static_cast<int64_t>(pairs.size()); }
  static Dataset from_pairs(std::vector<ImagePair> pairs);
  static Dataset load(const std::filesystem::path& dir);
};

/// Stage feature resolution (CM-TM input side) and output image side.
inline int stage_feature_side(int stage) { return kLowRes << (stage - 1); }
inline int stage_image_side(int stage) { return kLowRes << stage; }

}  // namespace uigan
