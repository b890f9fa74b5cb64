#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace uigan {

// Resolutions along the hallucination chain.
inline constexpr int kLowRes = 16;
inline constexpr int kHighRes = 128;
inline constexpr int kNumStages = 3;
inline constexpr float kFillValue = 0.5f;

// Toy landmark layout (K = 17), indices into Landmarks::points.
//   0..3   left eye:  center, outer corner, inner corner, upper lid
//   4..7   right eye: center, outer corner, inner corner, upper lid
//   8..10  nose:      bridge, tip, base
//   11..14 mouth:     left corner, right corner, upper lip, lower lip
//   15..16 brows:     left midpoint, right midpoint
inline constexpr int kNumLandmarks = 17;
inline constexpr int kLeftEyeCenter = 0;
inline constexpr int kRightEyeCenter = 4;
inline constexpr int kMouthLeftCorner = 11;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Axis-aligned integer box, half-open: covers [x, x + w) × [y, y + h).
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool empty() const { return w <= 0 || h <= 0; }
  bool intersects(const Box& o) const {
    return !empty() && !o.empty() && x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
  }
  Box scaled(int factor) const { return {x * factor, y * factor, w * factor, h * factor}; }
  bool operator==(const Box&) const = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct Landmarks {
  std::vector<Point> points;
  // Set by the renderer when pose jitter may have pushed points off-frame.
  bool extreme_pose = false;

  int size() const { return static_cast<int>(points.size()); }
  bool all_in_frame(int side = kHighRes) const;
  double inter_ocular() const;
};

/// Binary occlusion mask at HR scale. `bits` is a [H, W] float tensor with
/// 1 marking occluded pixels; every 1-bit lies inside `box`.
struct Mask {
  torch::Tensor bits;
  Box box;

  static Mask empty(int side = kHighRes);
  static Mask square(const Box& box, int side = kHighRes);
  /// Recovers the tight bounding box from `bits`.
  static Mask from_bits(torch::Tensor bits);
  bool is_empty() const { return box.empty(); }
};

/// Images are float32 tensors [3, H, W] with values in [0, 1].
void check_image(const torch::Tensor& image, int side);

struct ImagePair {
  int64_t id = 0;
  torch::Tensor lr_occluded;  // [3, 16, 16]
  torch::Tensor hr_clean;     // [3, 128, 128]
  Mask mask;
  Landmarks landmarks;
};

/// splitmix64 finaliser; used to derive independent per-sample seeds.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

/// Serialises code that reseeds the global torch generator to build modules.
std::mutex& torch_seed_mutex();

}  // namespace uigan
