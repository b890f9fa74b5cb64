#include "uigan/types.hpp"

#include <cmath>

namespace uigan {

bool Landmarks::all_in_frame(int side) const {
  for (const auto& p : points) {
    if (!(p.x >= 0.0 && p.x < side && p.y >= 0.0 && p.y < side)) return false;
  }
  return true;
}

double Landmarks::inter_ocular() const {
  if (size() <= kRightEyeCenter) throw Error("inter_ocular: too few landmarks");
  const auto& a = points[kLeftEyeCenter];
  const auto& b = points[kRightEyeCenter];
  return std::hypot(a.x - b.x, a.y - b.y);
}

Mask Mask::empty(int side) { return {torch::zeros({side, side}), Box{}}; }

Mask Mask::square(const Box& box, int side) {
  auto bits = torch::zeros({side, side});
  if (!box.empty()) {
    bits.slice(0, box.y, box.y + box.h).slice(1, box.x, box.x + box.w).fill_(1.0);
  }
  return {bits, box};
}

Mask Mask::from_bits(torch::Tensor bits) {
  if (bits.dim() == 3) bits = bits[0];
  if (bits.dim() != 2) throw Error("Mask::from_bits: expected [H, W] tensor");
  bits = (bits > 0.5).to(torch::kFloat32);
  const auto rows = bits.amax(1).nonzero();
  const auto cols = bits.amax(0).nonzero();
  if (rows.numel() == 0) return {bits, Box{}};
  const int y0 = static_cast<int>(rows.min().item<int64_t>());
  const int y1 = static_cast<int>(rows.max().item<int64_t>());
  const int x0 = static_cast<int>(cols.min().item<int64_t>());
  const int x1 = static_cast<int>(cols.max().item<int64_t>());
  return {bits, Box{x0, y0, x1 - x0 + 1, y1 - y0 + 1}};
}

void check_image(const torch::Tensor& image, int side) {
  if (!image.defined() || image.dim() != 3 || image.size(0) != 3 || image.size(1) != side ||
      image.size(2) != side) {
    throw Error("expected a [3, " + std::to_string(side) + ", " + std::to_string(side) + "] image");
  }
}

std::mutex& torch_seed_mutex() {
  static std::mutex m;
  return m;
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace uigan
