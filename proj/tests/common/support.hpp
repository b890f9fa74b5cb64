#pragma once

#include "uigan/config.hpp"
#include "uigan/datagen.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace uigan::testing {

inline ModelConfig tiny_config(uint64_t seed = 0) {
  ModelConfig c;
  c.channels = 8;
  c.residual_blocks = 1;
  c.disc_channels = 8;
  c.seed = seed;
  return c;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("uigan_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline bool bit_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.dtype() == b.dtype() && torch::equal(a, b);
}

// Largest relative error between autograd and central differences of a
// scalar float64 function, over `probes` randomly chosen coordinates.
inline double max_fd_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                           int probes = 24, double h = 1e-6, uint64_t seed = 0) {
  x = x.to(torch::kFloat64).detach().clone().set_requires_grad(true);
  auto y = f(x);
  y.backward();
  const auto grad = x.grad().clone();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> pick(0, x.numel() - 1);
  double worst = 0.0;
  torch::NoGradGuard no_grad;
  auto flat = x.view({-1});
  for (int i = 0; i < probes; ++i) {
    const int64_t k = pick(rng);
    const double orig = flat[k].item<double>();
    flat[k] = orig + h;
    const double up = f(x).item<double>();
    flat[k] = orig - h;
    const double down = f(x).item<double>();
    flat[k] = orig;
    const double numeric = (up - down) / (2 * h);
    const double analytic = grad.view({-1})[k].item<double>();
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
  }
  return worst;
}

inline std::vector<ImagePair> toy_pairs(int n, uint64_t seed = 5) {
  std::vector<ImagePair> pairs;
  for (int i = 0; i < n; ++i) pairs.push_back(make_pair(seed, i));
  return pairs;
}

}  // namespace uigan::testing
