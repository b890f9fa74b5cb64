#include "uigan/datagen.hpp"

#include "uigan/io.hpp"
#include "uigan/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace uigan {

namespace {

constexpr double kFaceCenter = (kHighRes - 1) / 2.0;

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Rgb {
  double r, g, b;
};

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

double coverage(double signed_distance) { return std::clamp(0.5 - signed_distance, 0.0, 1.0); }

double ellipse_sd(double x, double y, double cx, double cy, double rx, double ry) {
  const double k = std::hypot((x - cx) / rx, (y - cy) / ry);
  return (k - 1.0) * std::min(rx, ry);
}

double segment_sd(double x, double y, double ax, double ay, double bx, double by, double radius) {
  const double dx = bx - ax, dy = by - ay;
  const double t = std::clamp(((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(x - ax - t * dx, y - ay - t * dy) - radius;
}

// Canonical (pose-free) face geometry, symmetric about the image axis x = 63.5
// (pixel j has its centre at x = j).
struct FaceShape {
  double head_cy, head_rx, head_ry, hair_depth;
  double eye_y, eye_dx, eye_w, eye_h, iris_r;
  double brow_y, brow_w, brow_t;
  double nose_tip_y, nose_base_y, nose_w;
  double mouth_y, mouth_w, lip_up, lip_lo;
  Rgb background_top, background_bottom, skin, hair, iris, lips;
};

FaceShape sample_shape(Rng& rng) {
  FaceShape s{};
  s.head_cy = 66.0 + rng.uniform(-2.0, 2.0);
  s.head_rx = rng.uniform(36.0, 44.0);
  s.head_ry = rng.uniform(44.0, 52.0);
  s.hair_depth = rng.uniform(12.0, 22.0);
  s.eye_y = 54.0 + rng.uniform(-3.0, 3.0);
  s.eye_dx = rng.uniform(15.0, 19.0);
  s.eye_w = rng.uniform(6.0, 8.0);
  s.eye_h = rng.uniform(2.5, 4.0);
  s.iris_r = rng.uniform(2.0, 3.0);
  s.brow_y = s.eye_y - rng.uniform(9.0, 12.0);
  s.brow_w = rng.uniform(7.0, 10.0);
  s.brow_t = rng.uniform(1.5, 2.5);
  s.nose_tip_y = s.eye_y + rng.uniform(14.0, 20.0);
  s.nose_base_y = s.nose_tip_y + 3.0;
  s.nose_w = rng.uniform(4.0, 6.0);
  s.mouth_y = s.nose_tip_y + rng.uniform(10.0, 14.0);
  s.mouth_w = rng.uniform(9.0, 14.0);
  s.lip_up = rng.uniform(2.0, 4.0);
  s.lip_lo = rng.uniform(2.5, 5.0);

  s.background_top = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  s.background_bottom = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  const double r = rng.uniform(0.55, 0.95);
  const double g = r * rng.uniform(0.7, 0.85);
  s.skin = {r, g, g * rng.uniform(0.7, 0.9)};
  const double h = rng.uniform(0.05, 0.45);
  s.hair = {h, h * rng.uniform(0.6, 0.9), h * rng.uniform(0.4, 0.8)};
  s.iris = {rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.5)};
  s.lips = {rng.uniform(0.6, 0.85), rng.uniform(0.2, 0.35), rng.uniform(0.25, 0.4)};
  return s;
}

std::vector<Point> canonical_landmarks(const FaceShape& s) {
  constexpr double c = kFaceCenter;
  std::vector<Point> p(kNumLandmarks);
  for (int side = 0; side < 2; ++side) {
    const double dir = side == 0 ? -1.0 : 1.0;
    const double ex = c + dir * s.eye_dx;
    p[4 * side + 0] = {ex, s.eye_y};
    p[4 * side + 1] = {ex + dir * s.eye_w, s.eye_y};
    p[4 * side + 2] = {ex - dir * s.eye_w, s.eye_y};
    p[4 * side + 3] = {ex, s.eye_y - s.eye_h};
    p[15 + side] = {ex, s.brow_y};
  }
  p[8] = {c, s.eye_y + 2.0};
  p[9] = {c, s.nose_tip_y};
  p[10] = {c, s.nose_base_y};
  p[11] = {c - s.mouth_w, s.mouth_y};
  p[12] = {c + s.mouth_w, s.mouth_y};
  p[13] = {c, s.mouth_y - s.lip_up};
  p[14] = {c, s.mouth_y + s.lip_lo};
  return p;
}

Rgb shade(const FaceShape& s, double x, double y) {
  constexpr double c = kFaceCenter;
  Rgb px = lerp(s.background_top, s.background_bottom, y / kHighRes);

  const double head = coverage(ellipse_sd(x, y, c, s.head_cy, s.head_rx, s.head_ry));
  if (head > 0.0) {
    const double u = (x - c) / s.head_rx;
    const double light = 1.0 - 0.18 * u * u;
    Rgb skin{s.skin.r * light, s.skin.g * light, s.skin.b * light};
    const double hairline = s.head_cy - s.head_ry + s.hair_depth;
    const double hair = std::clamp(hairline - y + 0.5, 0.0, 1.0);
    px = lerp(px, lerp(skin, s.hair, hair), head);
  }

  for (int side = 0; side < 2; ++side) {
    const double dir = side == 0 ? -1.0 : 1.0;
    const double ex = c + dir * s.eye_dx;
    const double brow =
        coverage(segment_sd(x, y, ex - s.brow_w, s.brow_y + 1.0, ex + s.brow_w, s.brow_y + 1.0, s.brow_t));
    px = lerp(px, s.hair, brow);
    const double sclera = coverage(ellipse_sd(x, y, ex, s.eye_y, s.eye_w, s.eye_h));
    if (sclera > 0.0) {
      const double iris = coverage(ellipse_sd(x, y, ex, s.eye_y, s.iris_r, s.iris_r));
      const double pupil = coverage(ellipse_sd(x, y, ex, s.eye_y, s.iris_r * 0.45, s.iris_r * 0.45));
      Rgb eye = lerp(Rgb{0.95, 0.95, 0.93}, s.iris, iris);
      eye = lerp(eye, Rgb{0.03, 0.03, 0.03}, pupil);
      px = lerp(px, eye, sclera);
    }
    const double nostril =
        coverage(ellipse_sd(x, y, c + dir * s.nose_w * 0.6, s.nose_base_y - 1.0, 1.6, 1.0));
    px = lerp(px, Rgb{s.skin.r * 0.35, s.skin.g * 0.3, s.skin.b * 0.3}, nostril);
  }

  const double ridge = coverage(segment_sd(x, y, c, s.eye_y + 2.0, c, s.nose_tip_y, 0.8));
  px = lerp(px, Rgb{s.skin.r * 0.75, s.skin.g * 0.7, s.skin.b * 0.7}, ridge * 0.8);
  const double tip = coverage(ellipse_sd(x, y, c, s.nose_tip_y, s.nose_w, 2.5));
  px = lerp(px, Rgb{s.skin.r * 0.85, s.skin.g * 0.8, s.skin.b * 0.8}, tip * 0.6);

  const double lip_h = y < s.mouth_y ? s.lip_up : s.lip_lo;
  const double lips = coverage(ellipse_sd(x, y, c, s.mouth_y, s.mouth_w, lip_h));
  px = lerp(px, s.lips, lips);
  const double seam = coverage(segment_sd(x, y, c - s.mouth_w * 0.9, s.mouth_y, c + s.mouth_w * 0.9, s.mouth_y, 0.5));
  px = lerp(px, Rgb{s.lips.r * 0.4, s.lips.g * 0.3, s.lips.b * 0.3}, seam);
  return px;
}

std::string pair_dir_name(int64_t id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(id));
  return buf;
}

std::string landmarks_csv(const Landmarks& lm) {
  std::ostringstream out;
  out.precision(17);
  for (int k = 0; k < lm.size(); ++k) out << k << ',' << lm.points[k].x << ',' << lm.points[k].y << '\n';
  return out.str();
}

Landmarks parse_landmarks(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  Landmarks lm;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int index = 0;
    double x = 0, y = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf", &index, &x, &y) != 3 || index != lm.size()) {
      throw Error(path.string() + ": malformed landmark row '" + line + "'");
    }
    lm.points.push_back({x, y});
  }
  return lm;
}

constexpr int kDatasetVersion = 1;

}  // namespace

ToyFace make_toy_face(uint64_t seed, const FaceOptions& options) {
  Rng rng(seed);
  const FaceShape shape = sample_shape(rng);

  const double shift_range = options.extreme_pose ? 80.0 : options.max_shift;
  const double theta = rng.uniform(-1.0, 1.0) * options.max_rotation;
  const double scale = 1.0 + rng.uniform(-1.0, 1.0) * options.max_scale_jitter;
  const double tx = rng.uniform(-1.0, 1.0) * shift_range;
  const double ty = rng.uniform(-1.0, 1.0) * shift_range;
  const double cs = std::cos(theta), sn = std::sin(theta);
  constexpr double c = kFaceCenter;

  Landmarks lm;
  lm.extreme_pose = options.extreme_pose;
  for (const auto& p : canonical_landmarks(shape)) {
    const double dx = p.x - c, dy = p.y - c;
    lm.points.push_back({c + scale * (cs * dx - sn * dy) + tx, c + scale * (sn * dx + cs * dy) + ty});
  }

  auto image = torch::empty({3, kHighRes, kHighRes});
  auto acc = image.accessor<float, 3>();
  for (int i = 0; i < kHighRes; ++i) {
    for (int j = 0; j < kHighRes; ++j) {
      // Inverse pose: pixel centre -> canonical coordinates.
      const double px = j - c - tx, py = i - c - ty;
      const double x = c + (cs * px + sn * py) / scale;
      const double y = c + (-sn * px + cs * py) / scale;
      const Rgb v = shade(shape, x, y);
      acc[0][i][j] = static_cast<float>(std::clamp(v.r, 0.0, 1.0));
      acc[1][i][j] = static_cast<float>(std::clamp(v.g, 0.0, 1.0));
      acc[2][i][j] = static_cast<float>(std::clamp(v.b, 0.0, 1.0));
    }
  }
  return {quantize8(image), std::move(lm)};
}

std::vector<Box> component_boxes(const Landmarks& landmarks) {
  if (landmarks.size() != kNumLandmarks) throw Error("component_boxes: expected 17 landmarks");
  static const std::vector<std::vector<int>> kComponents = {
      {0, 1, 2, 3}, {4, 5, 6, 7}, {8, 9, 10}, {11, 12, 13, 14}};
  constexpr double kPad = 2.0;
  std::vector<Box> boxes;
  for (const auto& idx : kComponents) {
    double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
    for (int k : idx) {
      const auto& p = landmarks.points[k];
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("component_boxes: non-finite landmark");
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    const int bx0 = std::clamp(static_cast<int>(std::floor(x0 - kPad)), 0, kHighRes);
    const int by0 = std::clamp(static_cast<int>(std::floor(y0 - kPad)), 0, kHighRes);
    const int bx1 = std::clamp(static_cast<int>(std::ceil(x1 + kPad)) + 1, 0, kHighRes);
    const int by1 = std::clamp(static_cast<int>(std::ceil(y1 + kPad)) + 1, 0, kHighRes);
    boxes.push_back({bx0, by0, bx1 - bx0, by1 - by0});
  }
  return boxes;
}

Mask random_mask(const Landmarks& landmarks, uint64_t seed, std::optional<int> side) {
  std::vector<Box> candidates;
  for (const auto& b : component_boxes(landmarks)) {
    if (!b.empty()) candidates.push_back(b);
  }
  if (candidates.empty()) throw Error("random_mask: no facial component lies inside the frame");

  Rng rng(seed);
  const int s = side ? *side : rng.integer(kMinMaskSide, kMaxMaskSide);
  if (s < 1 || s > kHighRes) throw Error("random_mask: side out of range");
  const Box& target = candidates[static_cast<size_t>(rng.integer(0, static_cast<int>(candidates.size()) - 1))];
  // Positions whose [p, p + s) overlaps [lo, lo + len) and stay inside the frame.
  auto place = [&](int lo, int len) {
    const int first = std::max(0, lo - s + 1);
    const int last = std::min(kHighRes - s, lo + len - 1);
    return rng.integer(first, last);
  };
  const int x = place(target.x, target.w);
  const int y = place(target.y, target.h);
  return Mask::square({x, y, s, s});
}

torch::Tensor area_downsample(const torch::Tensor& image, int side) {
  const auto batched = image.dim() == 3 ? image.unsqueeze(0) : image;
  const int64_t factor = batched.size(-1) / side;
  if (factor < 1 || batched.size(-1) != factor * side) throw Error("area_downsample: size not divisible");
  auto out = factor == 1 ? batched : torch::avg_pool2d(batched, {factor, factor});
  return image.dim() == 3 ? out.squeeze(0) : out;
}

torch::Tensor degrade(const torch::Tensor& hr, const Mask& mask) {
  check_image(hr, kHighRes);
  if (mask.bits.size(0) != kHighRes || mask.bits.size(1) != kHighRes) throw Error("degrade: mask shape mismatch");
  const auto filled = torch::where(mask.bits.unsqueeze(0) > 0.5, torch::full_like(hr, kFillValue), hr);
  return area_downsample(filled, kLowRes);
}

torch::Tensor quantize8(const torch::Tensor& image) {
  return image.clamp(0.0, 1.0).mul(255.0).round().div(255.0);
}

torch::Tensor render_heatmaps(const Landmarks& landmarks, int resolution, double sigma) {
  if (resolution != 16 && resolution != 32 && resolution != 64 && resolution != 128) {
    throw Error("render_heatmaps: resolution must be 16, 32, 64 or 128");
  }
  if (!(sigma > 0.0)) throw Error("render_heatmaps: sigma must be positive");
  const int r = resolution;
  auto maps = torch::zeros({landmarks.size(), r, r});
  auto acc = maps.accessor<float, 3>();
  std::vector<double> buf(static_cast<size_t>(r) * r);
  for (int k = 0; k < landmarks.size(); ++k) {
    const double gx = to_grid(landmarks.points[k].x, r);
    const double gy = to_grid(landmarks.points[k].y, r);
    if (!(gx >= -0.5 && gx < r - 0.5 && gy >= -0.5 && gy < r - 0.5)) continue;
    double peak = 0.0;
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) {
        const double d2 = (i - gy) * (i - gy) + (j - gx) * (j - gx);
        const double v = std::exp(-d2 / (2.0 * sigma * sigma));
        buf[static_cast<size_t>(i) * r + j] = v;
        peak = std::max(peak, v);
      }
    }
    if (peak == 0.0) {
      acc[k][static_cast<int>(std::lround(gy))][static_cast<int>(std::lround(gx))] = 1.0f;
      continue;
    }
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) acc[k][i][j] = static_cast<float>(buf[static_cast<size_t>(i) * r + j] / peak);
    }
  }
  return maps;
}

ImagePair make_pair(uint64_t seed, int64_t id, const FaceOptions& options) {
  const uint64_t sample_seed = mix_seed(seed, static_cast<uint64_t>(id));
  auto face = make_toy_face(mix_seed(sample_seed, 1), options);
  auto mask = random_mask(face.landmarks, mix_seed(sample_seed, 2));
  ImagePair pair;
  pair.id = id;
  pair.lr_occluded = quantize8(degrade(face.image, mask));
  pair.hr_clean = std::move(face.image);
  pair.mask = std::move(mask);
  pair.landmarks = std::move(face.landmarks);
  return pair;
}

ImagePair augment_pair(const ImagePair& pair, int quarter_turns, bool flip) {
  auto hr = pair.hr_clean;
  auto bits = pair.mask.bits;
  auto lm = pair.landmarks;
  constexpr double last = kHighRes - 1;
  for (int t = 0; t < ((quarter_turns % 4) + 4) % 4; ++t) {
    // new(i, j) = old(j, N-1-i): counter-clockwise quarter turn.
    hr = hr.transpose(-2, -1).flip({-2});
    bits = bits.transpose(-2, -1).flip({-2});
    for (auto& p : lm.points) p = {p.y, last - p.x};
  }
  if (flip) {
    hr = hr.flip({-1});
    bits = bits.flip({-1});
    for (auto& p : lm.points) p.x = last - p.x;
    // Mirror semantic sides so index meaning survives the flip.
    for (int k = 0; k < 4; ++k) std::swap(lm.points[k], lm.points[4 + k]);
    std::swap(lm.points[kMouthLeftCorner], lm.points[kMouthLeftCorner + 1]);
    std::swap(lm.points[15], lm.points[16]);
  }
  ImagePair out;
  out.id = pair.id;
  out.hr_clean = hr.contiguous();
  out.mask = Mask::from_bits(bits.contiguous());
  out.landmarks = std::move(lm);
  out.lr_occluded = quantize8(degrade(out.hr_clean, out.mask));
  return out;
}

int build_dataset(const fs::path& dir, const BuildOptions& options) {
  if (options.n < 1) throw Error("build_dataset: n must be >= 1");
  std::error_code ec;
  fs::create_directories(dir / "pairs", ec);
  if (ec) throw Error("cannot create " + (dir / "pairs").string() + ": " + ec.message());

  std::vector<int> sides;
  std::map<int, int> histogram;
  int64_t next_id = 0;
  auto write_pair = [&](ImagePair pair) {
    pair.id = next_id++;
    const auto pdir = dir / "pairs" / pair_dir_name(pair.id);
    fs::create_directories(pdir, ec);
    if (ec) throw Error("cannot create " + pdir.string() + ": " + ec.message());
    io::write_png(pdir / "hr.png", pair.hr_clean);
    io::write_png(pdir / "lr.png", pair.lr_occluded);
    io::write_png(pdir / "mask.png", pair.mask.bits);
    io::write_file(pdir / "landmarks.csv", landmarks_csv(pair.landmarks));
    sides.push_back(pair.mask.box.w);
    ++histogram[pair.mask.box.w];
  };

  for (int i = 0; i < options.n; ++i) {
    auto base = make_pair(options.seed, i, options.face);
    if (!options.augment) {
      write_pair(std::move(base));
      continue;
    }
    for (int v = 0; v < 8; ++v) write_pair(augment_pair(base, v % 4, v >= 4));
  }

  json hist = json::object();
  for (const auto& [side, count] : histogram) hist[std::to_string(side)] = count;
  const json manifest = {
      {"version", kDatasetVersion},
      {"seed", options.seed},
      {"n", static_cast<int>(sides.size())},
      {"n_base", options.n},
      {"K", kNumLandmarks},
      {"augment", options.augment},
      {"extreme_pose", options.face.extreme_pose},
      {"fill_value", kFillValue},
      {"heatmap_sigma_16", heatmap_sigma(kLowRes)},
      {"mask_sides", sides},
      {"mask_side_histogram", hist},
  };
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return static_cast<int>(sides.size());
}

Dataset Dataset::from_pairs(std::vector<ImagePair> pairs) {
  if (pairs.empty()) throw Error("Dataset: no pairs");
  Dataset ds;
  std::vector<torch::Tensor> lr, hr;
  std::array<std::vector<torch::Tensor>, kNumStages> heat;
  for (const auto& p : pairs) {
    check_image(p.lr_occluded, kLowRes);
    check_image(p.hr_clean, kHighRes);
    lr.push_back(p.lr_occluded);
    hr.push_back(p.hr_clean);
    for (int s = 1; s <= kNumStages; ++s) heat[s - 1].push_back(render_heatmaps(p.landmarks, stage_feature_side(s)));
  }
  ds.lr = torch::stack(lr);
  ds.hr = torch::stack(hr);
  for (int s = 1; s <= kNumStages; ++s) {
    ds.image_targets[s - 1] = area_downsample(ds.hr, stage_image_side(s)).contiguous();
    ds.heatmap_targets[s - 1] = torch::stack(heat[s - 1]);
  }
  ds.pairs = std::move(pairs);
  return ds;
}

Dataset Dataset::load(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error("dataset missing: " + manifest_path.string());
  json manifest;
  try {
    const auto bytes = io::read_file(manifest_path);
    manifest = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(manifest_path.string() + ": " + e.what());
  }
  const int n = manifest.at("n").get<int>();
  const int k = manifest.at("K").get<int>();
  const bool extreme = manifest.value("extreme_pose", false);
  std::vector<ImagePair> pairs;
  for (int id = 0; id < n; ++id) {
    const auto pdir = dir / "pairs" / pair_dir_name(id);
    ImagePair p;
    p.id = id;
    p.hr_clean = io::read_png(pdir / "hr.png");
    p.lr_occluded = io::read_png(pdir / "lr.png");
    p.mask = Mask::from_bits(io::read_png(pdir / "mask.png"));
    p.landmarks = parse_landmarks(pdir / "landmarks.csv");
    p.landmarks.extreme_pose = extreme;
    if (p.landmarks.size() != k) throw Error((pdir / "landmarks.csv").string() + ": landmark count mismatch");
    pairs.push_back(std::move(p));
  }
  auto ds = from_pairs(std::move(pairs));
  ds.seed = manifest.at("seed").get<uint64_t>();
  return ds;
}

}  // namespace uigan
