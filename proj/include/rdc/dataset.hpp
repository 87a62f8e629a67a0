#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rdc/image.hpp"
#include "rdc/random.hpp"

// Toy 10-class 64x64 shape dataset (procedurally generated, versioned by
// its seed) plus manifest-driven ingestion: one "path,label" line per
// image, paths relative to the manifest's directory.

namespace rdc {

inline constexpr int kToyClasses = 10;
inline constexpr int64_t kToyImageSize = 64;

struct LabeledImage {
  std::string path;
  int label = 0;
};

template <typename T>
class Dataset {
 public:
  Dataset() = default;

  static Dataset load_manifest(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw io_error("cannot open manifest: " + manifest_path);
    Dataset ds;
    ds.root_ = std::filesystem::path(manifest_path).parent_path().string();
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto comma = line.rfind(',');
      if (comma == std::string::npos)
        throw io_error("manifest line " + std::to_string(lineno) +
                       ": expected path,label");
      LabeledImage li;
      li.path = line.substr(0, comma);
      li.label = std::stoi(line.substr(comma + 1));
      ds.items_.push_back(std::move(li));
    }
    return ds;
  }

  size_t size() const { return items_.size(); }
  int label(size_t i) const { return items_[i].label; }
  const std::vector<LabeledImage>& items() const { return items_; }

  const Tensor<T>& image(size_t i) const {
    if (cache_.size() != items_.size()) cache_.resize(items_.size());
    if (cache_[i].empty()) {
      std::string full = root_.empty()
                             ? items_[i].path
                             : (std::filesystem::path(root_) / items_[i].path)
                                   .string();
      cache_[i] = read_ppm<T>(full);
    }
    return cache_[i];
  }

  // Stack a set of images into [B,3,H,W].
  Tensor<T> batch(const std::vector<size_t>& idx) const {
    const Tensor<T>& first = image(idx[0]);
    const int64_t c = first.dim(0), h = first.dim(1), w = first.dim(2);
    Tensor<T> out({static_cast<int64_t>(idx.size()), c, h, w});
    for (size_t b = 0; b < idx.size(); ++b) {
      const Tensor<T>& img = image(idx[b]);
      if (img.dim(1) != h || img.dim(2) != w)
        throw io_error("dataset images must share a size for batching");
      std::copy_n(img.data(), c * h * w, out.data() + b * c * h * w);
    }
    return out;
  }

  std::vector<size_t> sample_indices(int64_t n, Rng& rng) const {
    std::vector<size_t> idx(n);
    for (int64_t i = 0; i < n; ++i)
      idx[i] = static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(size()) - 1));
    return idx;
  }

 private:
  std::string root_;
  std::vector<LabeledImage> items_;
  mutable std::vector<Tensor<T>> cache_;
};

// --------------------------------------------------------------------------
// Augmentations (crop + flip + color jitter) for the contrastive pipeline.
// --------------------------------------------------------------------------

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& img, int64_t oh, int64_t ow) {
  const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor<T> out({c, oh, ow});
  for (int64_t y = 0; y < oh; ++y) {
    const double fy = (oh == 1) ? 0.0 : (double)y * (h - 1) / (oh - 1);
    const int64_t y0 = static_cast<int64_t>(fy);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int64_t x = 0; x < ow; ++x) {
      const double fx = (ow == 1) ? 0.0 : (double)x * (w - 1) / (ow - 1);
      const int64_t x0 = static_cast<int64_t>(fx);
      const int64_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int64_t ci = 0; ci < c; ++ci) {
        const double v = (1 - wy) * ((1 - wx) * img.at3(ci, y0, x0) +
                                     wx * img.at3(ci, y0, x1)) +
                         wy * ((1 - wx) * img.at3(ci, y1, x0) +
                               wx * img.at3(ci, y1, x1));
        out.at3(ci, y, x) = static_cast<T>(v);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> augment(const Tensor<T>& img, Rng& rng) {
  const int64_t h = img.dim(1), w = img.dim(2);
  // Random resized crop.
  const double scale = rng.uniform(0.7, 1.0);
  const int64_t ch = std::max<int64_t>(8, (int64_t)std::lround(scale * h));
  const int64_t cw = std::max<int64_t>(8, (int64_t)std::lround(scale * w));
  const int64_t oy = rng.uniform_int(0, h - ch);
  const int64_t ox = rng.uniform_int(0, w - cw);
  Tensor<T> cropped({3, ch, cw});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < ch; ++y)
      for (int64_t x = 0; x < cw; ++x)
        cropped.at3(c, y, x) = img.at3(c, oy + y, ox + x);
  Tensor<T> out = bilinear_resize(cropped, h, w);
  // Horizontal flip.
  if (rng.uniform() < 0.5) {
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w / 2; ++x)
          std::swap(out.at3(c, y, x), out.at3(c, y, w - 1 - x));
  }
  // Per-channel color jitter.
  for (int64_t c = 0; c < 3; ++c) {
    const double mul = rng.uniform(0.75, 1.25);
    const double add = rng.uniform(-0.1, 0.1);
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        out.at3(c, y, x) = static_cast<T>(
            std::clamp(mul * out.at3(c, y, x) + add, 0.0, 1.0));
  }
  return out;
}

// --------------------------------------------------------------------------
// Procedural generator. Class identity is the shape/texture; colors,
// placement and noise are nuisance factors.
// --------------------------------------------------------------------------

template <typename T>
Tensor<T> make_toy_image(int label, Rng& rng,
                         int64_t size = kToyImageSize) {
  Tensor<T> img({3, size, size});
  double bg[3], fg[3];
  for (;;) {
    double dist = 0;
    for (int c = 0; c < 3; ++c) {
      bg[c] = rng.uniform(0.1, 0.9);
      fg[c] = rng.uniform(0.1, 0.9);
      dist = std::max(dist, std::abs(bg[c] - fg[c]));
    }
    if (dist > 0.3) break;
  }
  // Soft background gradient.
  const double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c)
        img.at3(c, y, x) = static_cast<T>(std::clamp(
            bg[c] + gx * (x / (double)size - 0.5) +
                gy * (y / (double)size - 0.5),
            0.0, 1.0));

  const double cx = size / 2.0 + rng.uniform(-8, 8);
  const double cy = size / 2.0 + rng.uniform(-8, 8);
  const double rad = rng.uniform(0.22, 0.38) * size;
  const double period = rng.uniform(8, 16);
  const double phase = rng.uniform(0, period);
  auto inside = [&](double x, double y) -> bool {
    const double dx = x - cx, dy = y - cy;
    switch (label) {
      case 0:  // disc
        return dx * dx + dy * dy < rad * rad;
      case 1:  // square
        return std::abs(dx) < rad * 0.85 && std::abs(dy) < rad * 0.85;
      case 2:  // triangle (point-up)
        return dy > -rad && dy < rad * 0.8 &&
               std::abs(dx) < (dy + rad) * 0.55;
      case 3: {  // ring
        const double d2 = dx * dx + dy * dy;
        return d2 < rad * rad && d2 > rad * rad * 0.35;
      }
      case 4:  // plus
        return (std::abs(dx) < rad * 0.3 && std::abs(dy) < rad) ||
               (std::abs(dy) < rad * 0.3 && std::abs(dx) < rad);
      case 5:  // horizontal stripes
        return std::fmod(y + phase, period) < period * 0.5;
      case 6:  // vertical stripes
        return std::fmod(x + phase, period) < period * 0.5;
      case 7:  // checkerboard
        return (static_cast<int>((x + phase) / period) +
                static_cast<int>((y + phase) / period)) %
                   2 ==
               0;
      case 8: {  // dot lattice
        const double mx = std::fmod(x + phase, period) - period / 2;
        const double my = std::fmod(y + phase, period) - period / 2;
        return mx * mx + my * my < period * period * 0.09;
      }
      default:  // diagonal stripes
        return std::fmod(x + y + phase, period) < period * 0.5;
    }
  };
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x)
      if (inside(x + 0.5, y + 0.5))
        for (int c = 0; c < 3; ++c) img.at3(c, y, x) = static_cast<T>(fg[c]);

  // Sensor-ish noise.
  for (int64_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<T>(
        std::clamp((double)img[i] + rng.normal(0.0, 0.015), 0.0, 1.0));
  return img;
}

// Writes images/ + {train,val,test}.txt manifests under dir.
inline void make_toy_dataset(const std::string& dir, int n_train, int n_val,
                             int n_test, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  Rng rng(Rng::splitmix(seed ^ 0x7071d5u));
  auto emit = [&](const char* split, int count) {
    std::ofstream manifest((fs::path(dir) / (std::string(split) + ".txt")));
    if (!manifest) throw io_error("cannot write manifest in " + dir);
    for (int i = 0; i < count; ++i) {
      const int label = i % kToyClasses;
      Tensor<float> img = make_toy_image<float>(label, rng);
      std::ostringstream name;
      name << "images/" << split << "_" << i << ".ppm";
      write_ppm((fs::path(dir) / name.str()).string(), img);
      manifest << name.str() << "," << label << "\n";
    }
  };
  emit("train", n_train);
  emit("val", n_val);
  emit("test", n_test);
}

}  // namespace rdc
