#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "rdc/tensor.hpp"

// 8-bit lossless image I/O (binary PPM/PGM) and plane helpers. Images are
// carried as [3,H,W] tensors with values in [0,1].

namespace rdc {

template <typename T>
Tensor<T> image_from_bytes(const std::vector<uint8_t>& rgb, int64_t h,
                           int64_t w) {
  Tensor<T> img({3, h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        img.at3(c, y, x) =
            static_cast<T>(rgb[(y * w + x) * 3 + c] / 255.0);
  return img;
}

template <typename T>
std::vector<uint8_t> image_to_bytes(const Tensor<T>& img) {
  const int64_t h = img.dim(1), w = img.dim(2);
  std::vector<uint8_t> rgb(static_cast<size_t>(h) * w * 3);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        double v = std::clamp((double)img.at3(c, y, x), 0.0, 1.0);
        rgb[(y * w + x) * 3 + c] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
  return rgb;
}

template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& img) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw io_error("write_ppm: expected [3,H,W] image");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for write: " + path);
  f << "P6\n" << img.dim(2) << " " << img.dim(1) << "\n255\n";
  auto rgb = image_to_bytes(img);
  f.write(reinterpret_cast<const char*>(rgb.data()), rgb.size());
  if (!f) throw io_error("short write: " + path);
}

// Grayscale PGM, used for diagnostic spectra.
inline void write_pgm(const std::string& path,
                      const std::vector<uint8_t>& gray, int64_t h,
                      int64_t w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for write: " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(gray.data()), gray.size());
  if (!f) throw io_error("short write: " + path);
}

namespace detail {
inline int ppm_next_int(std::istream& in) {
  // Skips whitespace and '#' comments per the PNM grammar.
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = in.get();
    c = in.get();
  }
  int val = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    val = val * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw io_error("malformed PNM header");
  return val;
}
}  // namespace detail

template <typename T>
Tensor<T> read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '6') throw io_error("not a binary PPM: " + path);
  const int w = detail::ppm_next_int(f);
  const int h = detail::ppm_next_int(f);
  const int maxval = detail::ppm_next_int(f);
  if (maxval != 255) throw io_error("only 8-bit PPM supported: " + path);
  std::vector<uint8_t> rgb(static_cast<size_t>(h) * w * 3);
  f.read(reinterpret_cast<char*>(rgb.data()), rgb.size());
  if (f.gcount() != static_cast<std::streamsize>(rgb.size()))
    throw io_error("truncated PPM: " + path);
  return image_from_bytes<T>(rgb, h, w);
}

// Reflect-pad on the right/bottom to the given size. The fold uses a
// triangle wave with period 2(n-1) so pads larger than the image stay
// well defined.
template <typename T>
Tensor<T> reflect_pad(const Tensor<T>& img, int64_t ph, int64_t pw) {
  const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  auto fold = [](int64_t i, int64_t n) {
    if (n == 1) return int64_t(0);
    const int64_t period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  Tensor<T> out({c, ph, pw});
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t y = 0; y < ph; ++y) {
      const int64_t sy = fold(y, h);
      for (int64_t x = 0; x < pw; ++x)
        out.at3(ci, y, x) = img.at3(ci, sy, fold(x, w));
    }
  return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& img, int64_t h, int64_t w) {
  const int64_t c = img.dim(0);
  Tensor<T> out({c, h, w});
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) out.at3(ci, y, x) = img.at3(ci, y, x);
  return out;
}

template <typename T>
Tensor<T> clip01(const Tensor<T>& img) {
  return img.map([](T v) { return std::clamp(v, T(0), T(1)); });
}

inline int64_t pad_to_multiple(int64_t n, int64_t m) {
  return ((n + m - 1) / m) * m;
}

// [3,H,W] -> [1,3,H,W]
template <typename T>
Tensor<T> to_batch(const Tensor<T>& img) {
  return img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
}

template <typename T>
Tensor<T> from_batch(const Tensor<T>& x4) {
  return x4.reshaped({x4.dim(1), x4.dim(2), x4.dim(3)});
}

}  // namespace rdc
