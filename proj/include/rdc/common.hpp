#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rdc {

inline constexpr int kFormatVersion = 1;       // .rdc container version
inline constexpr int kCheckpointVersion = 1;   // .rdck checkpoint version

// Spatial divisibility required by the transform stack (4 + 2 halvings).
inline constexpr int kSpatialMultiple = 64;

// Clamp floor for the conditional Gaussian scale.
inline constexpr double kSigmaMin = 0.11;

// Pixel values are carried in [0,1]; losses that follow the 8-bit
// convention scale by 255 before squaring.
inline constexpr double kPixelScale = 255.0;

struct config_error : std::runtime_error {
  explicit config_error(const std::string& m) : std::runtime_error(m) {}
};
struct range_error : std::runtime_error {
  explicit range_error(const std::string& m) : std::runtime_error(m) {}
};
struct padding_required_error : std::runtime_error {
  explicit padding_required_error(const std::string& m)
      : std::runtime_error(m) {}
};
struct io_error : std::runtime_error {
  explicit io_error(const std::string& m) : std::runtime_error(m) {}
};
// Decode failures carry the byte offset where parsing stopped.
struct stream_error : std::runtime_error {
  std::size_t byte_offset;
  stream_error(const std::string& m, std::size_t off)
      : std::runtime_error(m + " (byte offset " + std::to_string(off) + ")"),
        byte_offset(off) {}
};
struct version_error : std::runtime_error {
  explicit version_error(const std::string& m) : std::runtime_error(m) {}
};
struct invariant_error : std::logic_error {
  explicit invariant_error(const std::string& m) : std::logic_error(m) {}
};
struct divergence_error : std::runtime_error {
  explicit divergence_error(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace rdc
