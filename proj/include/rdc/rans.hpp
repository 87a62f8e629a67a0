#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <vector>

#include "rdc/entropy.hpp"

// 64-bit rANS with 16-bit frequency precision. Symbols are buffered and
// flushed in reverse with 32-bit renormalization, so the decoder consumes
// the byte stream strictly forward. Out-of-alphabet values go through the
// escape slot followed by raw 4-bit bypass chunks.

namespace rdc {

namespace rans_detail {
inline constexpr uint64_t kRansL = 1ull << 31;
inline constexpr uint32_t kBypassBits = 4;
inline constexpr uint32_t kMaxBypass = (1u << kBypassBits) - 1;

struct BufferedSymbol {
  uint16_t start;
  uint16_t range;
  bool bypass;
};
}  // namespace rans_detail

class RansEncoder {
 public:
  // Buffer one alphabet symbol (k is the symbol value, not the slot).
  void put(const CdfTable& t, int32_t k) {
    using namespace rans_detail;
    int32_t slot = k - t.offset;
    if (slot < 0 || slot >= t.nsym) {
      // Escape: emit the escape slot then the overflow distance, sign in
      // the low bit.
      const uint32_t raw =
          slot < 0 ? 2u * static_cast<uint32_t>(-slot - 1) + 1u
                   : 2u * static_cast<uint32_t>(slot - t.nsym);
      push_slot(t, t.escape_slot());
      uint32_t n_bypass = 0;
      while ((raw >> (n_bypass * kBypassBits)) != 0) ++n_bypass;
      uint32_t val = n_bypass;
      while (val >= kMaxBypass) {
        syms_.push_back({static_cast<uint16_t>(kMaxBypass),
                         static_cast<uint16_t>(kMaxBypass + 1), true});
        val -= kMaxBypass;
      }
      syms_.push_back(
          {static_cast<uint16_t>(val), static_cast<uint16_t>(val + 1), true});
      for (uint32_t j = 0; j < n_bypass; ++j) {
        const uint32_t chunk = (raw >> (j * kBypassBits)) & kMaxBypass;
        syms_.push_back({static_cast<uint16_t>(chunk),
                         static_cast<uint16_t>(chunk + 1), true});
      }
    } else {
      push_slot(t, slot);
    }
  }

  std::vector<uint8_t> flush() {
    using namespace rans_detail;
    std::vector<uint32_t> words(syms_.size() + 2);
    uint32_t* end = words.data() + words.size();
    uint32_t* ptr = end;
    uint64_t x = kRansL;
    for (auto it = syms_.rbegin(); it != syms_.rend(); ++it) {
      if (!it->bypass) {
        const uint32_t freq = it->range;
        const uint64_t x_max = ((kRansL >> kCdfPrecision) << 32) * freq;
        if (x >= x_max) {
          *--ptr = static_cast<uint32_t>(x);
          x >>= 32;
        }
        x = ((x / freq) << kCdfPrecision) + (x % freq) + it->start;
      } else {
        const uint32_t freq = 1u << (kCdfPrecision - kBypassBits);
        const uint64_t x_max = ((kRansL >> kCdfPrecision) << 32) * freq;
        if (x >= x_max) {
          *--ptr = static_cast<uint32_t>(x);
          x >>= 32;
        }
        x = (x << kBypassBits) | it->start;
      }
    }
    ptr -= 2;
    ptr[0] = static_cast<uint32_t>(x);
    ptr[1] = static_cast<uint32_t>(x >> 32);
    syms_.clear();
    std::vector<uint8_t> out(sizeof(uint32_t) * (end - ptr));
    std::memcpy(out.data(), ptr, out.size());
    return out;
  }

 private:
  void push_slot(const CdfTable& t, int32_t slot) {
    syms_.push_back({static_cast<uint16_t>(t.cdf[slot]),
                     static_cast<uint16_t>(t.freq(slot)), false});
  }
  std::vector<rans_detail::BufferedSymbol> syms_;
};

class RansDecoder {
 public:
  RansDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
    if (size < 8 || size % 4 != 0)
      throw stream_error("range payload too short or misaligned", 0);
    x_ = static_cast<uint64_t>(word(0)) |
         (static_cast<uint64_t>(word(1)) << 32);
    pos_ = 2;
  }

  int32_t get(const CdfTable& t) {
    using namespace rans_detail;
    const uint32_t cum = static_cast<uint32_t>(x_ & (kCdfTotal - 1));
    const auto it = std::upper_bound(t.cdf.begin(), t.cdf.end(), cum);
    const int32_t slot = static_cast<int32_t>(it - t.cdf.begin()) - 1;
    advance(t.cdf[slot], t.freq(slot));
    if (slot != t.escape_slot()) return t.offset + slot;
    uint32_t val = get_bits(kBypassBits);
    uint32_t n_bypass = val;
    while (val == kMaxBypass) {
      val = get_bits(kBypassBits);
      n_bypass += val;
    }
    uint32_t raw = 0;
    for (uint32_t j = 0; j < n_bypass; ++j)
      raw |= get_bits(kBypassBits) << (j * kBypassBits);
    return (raw & 1u) ? t.offset - static_cast<int32_t>(raw >> 1) - 1
                      : t.offset + t.nsym + static_cast<int32_t>(raw >> 1);
  }

  size_t consumed_bytes() const { return pos_ * 4; }

 private:
  uint32_t word(size_t i) const {
    if ((i + 1) * 4 > size_)
      throw stream_error("range payload exhausted", i * 4);
    uint32_t w;
    std::memcpy(&w, data_ + i * 4, 4);
    return w;
  }

  void advance(uint32_t start, uint32_t freq) {
    x_ = freq * (x_ >> kCdfPrecision) + (x_ & (kCdfTotal - 1)) - start;
    if (x_ < rans_detail::kRansL) x_ = (x_ << 32) | word(pos_++);
  }

  uint32_t get_bits(uint32_t nbits) {
    const uint32_t val = static_cast<uint32_t>(x_ & ((1u << nbits) - 1));
    x_ >>= nbits;
    if (x_ < rans_detail::kRansL) x_ = (x_ << 32) | word(pos_++);
    return val;
  }

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  uint64_t x_ = 0;
};

// Convenience wrappers used by the container and tests.
inline std::vector<uint8_t> range_encode(const std::vector<int32_t>& symbols,
                                         const std::vector<const CdfTable*>&
                                             tables) {
  RansEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) enc.put(*tables[i], symbols[i]);
  return enc.flush();
}

inline std::vector<int32_t> range_decode(
    const std::vector<uint8_t>& bytes,
    const std::vector<const CdfTable*>& tables) {
  RansDecoder dec(bytes.data(), bytes.size());
  std::vector<int32_t> out(tables.size());
  for (size_t i = 0; i < tables.size(); ++i) out[i] = dec.get(*tables[i]);
  return out;
}

}  // namespace rdc
