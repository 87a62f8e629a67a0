#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rdc/config.hpp"
#include "rdc/nn.hpp"

// Versioned checkpoint container: magic, version, kind, a flat key=value
// config echo, then named raw tensors (dtype tagged, little endian).

namespace rdc {

namespace ckpt_detail {

inline void put_u32(std::ostream& out, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16),
                  static_cast<uint8_t>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}
inline void put_u64(std::ostream& out, uint64_t v) {
  put_u32(out, static_cast<uint32_t>(v));
  put_u32(out, static_cast<uint32_t>(v >> 32));
}
inline uint32_t get_u32(std::istream& in) {
  uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw version_error("truncated checkpoint");
  return b[0] | (b[1] << 8) | (b[2] << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}
inline uint64_t get_u64(std::istream& in) {
  const uint64_t lo = get_u32(in);
  return lo | (static_cast<uint64_t>(get_u32(in)) << 32);
}

}  // namespace ckpt_detail

struct StoredTensor {
  Shape shape;
  int dtype = 0;  // sizeof scalar: 4 = float, 8 = double
  std::vector<uint8_t> raw;

  template <typename T>
  Tensor<T> as() const {
    Tensor<T> out(shape);
    if (dtype == static_cast<int>(sizeof(T))) {
      std::memcpy(out.data(), raw.data(), raw.size());
    } else if (dtype == 4) {
      const float* src = reinterpret_cast<const float*>(raw.data());
      for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(src[i]);
    } else if (dtype == 8) {
      const double* src = reinterpret_cast<const double*>(raw.data());
      for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(src[i]);
    } else {
      throw version_error("unknown tensor dtype in checkpoint");
    }
    return out;
  }
};

struct Checkpoint {
  std::string kind;
  KvMap config;
  std::vector<std::pair<std::string, StoredTensor>> tensors;

  const StoredTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.first == name) return &t.second;
    return nullptr;
  }
};

template <typename T>
void save_checkpoint(const std::string& path, const std::string& kind,
                     const KvMap& config, const ParamStore<T>& params) {
  using namespace ckpt_detail;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open checkpoint for write: " + path);
  f.write("RDCK", 4);
  put_u32(f, kCheckpointVersion);
  put_u32(f, static_cast<uint32_t>(kind.size()));
  f.write(kind.data(), kind.size());
  const std::string cfg = kv_serialize(config);
  put_u64(f, cfg.size());
  f.write(cfg.data(), cfg.size());
  put_u64(f, params.items().size());
  for (const auto& [name, var] : params.items()) {
    put_u32(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), name.size());
    f.put(static_cast<char>(sizeof(T)));
    const auto& shape = var.value().shape();
    f.put(static_cast<char>(shape.size()));
    for (int64_t d : shape) put_u64(f, static_cast<uint64_t>(d));
    f.write(reinterpret_cast<const char*>(var.value().data()),
            sizeof(T) * var.value().numel());
  }
  if (!f) throw io_error("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open checkpoint: " + path);
  char magic[4] = {};
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "RDCK", 4) != 0)
    throw version_error("not a checkpoint file: " + path);
  const uint32_t version = get_u32(f);
  if (version != kCheckpointVersion)
    throw version_error("unsupported checkpoint version " +
                        std::to_string(version));
  Checkpoint ck;
  const uint32_t klen = get_u32(f);
  ck.kind.resize(klen);
  f.read(ck.kind.data(), klen);
  const uint64_t clen = get_u64(f);
  std::string cfg(clen, '\0');
  f.read(cfg.data(), clen);
  ck.config = kv_parse(cfg);
  const uint64_t count = get_u64(f);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t nlen = get_u32(f);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    StoredTensor t;
    t.dtype = f.get();
    const int ndim = f.get();
    if (!f) throw version_error("truncated checkpoint: " + path);
    int64_t numel = 1;
    for (int d = 0; d < ndim; ++d) {
      t.shape.push_back(static_cast<int64_t>(get_u64(f)));
      numel *= t.shape.back();
    }
    t.raw.resize(static_cast<size_t>(numel) * t.dtype);
    f.read(reinterpret_cast<char*>(t.raw.data()), t.raw.size());
    if (!f) throw version_error("truncated checkpoint: " + path);
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

// Strict restore: every parameter must be present with a matching shape.
template <typename T>
void restore_params(const Checkpoint& ck, ParamStore<T>& params) {
  for (auto& [name, var] : params.items()) {
    const StoredTensor* st = ck.find(name);
    if (!st)
      throw version_error("checkpoint missing parameter: " + name);
    if (st->shape != var.value().shape())
      throw version_error("checkpoint shape mismatch for " + name);
    var.value() = st->template as<T>();
  }
}

// Codec convenience wrappers.
template <typename T>
void save_codec(const std::string& path, const CodecModel<T>& model) {
  save_checkpoint(path, "codec", codec_config_to_map(model.cfg()),
                  model.params());
}

template <typename T>
CodecModel<T> load_codec(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "codec")
    throw version_error("expected a codec checkpoint, got kind '" + ck.kind +
                        "'");
  CodecModel<T> model(codec_config_from_map(ck.config));
  restore_params(ck, model.params());
  return model;
}

}  // namespace rdc
