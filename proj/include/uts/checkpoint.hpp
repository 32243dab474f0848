#pragma once

// Checkpoint container: magic, version, the five ablation flags, then each
// named parameter as (name, shape, little-endian f64 data). Byte layout is
// documented in the README; files are bit-reproducible for identical
// parameters.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "uts/error.hpp"
#include "uts/lvit.hpp"

namespace uts {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'U', 'T', 'S', 'C', 'K', 'P', 'T', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {
inline void put_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
inline uint32_t get_u32(std::ifstream& in, const std::string& path) {
  uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw InputError(path + ": truncated checkpoint");
  return v;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const LVitParams& params,
                            const LVitConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out.write(kCheckpointMagic, 8);
  detail::put_u32(out, kCheckpointVersion);
  const uint8_t flags[5] = {static_cast<uint8_t>(cfg.use_datse),
                            static_cast<uint8_t>(cfg.use_dcbam),
                            static_cast<uint8_t>(cfg.use_mlff),
                            static_cast<uint8_t>(cfg.use_vtm),
                            static_cast<uint8_t>(cfg.use_linear_attn)};
  out.write(reinterpret_cast<const char*>(flags), 5);

  LVitParams copy = params;
  auto named = named_params(copy);
  detail::put_u32(out, static_cast<uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    detail::put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(out, static_cast<uint32_t>(t->rank()));
    for (int d = 0; d < t->rank(); ++d) detail::put_u32(out, static_cast<uint32_t>(t->dim(d)));
    out.write(reinterpret_cast<const char*>(t->data.data()),
              static_cast<std::streamsize>(t->data.size() * sizeof(double)));
  }
  if (!out) throw InputError("write failed for " + path);
}

struct Checkpoint {
  LVitParams params;
  LVitConfig config;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw InputError(path + " is not a checkpoint file");
  const uint32_t version = detail::get_u32(in, path);
  if (version != kCheckpointVersion)
    throw InputError(path + ": unsupported checkpoint version " + std::to_string(version));
  uint8_t flags[5];
  if (!in.read(reinterpret_cast<char*>(flags), 5)) throw InputError(path + ": truncated checkpoint");

  Checkpoint ck;
  ck.config.use_datse = flags[0] != 0;
  ck.config.use_dcbam = flags[1] != 0;
  ck.config.use_mlff = flags[2] != 0;
  ck.config.use_vtm = flags[3] != 0;
  ck.config.use_linear_attn = flags[4] != 0;
  ck.params = make_params();

  auto named = named_params(ck.params);
  const uint32_t count = detail::get_u32(in, path);
  if (count != named.size())
    throw InputError(path + ": expected " + std::to_string(named.size()) + " parameters, found " +
                     std::to_string(count));
  std::vector<bool> seen(named.size(), false);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = detail::get_u32(in, path);
    if (name_len > 4096) throw InputError(path + ": implausible name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw InputError(path + ": truncated checkpoint");
    const uint32_t rank = detail::get_u32(in, path);
    if (rank > 8) throw InputError(path + ": implausible rank for '" + name + "'");
    std::vector<int> shape(rank);
    for (uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<int>(detail::get_u32(in, path));

    size_t slot = named.size();
    for (size_t j = 0; j < named.size(); ++j)
      if (named[j].first == name) {
        slot = j;
        break;
      }
    if (slot == named.size()) throw InputError(path + ": unknown parameter '" + name + "'");
    if (seen[slot]) throw InputError(path + ": duplicate parameter '" + name + "'");
    seen[slot] = true;
    Tensor* t = named[slot].second;
    if (shape != t->shape) {
      std::string got = "[";
      for (size_t d = 0; d < shape.size(); ++d)
        got += (d ? "x" : "") + std::to_string(shape[d]);
      got += "]";
      throw InputError(path + ": parameter '" + name + "' has shape " + got + ", expected " +
                       t->shape_str());
    }
    if (!in.read(reinterpret_cast<char*>(t->data.data()),
                 static_cast<std::streamsize>(t->data.size() * sizeof(double))))
      throw InputError(path + ": truncated checkpoint");
  }
  return ck;
}

}  // namespace uts
