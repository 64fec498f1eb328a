#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "htprior/block.hpp"
#include "htprior/optim.hpp"
#include "htprior/tensor.hpp"

namespace htprior {

// Layout: "HTP1", then per tensor: u32 name length, UTF-8 name, u32 rank,
// u32 extents, f32 data. All integers and floats little endian.
inline constexpr std::array<char, 4> kCheckpointMagic{'H', 'T', 'P', '1'};

struct NamedTensor {
  std::string name;
  Tensor value;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
      static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  return true;
}

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kCheckpointMagic.data(), 4);
  for (const auto& t : tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.value.shape().rank()));
    for (auto d : t.value.shape().dims()) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (float f : t.value.data()) detail::put_u32(os, std::bit_cast<std::uint32_t>(f));
  }
  if (!os) throw IoError("write failed for " + path.string());
}

inline std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kCheckpointMagic) {
    throw IoError(path.string() + ": not a checkpoint (bad magic)");
  }
  std::vector<NamedTensor> out;
  std::uint32_t name_len;
  while (detail::get_u32(is, name_len)) {
    auto fail = [&](const char* what) { return IoError(path.string() + ": truncated checkpoint (" + what + ")"); };
    if (name_len > (1u << 16)) throw IoError(path.string() + ": implausible tensor name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw fail("name");
    std::uint32_t rank;
    if (!detail::get_u32(is, rank)) throw fail("rank");
    if (rank > Shape::kMaxRank) throw IoError(path.string() + ": tensor '" + name + "' has rank above 4");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) {
      std::uint32_t v;
      if (!detail::get_u32(is, v)) throw fail("extents");
      d = v;
    }
    Tensor t{Shape(dims)};
    for (auto& f : t.data()) {
      std::uint32_t v;
      if (!detail::get_u32(is, v)) throw fail("data");
      f = std::bit_cast<float>(v);
    }
    out.push_back({std::move(name), std::move(t)});
  }
  return out;
}

inline const std::string kAdamStepName = "adam.step";

// Model parameters, optionally followed by optimizer state.
inline std::vector<NamedTensor> pack_state(const ParamSet<float>& params, const Adam* opt) {
  std::vector<NamedTensor> out;
  for (const auto& p : params.items()) {
    Tensor v(p.value.shape(), std::vector<float>(p.value.data().begin(), p.value.data().end()));
    out.push_back({p.name, std::move(v)});
  }
  if (opt) {
    for (const auto& p : params.items()) {
      out.push_back({"adam.m/" + p.name, Tensor(p.value.shape(), p.adam_m)});
      out.push_back({"adam.v/" + p.name, Tensor(p.value.shape(), p.adam_v)});
    }
    // split into two exact 24-bit halves
    const auto s = opt->steps();
    out.push_back({kAdamStepName, Tensor(Shape{2}, {static_cast<float>(s & 0xffffff), static_cast<float>(s >> 24)})});
  }
  return out;
}

// Loads parameters by name; every model parameter must be present with its
// exact shape. Optimizer entries are restored when opt is given.
inline void unpack_state(const std::vector<NamedTensor>& tensors, ParamSet<float>& params, Adam* opt,
                         const std::string& source) {
  auto find = [&](const std::string& name) -> const NamedTensor* {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  };
  for (auto& p : params.items()) {
    const NamedTensor* t = find(p.name);
    if (!t) throw ConfigError(source + ": checkpoint lacks parameter '" + p.name + "' (model mismatch?)");
    if (t->value.shape() != p.value.shape()) {
      throw ConfigError(source + ": parameter '" + p.name + "' has shape " + t->value.shape().str() +
                        ", model expects " + p.value.shape().str());
    }
    std::copy(t->value.data().begin(), t->value.data().end(), p.value.data().begin());
  }
  for (const auto& t : tensors) {
    if (t.name.starts_with("adam.")) continue;
    if (!params.contains(t.name)) throw ConfigError(source + ": unexpected parameter '" + t.name + "' (model mismatch?)");
  }
  if (!opt) return;
  for (auto& p : params.items()) {
    const NamedTensor* m = find("adam.m/" + p.name);
    const NamedTensor* v = find("adam.v/" + p.name);
    if (!m || !v) throw ConfigError(source + ": checkpoint lacks optimizer state for '" + p.name + "'");
    p.adam_m.assign(m->value.data().begin(), m->value.data().end());
    p.adam_v.assign(v->value.data().begin(), v->value.data().end());
  }
  const NamedTensor* s = find(kAdamStepName);
  if (!s || s->value.size() != 2) throw ConfigError(source + ": checkpoint lacks optimizer step count");
  opt->set_steps(static_cast<std::uint64_t>(s->value[0]) | static_cast<std::uint64_t>(s->value[1]) << 24);
}

}  // namespace htprior
