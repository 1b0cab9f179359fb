#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "arec/error.hpp"
#include "arec/nn/graph.hpp"
#include "arec/nn/tensor.hpp"
#include "json.hpp"

namespace arec::nn {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// In-memory image of a checkpoint file.
///
/// Byte layout (all integers little-endian):
///   u32 format_version (= 1)
///   u64 kind length, kind bytes (UTF-8)
///   u64 hyperparameter JSON length, JSON bytes (compact, keys sorted)
///   repeated until EOF, one block per parameter:
///     u64 name length, name bytes, u64 rank, rank × u64 extents,
///     product(extents) × f32 values
struct Checkpoint {
  std::string kind;
  nlohmann::json hyperparams = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<float>>> blocks;

  const Tensor<float>& block(const std::string& name) const {
    for (const auto& [n, t] : blocks)
      if (n == name) return t;
    throw ConfigError("checkpoint has no parameter block named " + name);
  }
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 8);
}

inline void put_bytes(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline bool get_raw(std::istream& is, char* dst, std::size_t n) {
  is.read(dst, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

inline std::uint64_t get_uint(std::istream& is, int width, const char* what) {
  unsigned char b[8] = {};
  if (!get_raw(is, reinterpret_cast<char*>(b), static_cast<std::size_t>(width))) {
    throw IoError(std::string("checkpoint truncated while reading ") + what);
  }
  std::uint64_t v = 0;
  for (int i = width - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::string get_bytes(std::istream& is, const char* what, std::uint64_t limit = 1ull << 32) {
  const auto n = get_uint(is, 8, what);
  if (n > limit) throw IoError(std::string("checkpoint field too long: ") + what);
  std::string s(n, '\0');
  if (n && !get_raw(is, s.data(), n)) throw IoError(std::string("checkpoint truncated in ") + what);
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  detail::put_u32(os, kCheckpointFormatVersion);
  detail::put_bytes(os, ckpt.kind);
  detail::put_bytes(os, ckpt.hyperparams.dump());
  for (const auto& [name, t] : ckpt.blocks) {
    detail::put_bytes(os, name);
    detail::put_u64(os, t.rank());
    for (auto e : t.shape()) detail::put_u64(os, e);
    for (float v : t.values()) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os) throw IoError("checkpoint write failed");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  Checkpoint ckpt;
  const auto version = detail::get_uint(is, 4, "format_version");
  if (version != kCheckpointFormatVersion) {
    throw IoError("unsupported checkpoint format_version " + std::to_string(version));
  }
  ckpt.kind = detail::get_bytes(is, "model kind");
  try {
    ckpt.hyperparams = nlohmann::json::parse(detail::get_bytes(is, "hyperparams"));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("checkpoint hyperparams are not valid JSON: ") + e.what());
  }
  while (is.peek() != std::char_traits<char>::eof()) {
    std::string name = detail::get_bytes(is, "parameter name");
    const auto rank = detail::get_uint(is, 8, "rank");
    if (rank == 0 || rank > 8) throw IoError("checkpoint block '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& e : shape) e = detail::get_uint(is, 8, "extent");
    const std::size_t count = shape_size(shape);
    std::vector<float> data(count);
    for (auto& v : data) v = std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_uint(is, 4, "data")));
    ckpt.blocks.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(os, ckpt);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  return read_checkpoint(is);
}

/// Blocks in parameter registration order, narrowed to 32-bit.
template <typename T>
std::vector<std::pair<std::string, Tensor<float>>> export_parameters(const ParameterSet<T>& params) {
  std::vector<std::pair<std::string, Tensor<float>>> blocks;
  for (const auto& p : params) blocks.emplace_back(p->name, p->value.template cast<float>());
  return blocks;
}

/// Copies every block into the same-named parameter; names and shapes must
/// match one-to-one.
template <typename T>
void import_parameters(const Checkpoint& ckpt, ParameterSet<T>& params) {
  if (ckpt.blocks.size() != params.size()) {
    throw ConfigError("checkpoint has " + std::to_string(ckpt.blocks.size()) + " blocks, model expects " +
                      std::to_string(params.size()));
  }
  for (const auto& [name, t] : ckpt.blocks) {
    auto& p = params.at(name);
    if (p.value.shape() != t.shape()) {
      throw DimensionError("checkpoint block '" + name + "' has shape " + shape_string(t.shape()) +
                           ", model expects " + shape_string(p.value.shape()));
    }
    p.value = t.template cast<T>();
    p.zero_grad();
  }
}

}  // namespace arec::nn
