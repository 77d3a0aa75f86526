#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "featsel/tape.hpp"

namespace featsel {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'N', 'F', 'S', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace detail

/// Binary checkpoint: magic, version, then repeated records of
/// (name length, name bytes, rank, dims, little-endian f64 payload).
inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, tensor] : tensors) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor->rank()));
    for (std::size_t d : tensor->shape)
      detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(tensor->data.data()),
              static_cast<std::streamsize>(tensor->data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  std::vector<std::pair<std::string, Tensor>> out;
  while (true) {
    std::uint32_t name_len;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (in.eof()) break;
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = detail::read_le<std::uint32_t>(in);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape)
      d = static_cast<std::size_t>(detail::read_le<std::uint64_t>(in));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload for " + name);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

inline void save_store_checkpoint(const std::string& path, const ParameterStore& store) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  tensors.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i)
    tensors.emplace_back(store[i].name, &store[i].value);
  save_checkpoint(path, tensors);
}

/// Loads values into an already-constructed store; every name and shape must
/// match. Entries prefixed "gate." are skipped (they belong to gate groups).
inline void load_into_store(const std::string& path, ParameterStore& store) {
  std::size_t loaded = 0;
  for (auto& [name, tensor] : load_checkpoint(path)) {
    if (name.rfind("gate.", 0) == 0) continue;
    Parameter& p = store.at(name);
    if (p.value.shape != tensor.shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": " +
                               shape_str(p.value.shape) + " vs " +
                               shape_str(tensor.shape));
    p.value = std::move(tensor);
    ++loaded;
  }
  if (loaded != store.size())
    throw std::runtime_error("checkpoint: expected " + std::to_string(store.size()) +
                             " tensors, loaded " + std::to_string(loaded));
}

}  // namespace featsel
