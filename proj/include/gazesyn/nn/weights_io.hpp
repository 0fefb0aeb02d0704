#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "gazesyn/nn/network.hpp"

namespace gazesyn::nn {

// Weight file layout (all integers and floats little-endian):
//
//   "GFW1"                       4-byte magic, doubles as the format version
//   u32 layer_count
//   per layer:
//     u32 kind id                (LayerKind numeric value)
//     u32 tensor_count           trainable parameters, then buffers
//     per tensor:
//       u32 rank
//       u64 dim[rank]
//       f64 payload[prod(dim)]
//
// Several networks saved together are stored as one concatenated layer list.

inline constexpr char kWeightMagic[4] = {'G', 'F', 'W', '1'};

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw Error("weights_truncated", "weight file ended unexpectedly");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void write_tensor(std::ostream& out, const Tensor& t) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) write_le<std::uint64_t>(out, d);
  for (double v : t.values()) write_le<double>(out, v);
}

inline void read_tensor_into(std::istream& in, Tensor& t, const std::string& where) {
  const auto rank = read_le<std::uint32_t>(in);
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(read_le<std::uint64_t>(in));
  if (shape != t.shape())
    throw Error("weights_mismatch", where + ": stored shape " + shape_string(shape) +
                                        " does not match model shape " + shape_string(t.shape()));
  for (auto& v : t.values()) v = read_le<double>(in);
}

}  // namespace detail

inline void save_weights(std::ostream& out, std::span<const Network* const> nets) {
  out.write(kWeightMagic, 4);
  std::uint32_t layers = 0;
  for (const auto* n : nets) layers += static_cast<std::uint32_t>(n->size());
  detail::write_le<std::uint32_t>(out, layers);
  for (const auto* net : nets) {
    for (std::size_t i = 0; i < net->size(); ++i) {
      const auto& layer = net->layer(i);
      detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(layer.kind()));
      detail::write_le<std::uint32_t>(out,
                                      static_cast<std::uint32_t>(layer.params().size() + layer.buffers().size()));
      for (const auto& p : layer.params()) detail::write_tensor(out, p);
      for (const auto& b : layer.buffers()) detail::write_tensor(out, b);
    }
  }
  if (!out) throw Error("io_error", "failed writing weights");
}

/// Loads weights into networks whose architecture already matches the file.
inline void load_weights(std::istream& in, std::span<Network* const> nets) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightMagic, 4) != 0)
    throw Error("weights_bad_magic", "not a GFW1 weight file");
  const auto layers = detail::read_le<std::uint32_t>(in);
  std::uint32_t expected = 0;
  for (const auto* n : nets) expected += static_cast<std::uint32_t>(n->size());
  if (layers != expected)
    throw Error("weights_mismatch", "weight file has " + std::to_string(layers) + " layers, model has " +
                                        std::to_string(expected));
  std::size_t index = 0;
  for (auto* net : nets) {
    for (std::size_t i = 0; i < net->size(); ++i, ++index) {
      auto& layer = net->layer(i);
      const std::string where = "layer " + std::to_string(index) + " (" + layer_kind_name(layer.kind()) + ")";
      const auto kind = detail::read_le<std::uint32_t>(in);
      if (kind != static_cast<std::uint32_t>(layer.kind()))
        throw Error("weights_mismatch", where + ": stored kind id " + std::to_string(kind));
      const auto count = detail::read_le<std::uint32_t>(in);
      if (count != layer.params().size() + layer.buffers().size())
        throw Error("weights_mismatch", where + ": stored tensor count " + std::to_string(count));
      for (auto& p : layer.params()) detail::read_tensor_into(in, p, where);
      for (auto& b : layer.buffers()) detail::read_tensor_into(in, b, where);
    }
  }
}

inline void save_weights(const std::string& path, std::span<const Network* const> nets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot open " + path + " for writing");
  save_weights(out, nets);
}

inline void load_weights(const std::string& path, std::span<Network* const> nets) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path);
  load_weights(in, nets);
}

inline void save_weights(const std::string& path, const Network& net) {
  const Network* nets[] = {&net};
  save_weights(path, nets);
}

inline void load_weights(const std::string& path, Network& net) {
  Network* nets[] = {&net};
  load_weights(path, nets);
}

}  // namespace gazesyn::nn
