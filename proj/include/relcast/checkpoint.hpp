#pragma once

// Parameter checkpoint file, all integers little-endian:
//
//   "RELCAST1"                       8-byte magic (format version 1)
//   u32 meta_len, meta_len bytes     UTF-8 JSON metadata (model name, config,
//                                    vocabulary)
//   u32 count                        number of tensors
//   count x {
//     u32 name_len, name bytes
//     u32 rank, rank x u32 extent
//     product(extents) x f32         IEEE-754 binary32 payload
//   }

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relcast/error.hpp"
#include "relcast/tensor.hpp"

namespace relcast {

inline constexpr std::array<char, 8> kCheckpointMagic = {'R', 'E', 'L', 'C',
                                                         'A', 'S', 'T', '1'};

struct Checkpoint {
  nlohmann::json metadata;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return &t;
    }
    return nullptr;
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint truncated");
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <class T>
std::string encode_checkpoint(const nlohmann::json& metadata,
                              const ParameterSet<T>& params) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  std::string meta = metadata.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    const Shape& shape = p->value.shape();
    detail::put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (T x : p->value.storage()) detail::put_f32(out, static_cast<float>(x));
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::string bytes) {
  if (bytes.size() < kCheckpointMagic.size() ||
      std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw DataError("not a RELCAST1 checkpoint (bad magic)");
  }
  detail::ByteReader in(bytes.substr(kCheckpointMagic.size()));
  Checkpoint ck;
  std::uint32_t meta_len = in.u32();
  try {
    ck.metadata = nlohmann::json::parse(in.take(meta_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("checkpoint metadata: ") + e.what());
  }
  std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.take(in.u32());
    std::uint32_t rank = in.u32();
    if (rank == 0 || rank > 3) {
      throw DataError("checkpoint tensor '" + name + "' has rank " + std::to_string(rank));
    }
    Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    std::vector<float> data(shape_size(shape));
    for (auto& x : data) x = in.f32();
    ck.tensors.emplace_back(std::move(name), Tensor<float>(shape, std::move(data)));
  }
  if (!in.done()) throw DataError("checkpoint has trailing bytes");
  return ck;
}

template <class T>
void write_checkpoint(const std::string& path, const nlohmann::json& metadata,
                      const ParameterSet<T>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  std::string bytes = encode_checkpoint(metadata, params);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(bytes));
}

/// Copies checkpoint tensors into `params`; names and shapes must match
/// one-to-one.
template <class T>
void load_parameters(const Checkpoint& ck, ParameterSet<T>& params) {
  if (ck.tensors.size() != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(ck.tensors.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    const Tensor<float>* t = ck.find(p->name);
    if (t == nullptr) throw DataError("checkpoint lacks parameter '" + p->name + "'");
    if (t->shape() != p->value.shape()) {
      throw DataError("checkpoint parameter '" + p->name + "' has shape " +
                      shape_str(t->shape()) + ", model expects " +
                      shape_str(p->value.shape()));
    }
    for (std::size_t i = 0; i < t->size(); ++i) p->value[i] = static_cast<T>((*t)[i]);
  }
}

}  // namespace relcast
