#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "stripdet/autograd.hpp"
#include "stripdet/pillar.hpp"

namespace stripdet {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io_detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

template <typename U>
void put_le(std::vector<unsigned char>& buf, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

inline void put_f32(std::vector<unsigned char>& buf, float f) { put_le(buf, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_le<std::uint32_t>(p)); }

}  // namespace io_detail

// KITTI velodyne scan: consecutive little-endian float32 (x, y, z, intensity).
inline PointCloud decode_kitti_bin(const std::vector<unsigned char>& bytes) {
  if (bytes.size() % 16 != 0) {
    throw FormatError("point file length not divisible by 16 (" + std::to_string(bytes.size()) + " bytes)");
  }
  PointCloud pc;
  pc.points.resize(bytes.size() / 16);
  for (std::size_t n = 0; n < pc.points.size(); ++n) {
    const unsigned char* p = bytes.data() + 16 * n;
    Point& pt = pc.points[n];
    pt = {io_detail::get_f32(p), io_detail::get_f32(p + 4), io_detail::get_f32(p + 8), io_detail::get_f32(p + 12)};
    if (!std::isfinite(pt.x) || !std::isfinite(pt.y) || !std::isfinite(pt.z) || !std::isfinite(pt.intensity)) {
      throw FormatError("non-finite value in point " + std::to_string(n));
    }
  }
  return pc;
}

inline std::vector<unsigned char> encode_kitti_bin(const PointCloud& pc) {
  std::vector<unsigned char> out;
  out.reserve(pc.size() * 16);
  for (const Point& pt : pc.points) {
    io_detail::put_f32(out, pt.x);
    io_detail::put_f32(out, pt.y);
    io_detail::put_f32(out, pt.z);
    io_detail::put_f32(out, pt.intensity);
  }
  return out;
}

inline PointCloud read_kitti_bin(const std::filesystem::path& path) {
  return decode_kitti_bin(io_detail::read_file(path));
}

inline void write_kitti_bin(const PointCloud& pc, const std::filesystem::path& path) {
  io_detail::write_file(path, encode_kitti_bin(pc));
}

// ---------------------------------------------------------------------------
// Weight file
//
//   "SDW1"  u32 count
//   count x { u32 name_len, name bytes, u32 rank (1..4), rank x u32 dims, u64 offset }
//   payload: float32 little-endian, tensors back to back in header order
//
// Offsets are byte offsets from the start of the payload.

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

inline constexpr char kWeightMagic[4] = {'S', 'D', 'W', '1'};

inline std::vector<unsigned char> encode_weights(const std::vector<NamedTensor>& tensors) {
  std::vector<unsigned char> out(kWeightMagic, kWeightMagic + 4);
  io_detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  std::set<std::string> names;
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    if (!names.insert(t.name).second) throw FormatError("duplicate tensor name " + t.name);
    if (t.dims.empty() || t.dims.size() > 4) throw FormatError("tensor " + t.name + " must have rank 1..4");
    if (t.count() != t.values.size()) throw FormatError("tensor " + t.name + " dims do not match value count");
    io_detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    io_detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) io_detail::put_le<std::uint32_t>(out, d);
    io_detail::put_le<std::uint64_t>(out, offset);
    offset += 4 * t.values.size();
  }
  for (const auto& t : tensors) {
    for (float v : t.values) {
      if (!std::isfinite(v)) throw FormatError("tensor " + t.name + " holds a non-finite value");
      io_detail::put_f32(out, v);
    }
  }
  return out;
}

inline std::vector<NamedTensor> decode_weights(const std::vector<unsigned char>& bytes) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (bytes.size() - pos < n) throw FormatError("truncated header");
  };
  need(8);
  if (std::memcmp(bytes.data(), kWeightMagic, 4) != 0) throw FormatError("bad magic, not a weight file");
  pos = 4;
  const auto count = io_detail::get_le<std::uint32_t>(bytes.data() + pos);
  pos += 4;

  std::vector<NamedTensor> tensors;
  std::vector<std::uint64_t> offsets;
  std::set<std::string> names;
  for (std::uint32_t k = 0; k < count; ++k) {
    need(4);
    const auto len = io_detail::get_le<std::uint32_t>(bytes.data() + pos);
    pos += 4;
    need(len);
    NamedTensor t;
    t.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    if (!names.insert(t.name).second) throw FormatError("duplicate tensor name " + t.name);
    need(4);
    const auto rank = io_detail::get_le<std::uint32_t>(bytes.data() + pos);
    pos += 4;
    if (rank == 0 || rank > 4) throw FormatError("tensor " + t.name + " has invalid rank " + std::to_string(rank));
    need(4 * rank + 8);
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(io_detail::get_le<std::uint32_t>(bytes.data() + pos));
      pos += 4;
    }
    offsets.push_back(io_detail::get_le<std::uint64_t>(bytes.data() + pos));
    pos += 8;
    tensors.push_back(std::move(t));
  }

  const std::size_t payload = pos;
  std::uint64_t expected = 0;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (offsets[k] != expected) {
      throw FormatError("dim/offset inconsistency at tensor " + tensors[k].name + ": offset " +
                        std::to_string(offsets[k]) + ", expected " + std::to_string(expected));
    }
    expected += 4 * static_cast<std::uint64_t>(tensors[k].count());
  }
  const std::uint64_t available = bytes.size() - payload;
  if (available < expected) {
    throw FormatError("truncated payload: header describes " + std::to_string(expected) + " bytes, file has " +
                      std::to_string(available));
  }
  if (available > expected) {
    throw FormatError("trailing bytes after payload (" + std::to_string(available - expected) + ")");
  }
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const unsigned char* p = bytes.data() + payload + offsets[k];
    tensors[k].values.resize(tensors[k].count());
    for (std::size_t i = 0; i < tensors[k].values.size(); ++i) tensors[k].values[i] = io_detail::get_f32(p + 4 * i);
  }
  return tensors;
}

// Storage dims: the tensor's 4 dims with trailing 1s removed (rank >= 1).
inline std::vector<std::uint32_t> storage_dims(const Dims& d) {
  std::vector<std::uint32_t> out{static_cast<std::uint32_t>(d.n), static_cast<std::uint32_t>(d.c),
                                 static_cast<std::uint32_t>(d.h), static_cast<std::uint32_t>(d.w)};
  while (out.size() > 1 && out.back() == 1) out.pop_back();
  return out;
}

// Snapshot of every parameter of a struct exposing visit(f).
template <typename T, typename Params>
std::vector<NamedTensor> collect_tensors(const Params& params) {
  std::vector<NamedTensor> out;
  params.visit([&out](const std::string& name, const Var<T>& v) {
    NamedTensor t{name, storage_dims(v.dims()), {}};
    t.values.reserve(v.value().size());
    for (T x : v.value().values()) t.values.push_back(static_cast<float>(x));
    out.push_back(std::move(t));
  });
  return out;
}

// Copies named tensors into an instantiated parameter struct; the name sets
// and shapes must agree exactly.
template <typename T, typename Params>
void assign_tensors(Params& params, const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  std::size_t used = 0;
  params.visit([&](const std::string& name, const Var<T>& v) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("weight file is missing tensor " + name);
    if (it->second->dims != storage_dims(v.dims())) throw FormatError("shape mismatch for tensor " + name);
    Var<T> slot = v;
    auto& dst = slot.mutable_value().values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
    ++used;
  });
  if (used != tensors.size()) {
    throw FormatError("weight file has " + std::to_string(tensors.size() - used) + " unexpected tensors");
  }
}

template <typename T, typename Params>
void save_weights(const Params& params, const std::filesystem::path& path) {
  io_detail::write_file(path, encode_weights(collect_tensors<T>(params)));
}

inline std::vector<NamedTensor> load_weights(const std::filesystem::path& path) {
  return decode_weights(io_detail::read_file(path));
}

inline std::size_t scalar_count(const std::vector<NamedTensor>& tensors) {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

}  // namespace stripdet
