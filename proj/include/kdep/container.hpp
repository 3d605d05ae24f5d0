#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "kdep/errors.hpp"
#include "kdep/matrix.hpp"

namespace kdep {

// Bit-exact binary tensor container shared by every persisted artifact.
//
// Layout, all integers little-endian:
//   magic   8 bytes  "KDEPTNSR"
//   version u32      (currently 1)
//   count   u32      number of sections
//   per section:
//     name_len u32, name bytes
//     dtype    u32  (1 = f64, 2 = i64)
//     ndim     u32
//     dims     u64 x ndim
//     payload  product(dims) * 8 bytes, little-endian values
struct TensorSection {
  std::string name;
  std::uint32_t dtype = 1;  // 1=f64, 2=i64
  std::vector<std::uint64_t> dims;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

struct TensorContainer {
  static constexpr char kMagic[9] = "KDEPTNSR";
  static constexpr std::uint32_t kVersion = 1;
  std::vector<TensorSection> sections;

  const TensorSection* find(const std::string& name) const {
    for (const auto& s : sections) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }
  const TensorSection& require(const std::string& name) const {
    const TensorSection* s = find(name);
    if (!s) throw FormatError("missing section '" + name + "'", 0);
    return *s;
  }
};

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32le(const std::string& buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) {
    v = (v << 8) | static_cast<unsigned char>(buf[off + static_cast<std::size_t>(i)]);
  }
  return v;
}

inline std::uint64_t get_u64le(const std::string& buf, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) {
    v = (v << 8) | static_cast<unsigned char>(buf[off + static_cast<std::size_t>(i)]);
  }
  return v;
}

}  // namespace detail

inline std::string serialize_container(const TensorContainer& c) {
  std::string out;
  out.append(TensorContainer::kMagic, 8);
  detail::put_u32le(out, TensorContainer::kVersion);
  detail::put_u32le(out, static_cast<std::uint32_t>(c.sections.size()));
  for (const auto& s : c.sections) {
    detail::put_u32le(out, static_cast<std::uint32_t>(s.name.size()));
    out.append(s.name);
    detail::put_u32le(out, s.dtype);
    detail::put_u32le(out, static_cast<std::uint32_t>(s.dims.size()));
    for (auto d : s.dims) detail::put_u64le(out, d);
    const std::uint64_t n = s.element_count();
    if (s.dtype == 1) {
      if (s.f64.size() != n) throw FormatError("f64 payload size mismatch", out.size());
      for (double v : s.f64) detail::put_u64le(out, std::bit_cast<std::uint64_t>(v));
    } else if (s.dtype == 2) {
      if (s.i64.size() != n) throw FormatError("i64 payload size mismatch", out.size());
      for (std::int64_t v : s.i64) {
        detail::put_u64le(out, static_cast<std::uint64_t>(v));
      }
    } else {
      throw FormatError("unknown dtype code " + std::to_string(s.dtype), out.size());
    }
  }
  return out;
}

inline TensorContainer parse_container(const std::string& buf) {
  TensorContainer c;
  if (buf.size() < 8 || std::memcmp(buf.data(), TensorContainer::kMagic, 8) != 0) {
    throw FormatError("bad magic", 0);
  }
  if (buf.size() < 12) throw FormatError("truncated header", 8);
  const std::uint32_t version = detail::get_u32le(buf, 8);
  if (version != TensorContainer::kVersion) {
    throw FormatError("unsupported version " + std::to_string(version), 8);
  }
  if (buf.size() < 16) throw FormatError("truncated header", 12);
  const std::uint32_t count = detail::get_u32le(buf, 12);
  std::size_t off = 16;
  auto need = [&](std::size_t bytes) {
    if (off + bytes > buf.size()) {
      throw FormatError("truncated section data", off);
    }
  };
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorSection s;
    need(4);
    const std::uint32_t name_len = detail::get_u32le(buf, off);
    off += 4;
    need(name_len);
    s.name.assign(buf, off, name_len);
    off += name_len;
    need(8);
    s.dtype = detail::get_u32le(buf, off);
    off += 4;
    if (s.dtype != 1 && s.dtype != 2) {
      throw FormatError("unknown dtype code " + std::to_string(s.dtype), off - 4);
    }
    const std::uint32_t ndim = detail::get_u32le(buf, off);
    off += 4;
    need(static_cast<std::size_t>(ndim) * 8);
    s.dims.resize(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) {
      s.dims[d] = detail::get_u64le(buf, off);
      off += 8;
    }
    const std::uint64_t n = s.element_count();
    need(static_cast<std::size_t>(n) * 8);
    if (s.dtype == 1) {
      s.f64.resize(n);
      for (std::uint64_t e = 0; e < n; ++e) {
        s.f64[e] = std::bit_cast<double>(detail::get_u64le(buf, off));
        off += 8;
      }
    } else {
      s.i64.resize(n);
      for (std::uint64_t e = 0; e < n; ++e) {
        s.i64[e] = static_cast<std::int64_t>(detail::get_u64le(buf, off));
        off += 8;
      }
    }
    c.sections.push_back(std::move(s));
  }
  if (off != buf.size()) {
    throw FormatError("trailing bytes after last section", off);
  }
  return c;
}

// Atomic write: temp file in the same directory, rename on success, so a
// crash never leaves a partial artifact behind.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& bytes) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

inline void write_container(const std::filesystem::path& path,
                            const TensorContainer& c) {
  write_file_atomic(path, serialize_container(c));
}

inline TensorContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return parse_container(buf);
}

// Section builders for the common cases.

inline TensorSection make_f64_section(std::string name,
                                      std::vector<std::uint64_t> dims,
                                      std::vector<double> values) {
  TensorSection s;
  s.name = std::move(name);
  s.dtype = 1;
  s.dims = std::move(dims);
  s.f64 = std::move(values);
  return s;
}

inline TensorSection make_i64_section(std::string name,
                                      std::vector<std::uint64_t> dims,
                                      std::vector<std::int64_t> values) {
  TensorSection s;
  s.name = std::move(name);
  s.dtype = 2;
  s.dims = std::move(dims);
  s.i64 = std::move(values);
  return s;
}

inline TensorSection matrix_section(std::string name, const FeatureMatrix& m) {
  std::vector<double> values(m.data(), m.data() + m.size());
  return make_f64_section(std::move(name), {m.rows(), m.cols()},
                          std::move(values));
}

inline FeatureMatrix section_matrix(const TensorSection& s) {
  if (s.dtype != 1 || s.dims.size() != 2) {
    throw FormatError("section '" + s.name + "' is not a 2-d f64 tensor", 0);
  }
  FeatureMatrix m(static_cast<std::size_t>(s.dims[0]),
                  static_cast<std::size_t>(s.dims[1]));
  std::copy(s.f64.begin(), s.f64.end(), m.data());
  return m;
}

inline TensorSection vector_section(std::string name,
                                    const std::vector<double>& v) {
  return make_f64_section(std::move(name), {v.size()}, v);
}

inline std::vector<double> section_vector(const TensorSection& s) {
  if (s.dtype != 1) {
    throw FormatError("section '" + s.name + "' is not f64", 0);
  }
  return s.f64;
}

inline TensorSection scalar_i64_section(std::string name, std::int64_t v) {
  return make_i64_section(std::move(name), {1}, {v});
}

inline std::int64_t section_scalar_i64(const TensorSection& s) {
  if (s.dtype != 2 || s.i64.size() != 1) {
    throw FormatError("section '" + s.name + "' is not a scalar i64", 0);
  }
  return s.i64[0];
}

inline TensorSection scalar_f64_section(std::string name, double v) {
  return make_f64_section(std::move(name), {1}, {v});
}

inline double section_scalar_f64(const TensorSection& s) {
  if (s.dtype != 1 || s.f64.size() != 1) {
    throw FormatError("section '" + s.name + "' is not a scalar f64", 0);
  }
  return s.f64[0];
}

}  // namespace kdep
