// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lscodec/common.hpp"

namespace lsc {

// Flat binary matrix container ("LSCF"): magic, version, dtype code, shape,
// then the row-major payload, all little-endian. Used for precomputed SSL
// features and other plain matrices (tokenizer centroids, stub embeddings).

namespace binio {

inline void append_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

template <typename T>
void append_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
}

}  // namespace binio

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

inline std::string encode_matrix(const MatD& m, DType dtype = DType::kF32) {
  std::string out;
  out += "LSCF";
  out.push_back(1);  // version
  out.push_back(static_cast<char>(dtype));
  binio::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  binio::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (dtype == DType::kF32) {
        const float v = static_cast<float>(m(r, c));
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        binio::append_le<std::uint32_t>(out, bits);
      } else {
        const double v = m(r, c);
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        binio::append_le<std::uint64_t>(out, bits);
      }
    }
  return out;
}

inline MatD decode_matrix(const unsigned char* data, std::size_t size, const std::string& origin) {
  if (size < 14 || std::memcmp(data, "LSCF", 4) != 0)
    throw FormatError("bad matrix container magic: " + origin);
  if (data[4] != 1) throw FormatError("unsupported matrix container version: " + origin);
  const auto dtype = static_cast<DType>(data[5]);
  const auto rows = binio::read_le<std::uint32_t>(data + 6);
  const auto cols = binio::read_le<std::uint32_t>(data + 10);
  const std::size_t elem = dtype == DType::kF32 ? 4 : 8;
  const std::size_t expected = 14 + elem * rows * cols;
  if (size != expected)
    throw CorruptionError("matrix container payload size mismatch (expected " +
                          std::to_string(expected) + " bytes, got " + std::to_string(size) +
                          "): " + origin);
  MatD m(rows, cols);
  const unsigned char* p = data + 14;
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      if (dtype == DType::kF32) {
        const auto bits = binio::read_le<std::uint32_t>(p);
        float v;
        std::memcpy(&v, &bits, 4);
        m(r, c) = v;
      } else {
        const auto bits = binio::read_le<std::uint64_t>(p);
        double v;
        std::memcpy(&v, &bits, 8);
        m(r, c) = v;
      }
      p += elem;
    }
  return m;
}

inline void write_matrix_file(const std::filesystem::path& path, const MatD& m,
                              DType dtype = DType::kF32) {
  binio::write_file_atomic(path, encode_matrix(m, dtype));
}

inline MatD read_matrix_file(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  return decode_matrix(bytes.data(), bytes.size(), path.string());
}

}  // namespace lsc
