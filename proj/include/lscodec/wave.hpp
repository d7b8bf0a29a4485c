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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lscodec/common.hpp"

namespace lsc {

/// Mono sample sequence, the unit of all DSP in the library.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;

  Waveform() = default;
  Waveform(std::vector<double> s, int sr) : samples(std::move(s)), sample_rate(sr) {}

  std::int64_t size() const { return static_cast<std::int64_t>(samples.size()); }
  double duration() const { return static_cast<double>(size()) / sample_rate; }
  bool empty() const { return samples.empty(); }

  void validate() const {
    check_arg(!samples.empty(), "waveform must be nonempty");
    check_arg(sample_rate > 0, "sample rate must be positive");
  }

  Waveform slice(std::int64_t begin, std::int64_t len) const {
    check_arg(begin >= 0 && len >= 0 && begin + len <= size(), "slice out of range");
    return Waveform(std::vector<double>(samples.begin() + begin, samples.begin() + begin + len),
                    sample_rate);
  }
};

namespace wavio {

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8;
}

}  // namespace detail

enum class WavEncoding { kPcm16, kFloat32 };

/// Writes a mono WAV file. Samples are clamped to [-1, 1].
inline void write_wav(const std::filesystem::path& path, const Waveform& wave,
                      WavEncoding enc = WavEncoding::kPcm16) {
  wave.validate();
  using namespace detail;
  const std::uint16_t format = enc == WavEncoding::kPcm16 ? 1 : 3;
  const std::uint16_t bytes_per_sample = enc == WavEncoding::kPcm16 ? 2 : 4;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.size() * bytes_per_sample);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * bytes_per_sample);
  put_u16(out, bytes_per_sample);
  put_u16(out, static_cast<std::uint16_t>(bytes_per_sample * 8));
  out += "data";
  put_u32(out, data_bytes);

  for (double s : wave.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    if (enc == WavEncoding::kPcm16) {
      const auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
      out.push_back(static_cast<char>(q & 0xff));
      out.push_back(static_cast<char>((q >> 8) & 0xff));
    } else {
      const float f = static_cast<float>(c);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  }

  // Atomic write: temp file in the same directory, then rename.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Reads a mono 16-bit PCM or 32-bit float WAV file.
inline Waveform read_wav(const std::filesystem::path& path) {
  using namespace detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t chunk_len = read_u32(buf.data() + pos + 4);
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = read_u16(buf.data() + pos + 8);
      channels = read_u16(buf.data() + pos + 10);
      sample_rate = read_u32(buf.data() + pos + 12);
      bits = read_u16(buf.data() + pos + 22);
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = std::min<std::size_t>(chunk_len, buf.size() - data_off);
      break;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (data_off == 0) throw FormatError("missing data chunk: " + path.string());
  if (channels != 1) throw InvalidArgumentError("only mono WAV is supported: " + path.string());

  Waveform wave;
  wave.sample_rate = static_cast<int>(sample_rate);
  if (format == 1 && bits == 16) {
    const std::size_t n = data_len / 2;
    wave.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = static_cast<std::int16_t>(read_u16(buf.data() + data_off + 2 * i));
      wave.samples[i] = static_cast<double>(v) / 32767.0;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t n = data_len / 4;
    wave.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t b = read_u32(buf.data() + data_off + 4 * i);
      float v;
      std::memcpy(&v, &b, 4);
      wave.samples[i] = v;
    }
  } else {
    throw FormatError("unsupported WAV encoding (format=" + std::to_string(format) +
                      ", bits=" + std::to_string(bits) + "): " + path.string());
  }
  wave.validate();
  return wave;
}

}  // namespace wavio
}  // namespace lsc
