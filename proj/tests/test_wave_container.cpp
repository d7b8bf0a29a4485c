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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/container.hpp"
#include "lscodec/wave.hpp"

namespace fs = std::filesystem;
using namespace lsc;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "lscodec_wave_tests";
  fs::create_directories(dir);
  return dir;
}

Waveform make_tone(double hz, double seconds, int sr) {
  Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = 0.5 * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / sr);
  return w;
}

}  // namespace

TEST_CASE("waveform validation rejects empty and unrated signals", "[wave]") {
  Waveform w;
  REQUIRE_THROWS_AS(w.validate(), InvalidArgumentError);
  w.samples = {0.0, 0.1};
  w.sample_rate = 0;
  REQUIRE_THROWS_AS(w.validate(), InvalidArgumentError);
  w.sample_rate = 16000;
  REQUIRE_NOTHROW(w.validate());
}

TEST_CASE("slice returns the requested window and checks bounds", "[wave]") {
  Waveform w({0.0, 1.0, 2.0, 3.0, 4.0}, 100);
  const Waveform s = w.slice(1, 3);
  REQUIRE(s.size() == 3);
  REQUIRE(s.samples == std::vector<double>{1.0, 2.0, 3.0});
  REQUIRE(s.sample_rate == 100);
  REQUIRE_THROWS_AS(w.slice(3, 3), InvalidArgumentError);
  REQUIRE_THROWS_AS(w.slice(-1, 2), InvalidArgumentError);
}

TEST_CASE("duration divides length by rate", "[wave]") {
  const Waveform w(std::vector<double>(24000, 0.1), 24000);
  REQUIRE(w.duration() == Catch::Approx(1.0));
}

TEST_CASE("pcm16 wav roundtrip stays within quantization error", "[wave][io]") {
  const fs::path path = temp_dir() / "tone16.wav";
  const Waveform src = make_tone(220.0, 0.25, 24000);
  wavio::write_wav(path, src, wavio::WavEncoding::kPcm16);
  const Waveform back = wavio::read_wav(path);
  REQUIRE(back.sample_rate == src.sample_rate);
  REQUIRE(back.size() == src.size());
  double max_err = 0.0;
  for (std::size_t i = 0; i < src.samples.size(); ++i)
    max_err = std::max(max_err, std::abs(back.samples[i] - src.samples[i]));
  REQUIRE(max_err <= 1.0 / 32767.0 + 1e-9);
}

TEST_CASE("float32 wav roundtrip is lossless at single precision", "[wave][io]") {
  const fs::path path = temp_dir() / "tone32.wav";
  const Waveform src = make_tone(440.0, 0.1, 24000);
  wavio::write_wav(path, src, wavio::WavEncoding::kFloat32);
  const Waveform back = wavio::read_wav(path);
  REQUIRE(back.size() == src.size());
  for (std::size_t i = 0; i < src.samples.size(); ++i)
    REQUIRE(back.samples[i] == Catch::Approx(src.samples[i]).margin(1e-7));
}

TEST_CASE("wav reader rejects missing and malformed files", "[wave][io]") {
  REQUIRE_THROWS_AS(wavio::read_wav(temp_dir() / "absent.wav"), IoError);

  const fs::path bad = temp_dir() / "bad.wav";
  {
    std::ofstream f(bad, std::ios::binary);
    f << "this is not a wav file, just forty bytes pad";
  }
  REQUIRE_THROWS_AS(wavio::read_wav(bad), FormatError);
}

TEST_CASE("wav reader refuses multichannel audio", "[wave][io]") {
  const fs::path path = temp_dir() / "stereo.wav";
  wavio::write_wav(path, make_tone(220.0, 0.05, 24000));
  // Patch the channel-count field (offset 22 in the canonical header).
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(22);
  const char two[2] = {2, 0};
  f.write(two, 2);
  f.close();
  REQUIRE_THROWS_AS(wavio::read_wav(path), InvalidArgumentError);
}

TEST_CASE("matrix container roundtrips both dtypes", "[container]") {
  MatD m(3, 4);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = 0.37 * r - 1.25 * c + 0.001;

  const fs::path p64 = temp_dir() / "m64.lscf";
  write_matrix_file(p64, m, DType::kF64);
  const MatD b64 = read_matrix_file(p64);
  REQUIRE(b64.rows() == 3);
  REQUIRE(b64.cols() == 4);
  REQUIRE((b64 - m).cwiseAbs().maxCoeff() == 0.0);

  const fs::path p32 = temp_dir() / "m32.lscf";
  write_matrix_file(p32, m, DType::kF32);
  const MatD b32 = read_matrix_file(p32);
  REQUIRE((b32 - m).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("matrix reader detects truncation", "[container]") {
  const fs::path path = temp_dir() / "trunc.lscf";
  write_matrix_file(path, MatD::Ones(8, 8), DType::kF32);
  const auto full = binio::read_file(path);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(full.data()),
            static_cast<std::streamsize>(full.size() - 7));
  }
  REQUIRE_THROWS_AS(read_matrix_file(path), CorruptionError);
}

TEST_CASE("atomic write leaves no temp file behind", "[container]") {
  const fs::path path = temp_dir() / "atomic.bin";
  binio::write_file_atomic(path, std::string("payload"));
  REQUIRE(fs::exists(path));
  REQUIRE_FALSE(fs::exists(path.string() + ".tmp"));
  const auto data = binio::read_file(path);
  REQUIRE(std::string(data.begin(), data.end()) == "payload");
}
