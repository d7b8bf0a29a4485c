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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lscodec/rng.hpp"
#include "lscodec/tokenstream.hpp"

namespace fs = std::filesystem;
using namespace lsc;

namespace {

TokenSequence make_seq(std::vector<std::uint32_t> tokens, std::uint32_t vocab,
                       std::uint16_t rate = 50) {
  TokenSequence seq;
  seq.tokens = std::move(tokens);
  seq.vocab_size = vocab;
  seq.frame_rate = rate;
  return seq;
}

TokenSequence decode_str(const std::string& bytes) {
  return decode_tokens_blob(reinterpret_cast<const unsigned char*>(bytes.data()),
                            bytes.size(), "test");
}

}  // namespace

TEST_CASE("encoded stream matches hand packed bytes", "[tokenstream]") {
  // Three 5-bit tokens: 00011 10001 01001, then one zero pad bit.
  const std::string bytes = encode_tokens(make_seq({3, 17, 9}, 32, 50));
  REQUIRE(bytes.size() == 21);
  const unsigned char expect[21] = {'L',  'S',  'C',  '1',  0x01, 0x32, 0x00,
                                    0x20, 0x00, 0x00, 0x00, 0x03, 0x00, 0x00,
                                    0x00, 0x00, 0x00, 0x00, 0x00, 0x1c, 0x52};
  for (std::size_t i = 0; i < 21; ++i)
    REQUIRE(static_cast<unsigned char>(bytes[i]) == expect[i]);
}

TEST_CASE("single entry vocabularies pack to a bare header", "[tokenstream]") {
  const std::string bytes = encode_tokens(make_seq({0, 0, 0, 0, 0, 0, 0}, 1, 25));
  REQUIRE(bytes.size() == tokenio::kHeaderSize);
  const TokenSequence back = decode_str(bytes);
  REQUIRE(back.tokens == std::vector<std::uint32_t>(7, 0));
  REQUIRE(back.vocab_size == 1);
  REQUIRE(back.frame_rate == 25);
}

TEST_CASE("bits per token covers the vocabulary exactly", "[tokenstream]") {
  REQUIRE(make_seq({}, 1).bits_per_token() == 0);
  REQUIRE(make_seq({}, 2).bits_per_token() == 1);
  REQUIRE(make_seq({}, 3).bits_per_token() == 2);
  REQUIRE(make_seq({}, 32).bits_per_token() == 5);
  REQUIRE(make_seq({}, 33).bits_per_token() == 6);
  REQUIRE(make_seq({}, 1024).bits_per_token() == 10);
}

TEST_CASE("randomized roundtrips preserve every field", "[tokenstream]") {
  Rng rng(314);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint32_t vocab = 1 + static_cast<std::uint32_t>(rng.uniform_int(1024));
    const std::size_t count = rng.uniform_int(400);
    const std::uint16_t rate = static_cast<std::uint16_t>(1 + rng.uniform_int(300));
    std::vector<std::uint32_t> tokens(count);
    for (auto& t : tokens) t = static_cast<std::uint32_t>(rng.uniform_int(vocab));
    const TokenSequence seq = make_seq(tokens, vocab, rate);

    const std::string bytes = encode_tokens(seq);
    const std::size_t bits = static_cast<std::size_t>(seq.bits_per_token());
    REQUIRE(bytes.size() == tokenio::kHeaderSize + (count * bits + 7) / 8);

    const TokenSequence back = decode_str(bytes);
    REQUIRE(back.tokens == tokens);
    REQUIRE(back.vocab_size == vocab);
    REQUIRE(back.frame_rate == rate);
  }
}

TEST_CASE("token files roundtrip through disk", "[tokenstream]") {
  const fs::path dir = fs::temp_directory_path() / "lscodec_token_tests";
  fs::create_directories(dir);
  const fs::path path = dir / "tones.lsct";
  const TokenSequence seq = make_seq({0, 31, 15, 7, 1, 30}, 32, 50);
  write_token_file(path.string(), seq);
  REQUIRE(fs::file_size(path) == tokenio::kHeaderSize + (6 * 5 + 7) / 8);
  const TokenSequence back = read_token_file(path.string());
  REQUIRE(back.tokens == seq.tokens);
}

TEST_CASE("validation rejects malformed sequences", "[tokenstream]") {
  REQUIRE_THROWS_AS(encode_tokens(make_seq({5}, 5)), InvalidArgumentError);
  REQUIRE_THROWS_AS(encode_tokens(make_seq({0}, 0)), InvalidArgumentError);
  REQUIRE_THROWS_AS(encode_tokens(make_seq({0}, 2, 0)), InvalidArgumentError);
}

TEST_CASE("decoder rejects streams shorter than the header", "[tokenstream]") {
  const std::string bytes = encode_tokens(make_seq({1, 2}, 4));
  REQUIRE_THROWS_AS(decode_str(bytes.substr(0, 10)), CorruptionError);
}

TEST_CASE("decoder rejects foreign magic and unknown versions", "[tokenstream]") {
  std::string bytes = encode_tokens(make_seq({1, 2}, 4));
  std::string wrong = bytes;
  wrong[0] = 'X';
  REQUIRE_THROWS_AS(decode_str(wrong), FormatError);
  std::string newer = bytes;
  newer[4] = 0x02;
  REQUIRE_THROWS_AS(decode_str(newer), FormatError);
}

TEST_CASE("decoder rejects degenerate header fields", "[tokenstream]") {
  std::string bytes = encode_tokens(make_seq({0, 0}, 1, 25));
  std::string no_vocab = bytes;
  no_vocab[7] = 0x00;  // vocab_size low byte, value was 1
  REQUIRE_THROWS_AS(decode_str(no_vocab), CorruptionError);
  std::string no_rate = bytes;
  no_rate[5] = 0x00;  // frame_rate low byte, value was 25
  REQUIRE_THROWS_AS(decode_str(no_rate), CorruptionError);
}

TEST_CASE("decoder rejects truncated and padded streams", "[tokenstream]") {
  const std::string bytes = encode_tokens(make_seq({1, 2, 3, 4, 5, 6, 7, 8}, 9));
  REQUIRE_THROWS_AS(decode_str(bytes.substr(0, bytes.size() - 1)), CorruptionError);
  REQUIRE_THROWS_AS(decode_str(bytes + '\0'), CorruptionError);
}

TEST_CASE("decoder rejects out of range tokens in the payload", "[tokenstream]") {
  // Vocabulary 33 packs at 6 bits, so values 33..63 are representable but
  // invalid. A saturated payload byte must trip the range check.
  std::string bytes = encode_tokens(make_seq({1, 2, 3, 4}, 33));
  bytes[tokenio::kHeaderSize] = static_cast<char>(0xff);
  REQUIRE_THROWS_AS(decode_str(bytes), CorruptionError);
}

TEST_CASE("decoder rejects nonzero padding bits", "[tokenstream]") {
  // Three 5-bit tokens leave one pad bit in the second payload byte.
  std::string bytes = encode_tokens(make_seq({3, 17, 9}, 32));
  bytes.back() = static_cast<char>(static_cast<unsigned char>(bytes.back()) | 0x01);
  REQUIRE_THROWS_AS(decode_str(bytes), CorruptionError);
}

TEST_CASE("empty token sequences are legal streams", "[tokenstream]") {
  const std::string bytes = encode_tokens(make_seq({}, 16, 50));
  REQUIRE(bytes.size() == tokenio::kHeaderSize);
  const TokenSequence back = decode_str(bytes);
  REQUIRE(back.tokens.empty());
  REQUIRE(back.vocab_size == 16);
}
