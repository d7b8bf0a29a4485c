// Licensed to the Apache Software Foundation (ASF) under one
// or more contributor license agreements.  See the NOTICE file
// distributed with this work for additional information
// regarding copyright ownership.  The ASF licenses this file
// to you under the Apache License, Version 2.0 (the
// "License"); you may not use this file except in compliance
// with the License.  You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LSCODEC_TOKENSTREAM_HPP
#define LSCODEC_TOKENSTREAM_HPP

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/container.hpp"

namespace lsc {

/// A sequence of discrete codec tokens together with the two pieces of
/// metadata a decoder needs: the token rate and the codebook size.
struct TokenSequence {
  std::vector<std::uint32_t> tokens;
  std::uint16_t frame_rate = 0;  // tokens per second
  std::uint32_t vocab_size = 0;

  /// Bits needed per token. A vocabulary of one entry carries no
  /// information, so its tokens occupy zero bits on the wire.
  int bits_per_token() const { return ceil_log2(vocab_size); }

  void validate() const {
    check_arg(vocab_size >= 1, "TokenSequence: vocab_size must be at least 1");
    check_arg(frame_rate >= 1, "TokenSequence: frame_rate must be at least 1");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] >= vocab_size) {
        throw InvalidArgumentError("token " + std::to_string(tokens[i]) + " at frame " +
                                   std::to_string(i) + " is outside vocabulary of size " +
                                   std::to_string(vocab_size));
      }
    }
  }
};

namespace tokenio {

constexpr char kMagic[4] = {'L', 'S', 'C', '1'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderSize = 4 + 1 + 2 + 4 + 8;

/// Payload size in bytes for a packed stream: ceil(num_frames * bits / 8).
inline std::size_t payload_size(std::size_t num_frames, int bits_per_token) {
  return (num_frames * static_cast<std::size_t>(bits_per_token) + 7) / 8;
}

}  // namespace tokenio

/// Serializes a token sequence to the packed binary stream format.
///
/// Layout: magic "LSC1", version byte, frame rate (u16 LE), vocabulary size
/// (u32 LE), frame count (u64 LE), then tokens packed at ceil(log2(V)) bits
/// each, MSB first within each byte. Trailing pad bits in the last payload
/// byte are zero.
inline std::string encode_tokens(const TokenSequence& seq) {
  seq.validate();
  const int bits = seq.bits_per_token();

  std::string out;
  out.reserve(tokenio::kHeaderSize + tokenio::payload_size(seq.tokens.size(), bits));
  out.append(tokenio::kMagic, 4);
  out.push_back(static_cast<char>(tokenio::kVersion));
  binio::append_le(out, seq.frame_rate);
  binio::append_le(out, seq.vocab_size);
  binio::append_le(out, static_cast<std::uint64_t>(seq.tokens.size()));

  std::uint64_t acc = 0;  // bit accumulator, most recent bits lowest
  int acc_bits = 0;
  for (std::uint32_t tok : seq.tokens) {
    acc = (acc << bits) | tok;
    acc_bits += bits;
    while (acc_bits >= 8) {
      acc_bits -= 8;
      out.push_back(static_cast<char>((acc >> acc_bits) & 0xffu));
    }
  }
  if (acc_bits > 0) {
    out.push_back(static_cast<char>((acc << (8 - acc_bits)) & 0xffu));
  }
  return out;
}

/// Parses a packed token stream, verifying every redundancy the format
/// offers: magic, version, header-implied payload size, token range, and
/// zeroed pad bits.
inline TokenSequence decode_tokens_blob(const unsigned char* data, std::size_t size,
                                        const std::string& origin) {
  if (size < tokenio::kHeaderSize) {
    throw CorruptionError(origin + ": stream is " + std::to_string(size) +
                          " bytes, shorter than the " +
                          std::to_string(tokenio::kHeaderSize) + " byte header");
  }
  if (std::memcmp(data, tokenio::kMagic, 4) != 0) {
    throw FormatError(origin + ": bad magic, not a token stream");
  }
  if (data[4] != tokenio::kVersion) {
    throw FormatError(origin + ": unsupported stream version " +
                      std::to_string(static_cast<int>(data[4])));
  }

  TokenSequence seq;
  seq.frame_rate = binio::read_le<std::uint16_t>(data + 5);
  seq.vocab_size = binio::read_le<std::uint32_t>(data + 7);
  const std::uint64_t num_frames = binio::read_le<std::uint64_t>(data + 11);
  if (seq.vocab_size < 1) {
    throw CorruptionError(origin + ": header declares an empty vocabulary");
  }
  if (seq.frame_rate < 1) {
    throw CorruptionError(origin + ": header declares a zero frame rate");
  }

  const int bits = seq.bits_per_token();
  const std::size_t expected = tokenio::kHeaderSize + tokenio::payload_size(num_frames, bits);
  if (size != expected) {
    throw CorruptionError(origin + ": expected " + std::to_string(expected) +
                          " bytes for " + std::to_string(num_frames) +
                          " frames but stream has " + std::to_string(size));
  }

  seq.tokens.reserve(num_frames);
  const unsigned char* payload = data + tokenio::kHeaderSize;
  std::uint64_t acc = 0;
  int acc_bits = 0;
  std::size_t pos = 0;
  for (std::uint64_t i = 0; i < num_frames; ++i) {
    while (acc_bits < bits) {
      acc = (acc << 8) | payload[pos++];
      acc_bits += 8;
    }
    acc_bits -= bits;
    const std::uint32_t tok =
        bits == 0 ? 0u : static_cast<std::uint32_t>((acc >> acc_bits) & ((1ull << bits) - 1));
    if (tok >= seq.vocab_size) {
      throw CorruptionError(origin + ": token " + std::to_string(tok) + " at frame " +
                            std::to_string(i) + " is outside vocabulary of size " +
                            std::to_string(seq.vocab_size));
    }
    seq.tokens.push_back(tok);
  }
  if (acc_bits > 0 && (acc & ((1ull << acc_bits) - 1)) != 0) {
    throw CorruptionError(origin + ": nonzero padding bits at end of stream");
  }
  return seq;
}

inline void write_token_file(const std::string& path, const TokenSequence& seq) {
  binio::write_file_atomic(path, encode_tokens(seq));
}

inline TokenSequence read_token_file(const std::string& path) {
  const std::vector<unsigned char> data = binio::read_file(path);
  return decode_tokens_blob(data.data(), data.size(), path);
}

}  // namespace lsc

#endif  // LSCODEC_TOKENSTREAM_HPP
