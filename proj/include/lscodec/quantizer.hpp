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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "lscodec/autodiff.hpp"
#include "lscodec/common.hpp"
#include "lscodec/container.hpp"
#include "lscodec/kmeans.hpp"
#include "lscodec/rng.hpp"

namespace lsc {

/// Single vector-quantization codebook with exponential-moving-average
/// statistics. Stored in double precision regardless of the training float
/// width so the EMA recursion keeps its fixed-point accuracy.
struct Codebook {
  MatD vectors;            // V x dim
  VecD ema_cluster_size;   // V
  MatD ema_embed_sum;      // V x dim
  std::int64_t update_step = 0;
  double gamma = 0.99;

  int size() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }

  void validate() const {
    check_arg(vectors.rows() >= 1 && vectors.cols() >= 1, "codebook must be nonempty");
    check_arg(ema_cluster_size.size() == vectors.rows(), "cluster size length mismatch");
    check_arg(ema_embed_sum.rows() == vectors.rows() && ema_embed_sum.cols() == vectors.cols(),
              "embed sum shape mismatch");
    check_arg(gamma >= 0.0 && gamma < 1.0, "EMA decay must be in [0, 1)");
    check_arg((ema_cluster_size.array() > 0.0).all(), "cluster sizes must stay positive");
  }
};

/// Output of one quantization pass.
struct QuantizeResult {
  std::vector<int> indices;
  MatD quantized;  // T x dim, rows are codebook vectors
  double commitment_loss = 0.0;
  double perplexity = 1.0;
};

namespace detail {
constexpr double kEmaSizeEpsilon = 1e-5;

inline void refresh_vectors(Codebook& book) {
  for (int i = 0; i < book.size(); ++i)
    book.vectors.row(i) =
        book.ema_embed_sum.row(i) / std::max(book.ema_cluster_size(i), kEmaSizeEpsilon);
}
}  // namespace detail

/// Nearest codebook entry per frame under squared Euclidean distance, ties
/// resolved to the lowest index. Also reports the commitment loss
/// mean_t ||z_t - e_{i_t}||^2 and the perplexity of the empirical index
/// distribution (1 = collapsed, V = uniform usage).
inline QuantizeResult quantize(const MatD& latents, const Codebook& book) {
  book.validate();
  check_arg(latents.cols() == book.vectors.cols(), "latent dimension does not match codebook");
  check_arg(latents.rows() >= 1, "cannot quantize an empty latent sequence");
  const int t_len = static_cast<int>(latents.rows());
  const int v = book.size();

  QuantizeResult out;
  out.indices.resize(static_cast<std::size_t>(t_len));
  out.quantized.resize(t_len, book.dim());
  std::vector<double> counts(static_cast<std::size_t>(v), 0.0);
  double cmt = 0.0;
  for (int t = 0; t < t_len; ++t) {
    int best = 0;
    double best_d = (latents.row(t) - book.vectors.row(0)).squaredNorm();
    for (int i = 1; i < v; ++i) {
      const double d = (latents.row(t) - book.vectors.row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    out.indices[static_cast<std::size_t>(t)] = best;
    out.quantized.row(t) = book.vectors.row(best);
    counts[static_cast<std::size_t>(best)] += 1.0;
    cmt += best_d;
  }
  out.commitment_loss = cmt / static_cast<double>(t_len);

  double entropy = 0.0;
  for (double c : counts) {
    if (c == 0.0) continue;
    const double p = c / static_cast<double>(t_len);
    entropy -= p * std::log(p);
  }
  out.perplexity = std::exp(entropy);
  return out;
}

/// One EMA step: decayed counts and sums per code, then the vectors are
/// rebuilt as sum / max(count, epsilon). Codes receiving no frames only decay.
inline void ema_update(Codebook& book, const MatD& latents, const std::vector<int>& indices) {
  book.validate();
  check_arg(latents.cols() == book.vectors.cols(), "latent dimension does not match codebook");
  check_arg(static_cast<Eigen::Index>(indices.size()) == latents.rows(),
            "one index per latent frame required");
  const int v = book.size();
  VecD batch_counts = VecD::Zero(v);
  MatD batch_sums = MatD::Zero(v, book.dim());
  for (Eigen::Index t = 0; t < latents.rows(); ++t) {
    const int i = indices[static_cast<std::size_t>(t)];
    if (i < 0 || i >= v) throw InvalidArgumentError("codebook index out of range");
    batch_counts(i) += 1.0;
    batch_sums.row(i) += latents.row(t);
  }
  const double g = book.gamma;
  book.ema_cluster_size = g * book.ema_cluster_size + (1.0 - g) * batch_counts;
  book.ema_embed_sum = g * book.ema_embed_sum + (1.0 - g) * batch_sums;
  detail::refresh_vectors(book);
  book.update_step += 1;
}

struct ExpireResult {
  bool skipped = false;  // pending expirations but no batch frames to draw from
  std::vector<int> replaced;
};

/// Replaces rarely used codes with latent frames sampled from the current
/// batch. Inactive until the codebook has seen `gate_steps` updates.
inline ExpireResult expire_codes(Codebook& book, const MatD& batch_latents,
                                 double usage_threshold, Rng& rng, std::int64_t gate_steps = 5000) {
  book.validate();
  ExpireResult res;
  if (book.update_step < gate_steps) return res;
  std::vector<int> dead;
  for (int i = 0; i < book.size(); ++i)
    if (book.ema_cluster_size(i) < usage_threshold) dead.push_back(i);
  if (dead.empty()) return res;
  if (batch_latents.rows() == 0) {
    res.skipped = true;
    return res;
  }
  check_arg(batch_latents.cols() == book.vectors.cols(),
            "latent dimension does not match codebook");
  for (int i : dead) {
    const auto pick = static_cast<Eigen::Index>(
        rng.uniform_int(static_cast<std::uint64_t>(batch_latents.rows())));
    book.vectors.row(i) = batch_latents.row(pick);
    book.ema_cluster_size(i) = 1.0;
    book.ema_embed_sum.row(i) = batch_latents.row(pick);
    res.replaced.push_back(i);
  }
  return res;
}

/// K-means initialization from posterior-mean frames. Cluster counts seed the
/// EMA state, normalized so the mean count is 1, making the smoothed-division
/// invariant hold from step zero.
inline Codebook init_codebook_kmeans(const MatD& mu_frames, int v, std::uint64_t seed) {
  if (mu_frames.rows() < v)
    throw InvalidArgumentError("k-means init needs at least " + std::to_string(v) + " frames, got " +
                               std::to_string(mu_frames.rows()));
  KMeansModel km = fit_kmeans(mu_frames, v, seed);
  Codebook book;
  book.vectors = km.centroids;
  const std::vector<int> assign = kmeans_assign(km, mu_frames);
  VecD counts = VecD::Zero(v);
  for (int a : assign) counts(a) += 1.0;
  const double mean_count = counts.mean();
  book.ema_cluster_size = counts / std::max(mean_count, detail::kEmaSizeEpsilon);
  book.ema_cluster_size = book.ema_cluster_size.cwiseMax(detail::kEmaSizeEpsilon);
  book.ema_embed_sum = book.vectors.array().colwise() * book.ema_cluster_size.array();
  book.update_step = 0;
  detail::refresh_vectors(book);
  return book;
}

/// Wraps raw code vectors in a Codebook with neutral EMA state, as when the
/// vectors come from a codebook file that stores no usage statistics.
inline Codebook codebook_from_vectors(const MatD& vectors, double gamma) {
  Codebook book;
  book.vectors = vectors;
  book.ema_cluster_size = VecD::Ones(vectors.rows());
  book.ema_embed_sum = vectors;
  book.update_step = 0;
  book.gamma = gamma;
  book.validate();
  return book;
}

/// Emits the quantized values on the tape with identity gradient flow back to
/// the latents.
template <typename Real>
Var straight_through(Tape<Real>& tape, Var latents, const QuantizeResult& qr) {
  return tape.straight_through(latents, qr.quantized.template cast<Real>());
}

/// In-tape commitment loss mean_t ||z_t - stopgrad(e_{i_t})||^2; the codebook
/// side learns through EMA only, so gradients reach just the latents.
template <typename Real>
Var commitment_loss(Tape<Real>& tape, Var latents, const QuantizeResult& qr) {
  const auto t_len = tape.value(latents).rows();
  Var diff = tape.sub(latents, tape.constant(qr.quantized.template cast<Real>()));
  return tape.scale(tape.sum_all(tape.cmul(diff, diff)), Real(1) / static_cast<Real>(t_len));
}

// Standalone codebook container: magic "LSCQ", u32 V, u32 dim, then V*dim
// float32 values row major, all little endian.

inline std::string encode_codebook(const Codebook& book) {
  book.validate();
  std::string out;
  out += "LSCQ";
  binio::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(book.size()));
  binio::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(book.dim()));
  for (int r = 0; r < book.size(); ++r)
    for (int c = 0; c < book.dim(); ++c) {
      const float f = static_cast<float>(book.vectors(r, c));
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      binio::append_le<std::uint32_t>(out, bits);
    }
  return out;
}

inline MatD decode_codebook_vectors(const unsigned char* data, std::size_t size,
                                    const std::string& origin) {
  if (size < 12 || std::memcmp(data, "LSCQ", 4) != 0)
    throw FormatError("bad codebook magic: " + origin);
  const auto v = binio::read_le<std::uint32_t>(data + 4);
  const auto dim = binio::read_le<std::uint32_t>(data + 8);
  if (v == 0 || dim == 0) throw FormatError("degenerate codebook header: " + origin);
  const std::size_t expect = 12 + static_cast<std::size_t>(v) * dim * 4;
  if (size != expect)
    throw CorruptionError("codebook payload size mismatch (expected " + std::to_string(expect) +
                          " bytes, got " + std::to_string(size) + "): " + origin);
  MatD m(v, dim);
  const unsigned char* p = data + 12;
  for (std::uint32_t r = 0; r < v; ++r)
    for (std::uint32_t c = 0; c < dim; ++c) {
      const auto bits = binio::read_le<std::uint32_t>(p);
      float f;
      std::memcpy(&f, &bits, 4);
      m(r, c) = f;
      p += 4;
    }
  return m;
}

inline void write_codebook_file(const std::filesystem::path& path, const Codebook& book) {
  binio::write_file_atomic(path, encode_codebook(book));
}

inline MatD read_codebook_file(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  return decode_codebook_vectors(bytes.data(), bytes.size(), path.string());
}

}  // namespace lsc
