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
#include <filesystem>
#include <fstream>
#include <vector>

#include "lscodec/kmeans.hpp"
#include "lscodec/quantizer.hpp"
#include "lscodec/rng.hpp"

namespace fs = std::filesystem;
using namespace lsc;

namespace {

MatD random_mat(int rows, int cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  MatD m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

Codebook make_book(const MatD& vectors, double gamma = 0.99) {
  return codebook_from_vectors(vectors, gamma);
}

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "lscodec_quant_tests";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("kmeans clusters three separated blobs", "[kmeans]") {
  Rng rng(61);
  MatD points(90, 2);
  const double centers[3][2] = {{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}};
  for (int i = 0; i < 90; ++i) {
    const int blob = i / 30;
    points(i, 0) = centers[blob][0] + 0.3 * rng.normal();
    points(i, 1) = centers[blob][1] + 0.3 * rng.normal();
  }
  const KMeansModel model = fit_kmeans(points, 3, 7);
  REQUIRE(model.k() == 3);
  REQUIRE(model.final_inertia <= model.init_inertia);

  // Every centroid must land within one blob's spread of a true center.
  for (int c = 0; c < 3; ++c) {
    double best = 1e30;
    for (const auto& ctr : centers) {
      const double dx = model.centroids(c, 0) - ctr[0];
      const double dy = model.centroids(c, 1) - ctr[1];
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
    REQUIRE(best < 1.0);
  }

  // Assignments agree per blob.
  const std::vector<int> assign = kmeans_assign(model, points);
  for (int b = 0; b < 3; ++b)
    for (int i = 1; i < 30; ++i) REQUIRE(assign[static_cast<std::size_t>(b * 30 + i)] ==
                                         assign[static_cast<std::size_t>(b * 30)]);
}

TEST_CASE("kmeans is deterministic under a fixed seed", "[kmeans]") {
  const MatD points = random_mat(100, 8, 62);
  const KMeansModel a = fit_kmeans(points, 10, 99);
  const KMeansModel b = fit_kmeans(points, 10, 99);
  REQUIRE((a.centroids - b.centroids).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kmeans rejects more clusters than points", "[kmeans]") {
  REQUIRE_THROWS_AS(fit_kmeans(random_mat(4, 2, 63), 5, 1), InvalidArgumentError);
}

TEST_CASE("quantize matches exhaustive nearest neighbor search", "[quantizer]") {
  Rng size_rng(64);
  for (int trial = 0; trial < 40; ++trial) {
    const int t_len = 1 + static_cast<int>(size_rng.uniform_int(256));
    const int v = 1 + static_cast<int>(size_rng.uniform_int(64));
    const int dim = 1 + static_cast<int>(size_rng.uniform_int(24));
    const MatD latents = random_mat(t_len, dim, 1000 + static_cast<std::uint64_t>(trial));
    const MatD vectors = random_mat(v, dim, 2000 + static_cast<std::uint64_t>(trial));
    const Codebook book = make_book(vectors);
    const QuantizeResult qr = quantize(latents, book);

    for (int t = 0; t < t_len; ++t) {
      int best = 0;
      double best_d = (latents.row(t) - vectors.row(0)).squaredNorm();
      for (int i = 1; i < v; ++i) {
        const double d = (latents.row(t) - vectors.row(i)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      REQUIRE(qr.indices[static_cast<std::size_t>(t)] == best);
      REQUIRE((qr.quantized.row(t) - vectors.row(best)).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("equidistant latents break ties toward the lowest index", "[quantizer]") {
  MatD vectors(3, 1);
  vectors << -1.0, 1.0, 1.0;  // codes 1 and 2 coincide
  const Codebook book = make_book(vectors);
  MatD latents(2, 1);
  latents << 0.0, 1.0;  // frame 0 is equidistant from codes 0 and 1
  const QuantizeResult qr = quantize(latents, book);
  REQUIRE(qr.indices[0] == 0);
  REQUIRE(qr.indices[1] == 1);
}

TEST_CASE("perplexity spans collapsed to uniform usage", "[quantizer]") {
  MatD vectors(4, 1);
  vectors << 0.0, 10.0, 20.0, 30.0;
  const Codebook book = make_book(vectors);

  MatD collapsed = MatD::Zero(16, 1);
  REQUIRE(quantize(collapsed, book).perplexity == Catch::Approx(1.0));

  MatD uniform(4, 1);
  uniform << 0.0, 10.0, 20.0, 30.0;
  REQUIRE(quantize(uniform, book).perplexity == Catch::Approx(4.0));
}

TEST_CASE("ema updates follow the geometric recursion", "[quantizer]") {
  // All frames on one constant value c: vectors[0] approaches c geometrically.
  const double c = 2.0;
  const int dim = 4;
  MatD vectors = random_mat(2, dim, 65);
  Codebook book = make_book(vectors, 0.9);

  MatD batch = MatD::Constant(8, dim, c);
  const std::vector<int> indices(8, 0);
  const double e0 = std::abs(book.vectors(0, 0) - c);
  for (int k = 1; k <= 40; ++k) {
    ema_update(book, batch, indices);
    // Count smoothing scales the error but never beats the gamma^k envelope
    // by more than its own constant.
    const double bound = e0 * std::pow(book.gamma, k) * 12.0 + 1e-9;
    REQUIRE(std::abs(book.vectors(0, 0) - c) <= bound);
  }
  REQUIRE(std::abs(book.vectors(0, 0) - c) < 1e-2);
  REQUIRE(book.update_step == 40);
}

TEST_CASE("codes with no assignments keep their vector", "[quantizer]") {
  MatD vectors = random_mat(3, 2, 66);
  Codebook book = make_book(vectors);
  const MatD before = book.vectors;
  MatD batch = MatD::Constant(5, 2, 0.25);
  ema_update(book, batch, std::vector<int>(5, 0));
  // Codes 1 and 2 saw nothing: sums and counts decay together, so the
  // refreshed vector is unchanged.
  REQUIRE((book.vectors.row(1) - before.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((book.vectors.row(2) - before.row(2)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((book.vectors.row(0) - before.row(0)).cwiseAbs().maxCoeff() > 1e-4);
}

TEST_CASE("gamma zero makes the codebook jump to the batch mean", "[quantizer]") {
  MatD vectors = random_mat(2, 3, 67);
  Codebook book = make_book(vectors, 0.0);
  MatD batch(4, 3);
  batch << 1, 2, 3, 3, 2, 1, 2, 2, 2, 0, 0, 0;
  const std::vector<int> indices = {0, 0, 0, 1};
  ema_update(book, batch, indices);
  const MatD mean0 = (batch.row(0) + batch.row(1) + batch.row(2)) / 3.0;
  REQUIRE((book.vectors.row(0) - mean0).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((book.vectors.row(1) - batch.row(3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ema reaches a fixed point under stationary assignments", "[quantizer]") {
  const int v = 6, dim = 8, frames = 60;
  const MatD latents = random_mat(frames, dim, 68);
  Codebook book = make_book(random_mat(v, dim, 69), 0.99);

  // Freeze the assignment of the first pass and iterate updates on it.
  const std::vector<int> indices = quantize(latents, book).indices;
  MatD prev = book.vectors;
  double delta = 1e30;
  for (int step = 0; step < 3000 && delta >= 1e-6; ++step) {
    ema_update(book, latents, indices);
    delta = (book.vectors - prev).cwiseAbs().maxCoeff();
    prev = book.vectors;
  }
  REQUIRE(delta < 1e-6);

  // The fixed point is the per-code batch mean. The residual at the exit
  // threshold is delta / (1 - gamma), so allow two orders above the exit.
  for (int i = 0; i < v; ++i) {
    MatD sum = MatD::Zero(1, dim);
    double count = 0.0;
    for (int t = 0; t < frames; ++t) {
      if (indices[static_cast<std::size_t>(t)] == i) {
        sum += latents.row(t);
        count += 1.0;
      }
    }
    if (count > 0.0)
      REQUIRE((book.vectors.row(i) - sum / count).cwiseAbs().maxCoeff() < 5e-4);
  }
}

TEST_CASE("expiration stays inactive before the gate", "[quantizer]") {
  Codebook book = make_book(random_mat(4, 2, 70));
  book.ema_cluster_size(2) = 1e-9;  // would expire if the gate were open
  detail::refresh_vectors(book);
  const MatD before = book.vectors;
  Rng rng(5);
  const ExpireResult res = expire_codes(book, random_mat(10, 2, 71), 1e-3, rng, 5000);
  REQUIRE(res.replaced.empty());
  REQUIRE((book.vectors - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("expiration replaces dead codes from the batch", "[quantizer]") {
  Codebook book = make_book(random_mat(4, 2, 72));
  book.update_step = 5000;
  book.ema_cluster_size(1) = 1e-9;
  const MatD batch = random_mat(10, 2, 73);
  Rng rng(6);
  const ExpireResult res = expire_codes(book, batch, 1e-3, rng, 5000);
  REQUIRE(res.replaced == std::vector<int>{1});
  REQUIRE(book.ema_cluster_size(1) == 1.0);
  bool found = false;
  for (int r = 0; r < batch.rows(); ++r)
    if ((book.vectors.row(1) - batch.row(r)).cwiseAbs().maxCoeff() == 0.0) found = true;
  REQUIRE(found);
}

TEST_CASE("expiration with no batch frames reports a skip", "[quantizer]") {
  Codebook book = make_book(random_mat(4, 2, 74));
  book.update_step = 6000;
  book.ema_cluster_size(0) = 1e-9;
  Rng rng(7);
  const ExpireResult res = expire_codes(book, MatD(0, 2), 1e-3, rng, 5000);
  REQUIRE(res.skipped);
}

TEST_CASE("healthy codebooks pass expiration untouched", "[quantizer]") {
  Codebook book = make_book(random_mat(4, 2, 75));
  book.update_step = 9000;
  Rng rng(8);
  const ExpireResult res = expire_codes(book, random_mat(6, 2, 76), 1e-3, rng, 5000);
  REQUIRE(res.replaced.empty());
  REQUIRE_FALSE(res.skipped);
}

TEST_CASE("kmeans init seeds consistent ema state", "[quantizer]") {
  const MatD frames = random_mat(300, 8, 77);
  const Codebook book = init_codebook_kmeans(frames, 16, 11);
  REQUIRE(book.size() == 16);
  REQUIRE(book.dim() == 8);
  REQUIRE(book.update_step == 0);
  // Smoothed-division invariant from the start.
  for (int i = 0; i < book.size(); ++i) {
    const MatD expect = book.ema_embed_sum.row(i) / std::max(book.ema_cluster_size(i), 1e-5);
    REQUIRE((book.vectors.row(i) - expect).cwiseAbs().maxCoeff() < 1e-9);
  }
  // Counts are normalized to mean one.
  REQUIRE(book.ema_cluster_size.mean() == Catch::Approx(1.0).margin(1e-6));
  REQUIRE_THROWS_AS(init_codebook_kmeans(random_mat(5, 8, 78), 16, 1), InvalidArgumentError);
}

TEST_CASE("codebook file roundtrip preserves vectors at single precision", "[quantizer]") {
  const Codebook book = make_book(random_mat(12, 6, 79));
  const fs::path path = temp_dir() / "book.lscq";
  write_codebook_file(path, book);
  const MatD back = read_codebook_file(path);
  REQUIRE(back.rows() == 12);
  REQUIRE(back.cols() == 6);
  REQUIRE((back - book.vectors).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("codebook file corruption is detected", "[quantizer]") {
  const Codebook book = make_book(random_mat(4, 4, 80));
  const fs::path path = temp_dir() / "corrupt.lscq";
  write_codebook_file(path, book);
  auto bytes = binio::read_file(path);
  bytes.resize(bytes.size() - 3);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  }
  REQUIRE_THROWS_AS(read_codebook_file(path), CorruptionError);

  const fs::path wrong = temp_dir() / "wrong_magic.lscq";
  binio::write_file_atomic(wrong, std::string("NOPE") + std::string(32, '\0'));
  REQUIRE_THROWS_AS(read_codebook_file(wrong), FormatError);
}

TEST_CASE("codebook wrapper validates and carries gamma", "[quantizer]") {
  const MatD vectors = random_mat(5, 3, 81);
  const Codebook book = codebook_from_vectors(vectors, 0.97);
  REQUIRE(book.gamma == 0.97);
  REQUIRE(book.update_step == 0);
  REQUIRE((book.vectors - vectors).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE_THROWS_AS(codebook_from_vectors(MatD(0, 3), 0.99), InvalidArgumentError);
}
