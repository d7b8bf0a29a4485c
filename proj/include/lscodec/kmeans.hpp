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

#include <limits>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/rng.hpp"

namespace lsc {

struct KMeansModel {
  MatD centroids;  // K x D
  double init_inertia = 0.0;
  double final_inertia = 0.0;
  int iterations = 0;

  int k() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
};

struct KMeansOptions {
  int max_iterations = 100;
  double rel_tolerance = 1e-4;
};

namespace detail {

/// Squared distances of every point to every centroid, points x centroids.
inline MatD pairwise_sq_dist(const MatD& points, const MatD& centroids) {
  const VecD p2 = points.rowwise().squaredNorm();
  const VecD c2 = centroids.rowwise().squaredNorm();
  MatD d = -2.0 * (points * centroids.transpose());
  d.colwise() += p2;
  d.rowwise() += c2.transpose();
  return d.cwiseMax(0.0);
}

/// Row-wise argmin with ties broken toward the lowest index.
inline std::vector<int> argmin_rows(const MatD& d) {
  std::vector<int> idx(static_cast<std::size_t>(d.rows()));
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    int best = 0;
    double best_val = d(r, 0);
    for (Eigen::Index c = 1; c < d.cols(); ++c) {
      if (d(r, c) < best_val) {
        best_val = d(r, c);
        best = static_cast<int>(c);
      }
    }
    idx[static_cast<std::size_t>(r)] = best;
  }
  return idx;
}

}  // namespace detail

inline std::vector<int> kmeans_assign(const KMeansModel& model, const MatD& points) {
  check_arg(points.cols() == model.centroids.cols(), "point dimension does not match centroids");
  return detail::argmin_rows(detail::pairwise_sq_dist(points, model.centroids));
}

inline double kmeans_inertia(const MatD& centroids, const MatD& points) {
  const MatD d = detail::pairwise_sq_dist(points, centroids);
  double total = 0.0;
  for (Eigen::Index r = 0; r < d.rows(); ++r) total += d.row(r).minCoeff();
  return total;
}

/// Lloyd's algorithm with k-means++ initialization. Deterministic under a
/// fixed seed; stops at relative inertia improvement below rel_tolerance or
/// max_iterations.
inline KMeansModel fit_kmeans(const MatD& points, int k, std::uint64_t seed,
                              const KMeansOptions& opts = {}) {
  const auto n = points.rows();
  check_arg(k >= 1, "k must be >= 1");
  check_arg(n >= k, "fewer points than centroids");

  Rng rng(seed);
  KMeansModel model;
  model.centroids.resize(k, points.cols());

  // k-means++ seeding.
  model.centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.uniform_int(n)));
  VecD min_d = (points.rowwise() - model.centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = min_d.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += min_d(i);
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_int(n));
    }
    model.centroids.row(c) = points.row(pick);
    min_d = min_d.cwiseMin((points.rowwise() - model.centroids.row(c)).rowwise().squaredNorm());
  }

  model.init_inertia = kmeans_inertia(model.centroids, points);
  double prev = model.init_inertia;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const std::vector<int> assign = detail::argmin_rows(
        detail::pairwise_sq_dist(points, model.centroids));
    MatD sums = MatD::Zero(k, points.cols());
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      // Empty clusters keep their previous centroid.
      if (counts[static_cast<std::size_t>(c)] > 0)
        model.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    const double cur = kmeans_inertia(model.centroids, points);
    model.iterations = iter + 1;
    model.final_inertia = cur;
    if (prev > 0.0 && (prev - cur) / prev < opts.rel_tolerance) break;
    prev = cur;
  }
  if (model.iterations == 0) model.final_inertia = model.init_inertia;
  return model;
}

}  // namespace lsc
