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
#include <set>
#include <vector>

#include "lscodec/rng.hpp"

using lsc::Rng;
using lsc::derive_seed;

TEST_CASE("identical seeds give identical streams", "[rng]") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams", "[rng]") {
  Rng a(1), b(2);
  int differing = 0;
  for (int i = 0; i < 64; ++i) differing += a.next_u64() != b.next_u64();
  REQUIRE(differing > 60);
}

TEST_CASE("uniform stays in the half-open unit interval", "[rng]") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("ranged uniform respects its bounds and mean", "[rng]") {
  Rng rng(11);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(0.8, 1.2);
    REQUIRE(u >= 0.8);
    REQUIRE(u < 1.2);
    sum += u;
  }
  REQUIRE(std::abs(sum / n - 1.0) < 0.01);
}

TEST_CASE("uniform_int covers every residue below n", "[rng]") {
  Rng rng(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t v = rng.uniform_int(17);
    REQUIRE(v < 17);
    seen.insert(v);
  }
  REQUIRE(seen.size() == 17);
}

TEST_CASE("normal draws have unit scale", "[rng]") {
  Rng rng(5);
  const int n = 40000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.03);
  REQUIRE(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("state capture and restore replays the stream", "[rng]") {
  Rng rng(99);
  for (int i = 0; i < 10; ++i) rng.next_u64();
  const auto snap = rng.state();
  std::vector<std::uint64_t> first;
  for (int i = 0; i < 20; ++i) first.push_back(rng.next_u64());
  rng.set_state(snap);
  for (int i = 0; i < 20; ++i) REQUIRE(rng.next_u64() == first[static_cast<std::size_t>(i)]);
}

TEST_CASE("derived seeds separate ids, salts, and global seeds", "[rng]") {
  const auto base = derive_seed(1234, "utt_0001", 0);
  REQUIRE(base == derive_seed(1234, "utt_0001", 0));
  REQUIRE(base != derive_seed(1234, "utt_0002", 0));
  REQUIRE(base != derive_seed(1234, "utt_0001", 1));
  REQUIRE(base != derive_seed(1235, "utt_0001", 0));
}
