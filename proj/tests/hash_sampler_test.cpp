#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "recallforge/rng.hpp"
#include "recallforge/sampler.hpp"
#include "recallforge/xxhash64.hpp"

using namespace recallforge;

namespace {

// Straight-line reference for the unstratified path: key every id, sort by
// (key, id), keep the k smallest, report in ascending id order.
std::vector<std::uint64_t> brute_smallest_ids(std::uint64_t max_id, std::uint64_t k,
                                              std::uint64_t seed, std::uint8_t stratum = 0) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> keyed;
  keyed.reserve(max_id);
  for (std::uint64_t id = 0; id < max_id; ++id) {
    keyed.emplace_back(hash_key(id, stratum, seed), id);
  }
  std::sort(keyed.begin(), keyed.end());
  if (k < keyed.size()) keyed.resize(k);
  std::vector<std::uint64_t> ids;
  ids.reserve(keyed.size());
  for (const auto& [key, id] : keyed) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

TEST_CASE("xxhash64 matches reference vectors") {
  struct Vec {
    const char* msg;
    std::uint64_t seed;
    std::uint64_t want;
  };
  // Generated with the reference xxHash implementation; spans every length
  // class of the algorithm (empty, tail-only, 4-byte lane, 8-byte lane, full
  // 32-byte stripes).
  const Vec vecs[] = {
      {"", 0, 0xEF46DB3751D8E999ULL},
      {"", 2025, 0x2CD6A94ECF9A406FULL},
      {"a", 0, 0xD24EC4F1A98C6E5BULL},
      {"abc", 0, 0x44BC2CF5AD770999ULL},
      {"abcd", 0, 0xDE0327B0D25D92CCULL},
      {"abcdefg", 0, 0x1860940E2902822DULL},
      {"recall-forge", 2025, 0xFF119051A6DC57A7ULL},
      {"0123456789abcdef0123456789abcdef", 0, 0x642A94958E71E6C5ULL},
      {"The quick brown fox jumps over the lazy dog", 0x9e3779b97f4a7c15ULL,
       0x7CFAC66832F66B74ULL},
  };
  for (const Vec& v : vecs) {
    CHECK(xxhash64(v.msg, std::strlen(v.msg), v.seed) == v.want);
  }
}

TEST_CASE("hash_key pins the 9-byte message layout") {
  // le64(id) followed by the stratum byte, hashed with the sample seed.
  CHECK(hash_key(0, 0, 2025) == 0x04F67BB81627481FULL);
  CHECK(hash_key(123456789, 7, 42) == 0xA4C01813D7CB7158ULL);

  unsigned char msg[9];
  const std::uint64_t id = 0xDEADBEEF01020304ULL;
  for (int i = 0; i < 8; ++i) msg[i] = static_cast<unsigned char>((id >> (8 * i)) & 0xff);
  msg[8] = 9;
  CHECK(hash_key(id, 9, 77) == xxhash64(msg, 9, 77));
}

TEST_CASE("derive_seed is stable and tag-sensitive") {
  CHECK(derive_seed(2025, 3, 0) == 0x249C677A5DB86858ULL);
  CHECK(derive_seed(2025, 3, 0) == derive_seed(2025, 3));
  CHECK(derive_seed(2025, 3, 0) != derive_seed(2025, 4, 0));
  CHECK(derive_seed(2025, 3, 0) != derive_seed(2025, 3, 1));
  CHECK(derive_seed(2024, 3, 0) != derive_seed(2025, 3, 0));
}

TEST_CASE("seed changes rekey nearly every id") {
  std::size_t changed = 0;
  for (std::uint64_t id = 0; id < 10000; ++id) {
    if (hash_key(id, 0, 1) != hash_key(id, 0, 2)) ++changed;
  }
  CHECK(changed >= 9900);
}

TEST_CASE("sample_without_replacement basics") {
  const auto full = sample_without_replacement(100, 100, 7);
  std::set<std::uint32_t> dedup(full.begin(), full.end());
  CHECK(dedup.size() == 100);
  CHECK(*dedup.begin() == 0);
  CHECK(*dedup.rbegin() == 99);

  const auto a = sample_without_replacement(5000, 250, 11);
  const auto b = sample_without_replacement(5000, 250, 11);
  const auto c = sample_without_replacement(5000, 250, 12);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.size() == 250);
  CHECK(std::set<std::uint32_t>(a.begin(), a.end()).size() == 250);

  CHECK_THROWS_AS(sample_without_replacement(10, 11, 0), std::invalid_argument);
}

TEST_CASE("assign_deciles buckets by floor(10p) with clamping") {
  const StratumAssignment st = assign_deciles({0.0, 0.05, 0.1, 0.55, 0.9999, 1.0, -0.2, 1.7});
  const std::vector<std::uint8_t> want = {0, 0, 1, 5, 9, 9, 0, 9};
  CHECK(st.deciles == want);
}

TEST_CASE("unstratified hashed sample equals the key-sort oracle") {
  for (const std::uint64_t seed : {1ULL, 2025ULL, 999983ULL}) {
    const auto got = hashed_sample_ids(4000, 400, seed);
    CHECK(got == brute_smallest_ids(4000, 400, seed));
    CHECK(std::is_sorted(got.begin(), got.end()));
  }
}

TEST_CASE("k >= population returns every id") {
  const auto got = hashed_sample_ids(37, 1000, 5);
  REQUIRE(got.size() == 37);
  for (std::uint64_t i = 0; i < 37; ++i) CHECK(got[i] == i);
}

TEST_CASE("unstratified samples nest as k grows") {
  const auto small = hashed_sample_ids(5000, 100, 13);
  const auto large = hashed_sample_ids(5000, 400, 13);
  CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
}

TEST_CASE("hashed_sample_order selects the same set in key order") {
  const auto by_id = hashed_sample_ids(3000, 200, 17);
  auto by_key = hashed_sample_order(3000, 200, 17);
  std::vector<std::uint64_t> prev_keys;
  for (const std::uint64_t id : by_key) prev_keys.push_back(hash_key(id, 0, 17));
  CHECK(std::is_sorted(prev_keys.begin(), prev_keys.end()));
  std::sort(by_key.begin(), by_key.end());
  CHECK(by_key == by_id);
}

TEST_CASE("uniform strata fill exact per-decile quotas") {
  // 100k scores spread evenly over [0,1): every decile holds ~10k members, far
  // above the 100-per-decile quota, so no redistribution can occur.
  const std::uint64_t n = 100000;
  std::vector<double> scores(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    scores[i] = static_cast<double>(i % 1000) / 1000.0;
  }
  const StratumAssignment st = assign_deciles(scores);
  const auto ids = hashed_sample_ids(n, 1000, 2025, &st);
  REQUIRE(ids.size() == 1000);

  std::array<int, 10> per_decile{};
  for (const std::uint64_t id : ids) ++per_decile[st.deciles[id]];
  for (int d = 0; d < 10; ++d) CHECK(per_decile[d] == 100);
}

TEST_CASE("stratified selection takes each decile's smallest keys") {
  // Independent of how the quota redistribution plays out, the ids chosen
  // inside one decile must always be that decile's smallest-key prefix.
  const std::uint64_t n = 6000;
  std::vector<double> scores(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    scores[i] = (i % 100 < 90) ? 0.15 : 0.95;  // two populated deciles, skewed
  }
  const StratumAssignment st = assign_deciles(scores);
  const std::uint64_t k = 900;
  const auto ids = hashed_sample_ids(n, k, 31, &st);
  REQUIRE(ids.size() == k);

  std::set<std::uint64_t> chosen(ids.begin(), ids.end());
  for (const std::uint8_t d : {std::uint8_t{1}, std::uint8_t{9}}) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> members;
    std::size_t taken = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      if (st.deciles[i] != d) continue;
      members.emplace_back(hash_key(i, d, 31), i);
      if (chosen.count(i)) ++taken;
    }
    std::sort(members.begin(), members.end());
    for (std::size_t r = 0; r < taken; ++r) {
      CHECK(chosen.count(members[r].second) == 1);
    }
  }
}

TEST_CASE("thin deciles are exhausted and the deficit lands elsewhere") {
  const std::uint64_t n = 5000;
  std::vector<double> scores(n, 0.42);
  // Decile 9 holds just 8 members; quota would be 50.
  for (std::uint64_t i = 0; i < 8; ++i) scores[i] = 0.99;
  const StratumAssignment st = assign_deciles(scores);
  const auto ids = hashed_sample_ids(n, 500, 7, &st);
  REQUIRE(ids.size() == 500);

  std::size_t from_top = 0;
  for (const std::uint64_t id : ids) {
    if (st.deciles[id] == 9) ++from_top;
  }
  CHECK(from_top == 8);  // everything the stratum has
}

TEST_CASE("global salted mode keeps the stratum in the key") {
  const std::uint64_t n = 2000;
  std::vector<double> scores(n);
  for (std::uint64_t i = 0; i < n; ++i) scores[i] = static_cast<double>(i) / n;
  const StratumAssignment st = assign_deciles(scores);
  const auto got = hashed_sample_ids(n, 300, 23, &st, StratifiedMode::GlobalSmallestSalted);

  std::vector<std::pair<std::uint64_t, std::uint64_t>> keyed;
  for (std::uint64_t id = 0; id < n; ++id) {
    keyed.emplace_back(hash_key(id, st.deciles[id], 23), id);
  }
  std::sort(keyed.begin(), keyed.end());
  keyed.resize(300);
  std::vector<std::uint64_t> want;
  for (const auto& [key, id] : keyed) want.push_back(id);
  std::sort(want.begin(), want.end());
  CHECK(got == want);
}

TEST_CASE("build_calibration_sample composes deciles with stratified selection") {
  const std::uint64_t n = 3000;
  std::vector<double> scores(n);
  std::mt19937_64 gen(99);
  for (double& s : scores) s = static_cast<double>(gen() >> 11) * 0x1p-53;

  const auto direct = build_calibration_sample(n, scores, 600, 55);
  const StratumAssignment st = assign_deciles(scores);
  CHECK(direct == hashed_sample_ids(n, 600, 55, &st));
  CHECK(direct == build_calibration_sample(n, scores, 600, 55));  // deterministic

  CHECK_THROWS_AS(build_calibration_sample(n + 1, scores, 10, 0), std::invalid_argument);
}

TEST_CASE("degenerate strata still deliver the full sample") {
  const std::vector<double> scores(1200, 0.95);
  const auto ids = build_calibration_sample(1200, scores, 240, 3);
  CHECK(ids.size() == 240);
}

TEST_CASE("different seeds share little of the sample") {
  const std::uint64_t n = 20000;
  std::vector<double> scores(n);
  for (std::uint64_t i = 0; i < n; ++i) scores[i] = static_cast<double>(i) / n;
  const auto a = build_calibration_sample(n, scores, 2000, 101);
  const auto b = build_calibration_sample(n, scores, 2000, 102);
  std::vector<std::uint64_t> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  const double jaccard =
      static_cast<double>(both.size()) / static_cast<double>(a.size() + b.size() - both.size());
  CHECK(jaccard < 0.2);
}
