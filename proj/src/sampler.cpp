#include "recallforge/sampler.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "recallforge/common.hpp"

namespace recallforge {

StratumAssignment assign_deciles(const std::vector<double>& scores) {
  StratumAssignment out;
  out.deciles.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = std::floor(10.0 * scores[i]);
    out.deciles[i] = static_cast<std::uint8_t>(std::clamp(d, 0.0, 9.0));
  }
  return out;
}

namespace {

struct Keyed {
  std::uint64_t key;
  std::uint64_t id;
  bool operator<(const Keyed& o) const {
    return key != o.key ? key < o.key : id < o.id;
  }
};

std::vector<Keyed> keyed_ids(std::uint64_t max_id, std::uint64_t seed,
                             const StratumAssignment* strata) {
  std::vector<Keyed> keys(max_id);
  for (std::uint64_t i = 0; i < max_id; ++i) {
    const std::uint8_t d = strata ? strata->deciles[i] : std::uint8_t{0};
    keys[i] = {hash_key(i, d, seed), i};
  }
  return keys;
}

// First k under (key, id) order, left in that order.
void select_smallest(std::vector<Keyed>& keys, std::uint64_t k) {
  if (k < keys.size()) {
    std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end());
    keys.resize(k);
  }
  std::sort(keys.begin(), keys.end());
}

std::vector<std::uint64_t> per_decile_quota(std::uint64_t max_id, std::uint64_t k,
                                            std::uint64_t seed,
                                            const StratumAssignment& strata) {
  std::array<std::vector<Keyed>, 10> buckets;
  for (std::uint64_t i = 0; i < max_id; ++i) {
    const std::uint8_t d = strata.deciles[i];
    buckets[d].push_back({hash_key(i, d, seed), i});
  }

  const std::uint64_t total = std::min<std::uint64_t>(k, max_id);
  std::array<std::uint64_t, 10> take{};
  std::uint64_t assigned = 0;
  for (int d = 0; d < 10; ++d) {
    take[d] = std::min<std::uint64_t>(k / 10, buckets[d].size());
    assigned += take[d];
  }
  // Thin deciles leave a deficit (as does k % 10); hand the remainder out one
  // slot per round, deciles ordered by remaining population.
  std::uint64_t deficit = total - assigned;
  while (deficit > 0) {
    std::array<int, 10> order{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const std::uint64_t ra = buckets[a].size() - take[a];
      const std::uint64_t rb = buckets[b].size() - take[b];
      return ra != rb ? ra > rb : a < b;
    });
    bool progressed = false;
    for (const int d : order) {
      if (deficit == 0) break;
      if (take[d] < buckets[d].size()) {
        ++take[d];
        --deficit;
        progressed = true;
      }
    }
    if (!progressed) break;  // every decile exhausted; total was capped anyway
  }

  std::vector<std::uint64_t> out;
  out.reserve(total);
  for (int d = 0; d < 10; ++d) {
    select_smallest(buckets[d], take[d]);
    for (const Keyed& kid : buckets[d]) out.push_back(kid.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<std::uint64_t> hashed_sample_ids(std::uint64_t max_id, std::uint64_t k,
                                             std::uint64_t seed,
                                             const StratumAssignment* strata,
                                             StratifiedMode mode) {
  if (k < 1) throw std::invalid_argument("hashed_sample_ids: k must be >= 1");
  if (strata && strata->deciles.size() != max_id) {
    throw std::invalid_argument("hashed_sample_ids: strata size mismatch");
  }
  if (max_id == 0) return {};

  if (strata && mode == StratifiedMode::PerDecileQuota) {
    return per_decile_quota(max_id, k, seed, *strata);
  }
  std::vector<Keyed> keys = keyed_ids(max_id, seed, strata);
  select_smallest(keys, std::min<std::uint64_t>(k, max_id));
  std::vector<std::uint64_t> out(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) out[i] = keys[i].id;
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint64_t> hashed_sample_order(std::uint64_t max_id, std::uint64_t k,
                                               std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("hashed_sample_order: k must be >= 1");
  if (max_id == 0) return {};
  std::vector<Keyed> keys = keyed_ids(max_id, seed, nullptr);
  select_smallest(keys, std::min<std::uint64_t>(k, max_id));
  std::vector<std::uint64_t> out(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) out[i] = keys[i].id;
  return out;
}

std::vector<std::uint64_t> build_calibration_sample(std::uint64_t candidate_count,
                                                    const std::vector<double>& scores,
                                                    std::uint64_t k, std::uint64_t seed,
                                                    StratifiedMode mode) {
  if (scores.size() != candidate_count) {
    throw std::invalid_argument("build_calibration_sample: scores length mismatch");
  }
  const StratumAssignment strata = assign_deciles(scores);
  return hashed_sample_ids(candidate_count, k, seed, &strata, mode);
}

void dump_id_list(const std::string& path, const std::vector<std::uint64_t>& ids) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write id list: " + path);
  for (const std::uint64_t id : ids) os << id << '\n';
}

}  // namespace recallforge
