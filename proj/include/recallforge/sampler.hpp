#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recallforge/xxhash64.hpp"

namespace recallforge {

/// Score decile per candidate, d = min(9, floor(10 * p)).
struct StratumAssignment {
  std::vector<std::uint8_t> deciles;
};

StratumAssignment assign_deciles(const std::vector<double>& scores);

/// Key for one id: XXH64 of the 9-byte message le64(id) || stratum, seeded.
/// The byte layout is pinned by golden-value tests; do not reorder.
inline std::uint64_t hash_key(std::uint64_t id, std::uint8_t stratum, std::uint64_t seed) {
  unsigned char msg[9];
  for (int i = 0; i < 8; ++i) msg[i] = static_cast<unsigned char>((id >> (8 * i)) & 0xff);
  msg[8] = stratum;
  return xxhash64(msg, sizeof msg, seed);
}

/// How stratified selection spends its budget.
///  PerDecileQuota: floor(k/10) smallest keys per decile, deficit from thin
///    deciles redistributed round-robin by remaining population.
///  GlobalSmallestSalted: k smallest overall of the stratum-salted keys
///    (kept for comparison; the quota reading is the default).
enum class StratifiedMode { PerDecileQuota, GlobalSmallestSalted };

/// Ids 0..max_id-1 with the k smallest keys, ascending id order. Without
/// strata the selection is global (stratum byte 0); ties break toward the
/// smaller id. k >= max_id returns everything.
std::vector<std::uint64_t> hashed_sample_ids(
    std::uint64_t max_id, std::uint64_t k, std::uint64_t seed,
    const StratumAssignment* strata = nullptr,
    StratifiedMode mode = StratifiedMode::PerDecileQuota);

/// Same unstratified selection as hashed_sample_ids, but returned in
/// ascending key order. This is the audit/labeling order.
std::vector<std::uint64_t> hashed_sample_order(std::uint64_t max_id, std::uint64_t k,
                                               std::uint64_t seed);

/// Deciles from scores, then stratified hashed selection over candidates.
std::vector<std::uint64_t> build_calibration_sample(
    std::uint64_t candidate_count, const std::vector<double>& scores,
    std::uint64_t k, std::uint64_t seed,
    StratifiedMode mode = StratifiedMode::PerDecileQuota);

/// Newline-delimited decimal id list, for audit.
void dump_id_list(const std::string& path, const std::vector<std::uint64_t>& ids);

}  // namespace recallforge
