#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "recallforge/geometry.hpp"

namespace recallforge {

/// Candidate pairs in compressed sparse row form: row i spans
/// values[offsets[i] .. offsets[i+1]) and lists target indices in strictly
/// increasing order. offsets.size() == |S| + 1, offsets[0] == 0.
struct CsrCandidates {
  std::vector<std::uint64_t> offsets;
  std::vector<std::uint32_t> values;

  std::size_t rows() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t pair_count() const { return values.size(); }

  std::pair<std::uint32_t, std::uint32_t> pair(std::size_t flat) const;

  bool operator==(const CsrCandidates&) const = default;
};

/// All pairs (i, j) whose MBRs intersect (closed rectangles, touching edges
/// count), found through the equigrid index built over T and probed by S.
/// Output is canonical and byte-identical for any worker count.
CsrCandidates enumerate_candidates(const std::vector<Geometry>& S,
                                   const std::vector<Geometry>& T,
                                   const GridSpec& grid, unsigned threads = 1);

/// Exhaustive all-pairs oracle; same canonical CSR form as enumerate_candidates.
CsrCandidates brute_force_candidates(const std::vector<Geometry>& S,
                                     const std::vector<Geometry>& T);

// Binary CSR dump: magic RFCS, version u16, |S| u64, |values| u64, then
// offsets as u64 LE and values as u32 LE.
void write_csr(const std::string& path, const CsrCandidates& csr);
CsrCandidates read_csr(const std::string& path);

}  // namespace recallforge
