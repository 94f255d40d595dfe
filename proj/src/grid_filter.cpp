#include "recallforge/grid_filter.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "recallforge/common.hpp"
#include "recallforge/parallel.hpp"

namespace recallforge {

std::pair<std::uint32_t, std::uint32_t> CsrCandidates::pair(std::size_t flat) const {
  // Row lookup by binary search over offsets; fine for occasional access.
  const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
  const std::size_t row = static_cast<std::size_t>(it - offsets.begin()) - 1;
  return {static_cast<std::uint32_t>(row), values[flat]};
}

namespace {

// Packs a signed cell coordinate pair into one map key. Wrapping casts are
// bijective for |cell| < 2^31, far beyond any grid this code sees.
inline std::uint64_t cell_key(std::int64_t cx, std::int64_t cy) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(cx)) << 32) |
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(cy));
}

struct CellRange {
  std::int64_t x0, x1, y0, y1;
};

CellRange cells_of(const Mbr& m, const GridSpec& grid) {
  return {grid.cell_x(m.min_x), grid.cell_x(m.max_x), grid.cell_y(m.min_y),
          grid.cell_y(m.max_y)};
}

}  // namespace

CsrCandidates enumerate_candidates(const std::vector<Geometry>& S,
                                   const std::vector<Geometry>& T,
                                   const GridSpec& grid, unsigned threads) {
  if (S.empty() || T.empty()) throw std::invalid_argument("enumerate_candidates: empty input set");
  if (!(grid.theta_x > 0.0) || !(grid.theta_y > 0.0)) {
    throw std::invalid_argument("enumerate_candidates: invalid grid");
  }
  if (T.size() > 0xffffffffull) throw std::invalid_argument("target set exceeds u32 index range");

  std::vector<Mbr> s_mbrs(S.size());
  std::vector<Mbr> t_mbrs(T.size());
  parallel_for(S.size(), threads,
               [&](std::size_t b, std::size_t e) { for (std::size_t i = b; i < e; ++i) s_mbrs[i] = compute_mbr(S[i]); });
  parallel_for(T.size(), threads,
               [&](std::size_t b, std::size_t e) { for (std::size_t j = b; j < e; ++j) t_mbrs[j] = compute_mbr(T[j]); });

  // Index over T: every cell a target MBR overlaps holds that target's index.
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> index;
  index.reserve(T.size() * 2);
  for (std::size_t j = 0; j < T.size(); ++j) {
    const CellRange r = cells_of(t_mbrs[j], grid);
    for (std::int64_t cx = r.x0; cx <= r.x1; ++cx) {
      for (std::int64_t cy = r.y0; cy <= r.y1; ++cy) {
        index[cell_key(cx, cy)].push_back(static_cast<std::uint32_t>(j));
      }
    }
  }

  // Probe by S. Rows are independent, so chunked workers write disjoint
  // slots and the merge below is a fixed-order concatenation.
  std::vector<std::vector<std::uint32_t>> rows(S.size());
  parallel_for(S.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> hits;
    for (std::size_t i = begin; i < end; ++i) {
      hits.clear();
      const CellRange r = cells_of(s_mbrs[i], grid);
      for (std::int64_t cx = r.x0; cx <= r.x1; ++cx) {
        for (std::int64_t cy = r.y0; cy <= r.y1; ++cy) {
          const auto it = index.find(cell_key(cx, cy));
          if (it == index.end()) continue;
          hits.insert(hits.end(), it->second.begin(), it->second.end());
        }
      }
      // Sorted-unique merge keeps rows canonical and drops multi-cell dupes.
      std::sort(hits.begin(), hits.end());
      hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
      std::vector<std::uint32_t>& row = rows[i];
      for (const std::uint32_t j : hits) {
        if (s_mbrs[i].intersects(t_mbrs[j])) row.push_back(j);
      }
    }
  });

  CsrCandidates csr;
  csr.offsets.resize(S.size() + 1);
  csr.offsets[0] = 0;
  for (std::size_t i = 0; i < S.size(); ++i) {
    csr.offsets[i + 1] = csr.offsets[i] + rows[i].size();
  }
  csr.values.reserve(csr.offsets.back());
  for (const auto& row : rows) csr.values.insert(csr.values.end(), row.begin(), row.end());
  return csr;
}

CsrCandidates brute_force_candidates(const std::vector<Geometry>& S,
                                     const std::vector<Geometry>& T) {
  if (S.empty() || T.empty()) throw std::invalid_argument("brute_force_candidates: empty input set");
  std::vector<Mbr> t_mbrs(T.size());
  for (std::size_t j = 0; j < T.size(); ++j) t_mbrs[j] = compute_mbr(T[j]);

  CsrCandidates csr;
  csr.offsets.resize(S.size() + 1);
  csr.offsets[0] = 0;
  for (std::size_t i = 0; i < S.size(); ++i) {
    const Mbr sm = compute_mbr(S[i]);
    std::uint64_t count = 0;
    for (std::size_t j = 0; j < T.size(); ++j) {
      if (sm.intersects(t_mbrs[j])) {
        csr.values.push_back(static_cast<std::uint32_t>(j));
        ++count;
      }
    }
    csr.offsets[i + 1] = csr.offsets[i] + count;
  }
  return csr;
}

void write_csr(const std::string& path, const CsrCandidates& csr) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write csr file: " + path);
  os.write("RFCS", 4);
  write_u16_le(os, 1);
  write_u64_le(os, csr.rows());
  write_u64_le(os, csr.values.size());
  for (const std::uint64_t v : csr.offsets) write_u64_le(os, v);
  for (const std::uint32_t v : csr.values) write_u32_le(os, v);
  if (!os) throw InputError("short write on csr file: " + path);
}

CsrCandidates read_csr(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open csr file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "RFCS") throw InputError("bad magic in csr file: " + path);
  const std::uint16_t version = read_u16_le(is);
  if (version != 1) throw InputError("unsupported csr version in " + path);
  const std::uint64_t n_rows = read_u64_le(is);
  const std::uint64_t n_values = read_u64_le(is);
  CsrCandidates csr;
  csr.offsets.resize(n_rows + 1);
  for (auto& v : csr.offsets) v = read_u64_le(is);
  csr.values.resize(n_values);
  for (auto& v : csr.values) v = read_u32_le(is);
  if (csr.offsets.front() != 0 || csr.offsets.back() != n_values) {
    throw InputError("inconsistent csr offsets in " + path);
  }
  return csr;
}

}  // namespace recallforge
