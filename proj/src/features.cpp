#include "recallforge/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "recallforge/common.hpp"
#include "recallforge/grid_filter.hpp"
#include "recallforge/parallel.hpp"

namespace recallforge {

FeatureMatrix FeatureMatrix::zeros(std::size_t rows) {
  FeatureMatrix m;
  m.rows = rows;
  m.data.assign(rows * kFeatureCount, 0.0f);
  return m;
}

namespace {

struct GeomStats {
  Mbr mbr;
  double area = 0.0;
  double perimeter = 0.0;
  Point centroid;
  double vertex_count = 0.0;
};

GeomStats stats_of(const Geometry& g) {
  GeomStats s;
  s.mbr = compute_mbr(g);
  s.area = ring_area(g.ring);
  s.perimeter = ring_perimeter(g.ring);
  s.centroid = ring_centroid(g.ring);
  s.vertex_count = static_cast<double>(g.ring.size());
  return s;
}

double ratio_minmax(double a, double b) {
  const double hi = std::max(a, b);
  if (hi <= 0.0) return 0.0;
  return std::min(a, b) / hi;
}

double aspect_ratio(const Mbr& m) {
  const double w = m.width();
  const double h = m.height();
  if (h == 0.0) return w > 0.0 ? 100.0 : 0.0;
  return std::min(w / h, 100.0);
}

FeatureVector features_from(const GeomStats& s, const GeomStats& t, const GridSpec& grid) {
  if (s.area == 0.0 || t.area == 0.0) {
    RF_WARN_ONCE("zero-area geometry encountered during feature extraction");
  }
  if (s.perimeter == 0.0 || t.perimeter == 0.0) {
    RF_WARN_ONCE("zero-perimeter geometry encountered during feature extraction");
  }

  const Mbr& sm = s.mbr;
  const Mbr& tm = t.mbr;
  const double inter = sm.intersection_area(tm);
  const double uni = sm.area() + tm.area() - inter;
  const double smaller = std::min(sm.area(), tm.area());
  const double mean_diag = 0.5 * (sm.diagonal() + tm.diagonal());

  // Inclusive cell ranges each MBR overlaps, same convention as the filter.
  const std::int64_t sx0 = grid.cell_x(sm.min_x), sx1 = grid.cell_x(sm.max_x);
  const std::int64_t sy0 = grid.cell_y(sm.min_y), sy1 = grid.cell_y(sm.max_y);
  const std::int64_t tx0 = grid.cell_x(tm.min_x), tx1 = grid.cell_x(tm.max_x);
  const std::int64_t ty0 = grid.cell_y(tm.min_y), ty1 = grid.cell_y(tm.max_y);
  const std::int64_t nx = std::min(sx1, tx1) - std::max(sx0, tx0) + 1;
  const std::int64_t ny = std::min(sy1, ty1) - std::max(sy0, ty0) + 1;
  const double co_tiles =
      (nx > 0 && ny > 0) ? static_cast<double>(nx) * static_cast<double>(ny) : 0.0;

  // Corner sets are axis-aligned products, so the farthest corner pair
  // maximizes |dx| and |dy| independently.
  const double far_dx = std::max(std::abs(sm.max_x - tm.min_x), std::abs(tm.max_x - sm.min_x));
  const double far_dy = std::max(std::abs(sm.max_y - tm.min_y), std::abs(tm.max_y - sm.min_y));

  const Point sc = sm.center();
  const Point tc = tm.center();
  const bool shared_cell =
      grid.cell_x(sc.x) == grid.cell_x(tc.x) && grid.cell_y(sc.y) == grid.cell_y(tc.y);

  FeatureVector f{};
  f[0] = ratio_minmax(s.area, t.area);
  f[1] = ratio_minmax(s.perimeter, t.perimeter);
  f[2] = co_tiles;
  f[3] = uni > 0.0 ? inter / uni : 0.0;
  f[4] = smaller > 0.0 ? inter / smaller : 0.0;
  f[5] = mean_diag > 0.0 ? std::hypot(s.centroid.x - t.centroid.x, s.centroid.y - t.centroid.y) /
                               mean_diag
                         : 0.0;
  f[6] = ratio_minmax(sm.width(), tm.width());
  f[7] = ratio_minmax(sm.height(), tm.height());
  f[8] = aspect_ratio(sm);
  f[9] = aspect_ratio(tm);
  f[10] = std::log1p(s.area);
  f[11] = std::log1p(t.area);
  f[12] = ratio_minmax(s.vertex_count, t.vertex_count);
  f[13] = ratio_minmax(sm.diagonal(), tm.diagonal());
  f[14] = mean_diag > 0.0 ? std::hypot(far_dx, far_dy) / mean_diag : 0.0;
  f[15] = shared_cell ? 1.0 : 0.0;
  return f;
}

}  // namespace

FeatureVector extract_features(const Geometry& s, const Geometry& t, const GridSpec& grid) {
  return features_from(stats_of(s), stats_of(t), grid);
}

FeatureMatrix extract_feature_matrix(const std::vector<Geometry>& sources,
                                     const std::vector<Geometry>& targets,
                                     const CsrCandidates& candidates, const GridSpec& grid,
                                     unsigned threads) {
  std::vector<GeomStats> src_stats(sources.size());
  std::vector<GeomStats> tgt_stats(targets.size());
  parallel_for(sources.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) src_stats[i] = stats_of(sources[i]);
  });
  parallel_for(targets.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) tgt_stats[i] = stats_of(targets[i]);
  });

  FeatureMatrix m = FeatureMatrix::zeros(candidates.pair_count());
  parallel_for(candidates.pair_count(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t flat = lo; flat < hi; ++flat) {
      const auto [row, col] = candidates.pair(flat);
      const FeatureVector f = features_from(src_stats[row], tgt_stats[col], grid);
      float* out = m.row(flat);
      for (std::size_t c = 0; c < kFeatureCount; ++c) out[c] = static_cast<float>(f[c]);
    }
  });
  return m;
}

FeatureScaler fit_scaler(const FeatureMatrix& rows) {
  if (rows.rows == 0) throw InputError("fit_scaler: need at least one row");
  FeatureScaler sc;
  sc.mins.fill(std::numeric_limits<float>::max());
  sc.maxs.fill(std::numeric_limits<float>::lowest());
  for (std::size_t r = 0; r < rows.rows; ++r) {
    const float* v = rows.row(r);
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
      sc.mins[c] = std::min(sc.mins[c], v[c]);
      sc.maxs[c] = std::max(sc.maxs[c], v[c]);
    }
  }
  return sc;
}

FeatureMatrix transform(const FeatureScaler& scaler, const FeatureMatrix& rows) {
  std::array<double, kFeatureCount> span{};
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    span[c] = static_cast<double>(scaler.maxs[c]) - static_cast<double>(scaler.mins[c]);
  }
  FeatureMatrix out = FeatureMatrix::zeros(rows.rows);
  for (std::size_t r = 0; r < rows.rows; ++r) {
    const float* in = rows.row(r);
    float* dst = out.row(r);
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
      if (span[c] <= 0.0) {
        dst[c] = 0.0f;
        continue;
      }
      double v = 10000.0 * (static_cast<double>(in[c]) - scaler.mins[c]) / span[c];
      v = std::clamp(v, 0.0, 10000.0);
      dst[c] = static_cast<float>(v);
    }
  }
  return out;
}

void write_features(const std::string& path, const FeatureMatrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open for writing: " + path);
  os.write("RFFT", 4);
  write_u64_le(os, m.rows);
  write_u16_le(os, static_cast<std::uint16_t>(kFeatureCount));
  for (float v : m.data) write_f32_le(os, v);
  if (!os) throw InputError("short write: " + path);
}

FeatureMatrix read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "RFFT") throw InputError("bad RFFT magic: " + path);
  const std::uint64_t rows = read_u64_le(is);
  const std::uint16_t cols = read_u16_le(is);
  if (cols != kFeatureCount) throw InputError("unexpected feature width: " + path);
  FeatureMatrix m = FeatureMatrix::zeros(rows);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = read_f32_le(is);
  if (!is) throw InputError("truncated RFFT payload: " + path);
  char extra;
  if (is.read(&extra, 1)) throw InputError("trailing bytes in RFFT file: " + path);
  return m;
}

}  // namespace recallforge
