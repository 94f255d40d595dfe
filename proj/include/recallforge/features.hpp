#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "recallforge/geometry.hpp"

namespace recallforge {

inline constexpr std::size_t kFeatureCount = 16;

using FeatureVector = std::array<double, kFeatureCount>;

// Row-major rows x 16, f32 to keep large candidate sets compact and the
// on-disk dump bit-identical to the in-memory layout.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::vector<float> data;

  float* row(std::size_t r) { return data.data() + r * kFeatureCount; }
  const float* row(std::size_t r) const { return data.data() + r * kFeatureCount; }
  static FeatureMatrix zeros(std::size_t rows);
};

struct FeatureScaler {
  std::array<float, kFeatureCount> mins{};
  std::array<float, kFeatureCount> maxs{};
};

// Raw (unscaled) features for one candidate pair. Ratio features use the
// min/max form so they land in [0,1]; degenerate operands zero the affected
// ratios and log a warning once.
FeatureVector extract_features(const Geometry& s, const Geometry& t, const GridSpec& grid);

// Feature rows for every CSR candidate pair, parallel over pairs with row
// order fixed by the CSR traversal.
struct CsrCandidates;
FeatureMatrix extract_feature_matrix(const std::vector<Geometry>& sources,
                                     const std::vector<Geometry>& targets,
                                     const CsrCandidates& candidates, const GridSpec& grid,
                                     unsigned threads);

FeatureScaler fit_scaler(const FeatureMatrix& rows);

// v' = 10000 * (v - min) / (max - min), clamped to [0, 10000]; features that
// were constant at fit time map to 0.
FeatureMatrix transform(const FeatureScaler& scaler, const FeatureMatrix& rows);

void write_features(const std::string& path, const FeatureMatrix& m);
FeatureMatrix read_features(const std::string& path);

}  // namespace recallforge
