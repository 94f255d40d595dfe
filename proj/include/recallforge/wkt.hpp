#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "recallforge/geometry.hpp"

namespace recallforge {

// Geometry CSV: header `id,wkt`, one POLYGON per row. Only the outer ring is
// honored. Writers emit coordinates with 17 significant digits so the text
// round-trips doubles exactly; that is what makes staged reruns bit-stable.

std::vector<Geometry> read_geometry_csv(const std::string& path);
void write_geometry_csv(const std::string& path, const std::vector<Geometry>& geoms);

Geometry parse_wkt_polygon(std::uint64_t id, const std::string& wkt);
std::string format_wkt_polygon(const Geometry& g);

// Ground-truth label CSV: header `src_id,tgt_id`, one pair per row.
std::vector<std::pair<std::uint64_t, std::uint64_t>> read_pair_csv(const std::string& path);
void write_pair_csv(const std::string& path,
                    const std::vector<std::pair<std::uint64_t, std::uint64_t>>& pairs);

}  // namespace recallforge
