#include "recallforge/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

#include "recallforge/common.hpp"
#include "recallforge/xxhash64.hpp"

namespace recallforge {

std::size_t IdPairHash::operator()(const IdPair& p) const {
  unsigned char buf[16];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((p.first >> (8 * i)) & 0xff);
  for (int i = 0; i < 8; ++i) buf[8 + i] = static_cast<unsigned char>((p.second >> (8 * i)) & 0xff);
  return static_cast<std::size_t>(xxhash64(buf, sizeof(buf), 0x9e3779b97f4a7c15ULL));
}

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double signed_area(const std::vector<Point>& ring) {
  double acc = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

Point edge_intersection(const Point& p, const Point& q, const Point& a, const Point& b) {
  const double dqx = q.x - p.x, dqy = q.y - p.y;
  const double dex = b.x - a.x, dey = b.y - a.y;
  const double denom = dex * dqy - dey * dqx;
  const double t = (dex * (a.y - p.y) - dey * (a.x - p.x)) / denom;
  if (!std::isfinite(t)) {
    // The edge runs along the clip line within rounding, so the crossing is
    // ill-defined; either endpoint is on the boundary, keep the nearer one.
    return std::abs(cross(a, b, p)) <= std::abs(cross(a, b, q)) ? p : q;
  }
  // A crossing reported by the side classification lies inside the segment;
  // clamping bounds the error when the division is ill-conditioned.
  const double tc = std::clamp(t, 0.0, 1.0);
  return {p.x + tc * dqx, p.y + tc * dqy};
}

// Lexicographic ring comparison used to pick a canonical (subject, clip)
// assignment, making the clipped area bit-identical under argument swap.
bool ring_less(const std::vector<Point>& a, const std::vector<Point>& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].x != b[i].x) return a[i].x < b[i].x;
    if (a[i].y != b[i].y) return a[i].y < b[i].y;
  }
  return false;
}

}  // namespace

std::vector<Point> clip_convex(const std::vector<Point>& subject,
                               const std::vector<Point>& clip) {
  if (subject.size() < 3 || clip.size() < 3) return {};
  std::vector<Point> ccw_clip = clip;
  if (signed_area(ccw_clip) < 0.0) std::reverse(ccw_clip.begin(), ccw_clip.end());

  std::vector<Point> output = subject;
  std::vector<Point> input;
  const std::size_t m = ccw_clip.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Point& a = ccw_clip[e];
    const Point& b = ccw_clip[(e + 1) % m];
    input.swap(output);
    output.clear();
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point& prev = input[(i + n - 1) % n];
      const Point& cur = input[i];
      const bool prev_in = cross(a, b, prev) >= 0.0;
      const bool cur_in = cross(a, b, cur) >= 0.0;
      if (cur_in) {
        if (!prev_in) output.push_back(edge_intersection(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(edge_intersection(prev, cur, a, b));
      }
    }
  }
  return output;
}

bool is_match(const Geometry& s, const Geometry& t, const MatchPredicateConfig& cfg) {
  if (!(cfg.min_overlap > 0.0 && cfg.min_overlap <= 1.0)) {
    throw std::domain_error("is_match: min_overlap out of (0,1]");
  }
  if (cfg.mode == PredicateMode::PolygonOverlapRatio) {
    if (!ring_is_convex(s.ring) || !ring_is_convex(t.ring)) {
      RF_WARN_ONCE("non-convex ring in polygon overlap mode, using MBR overlap instead");
    } else {
      const double area_s = ring_area(s.ring);
      const double area_t = ring_area(t.ring);
      const double smaller = std::min(area_s, area_t);
      if (smaller <= 0.0) return false;
      const bool s_first = ring_less(s.ring, t.ring);
      const std::vector<Point>& subject = s_first ? s.ring : t.ring;
      const std::vector<Point>& clipper = s_first ? t.ring : s.ring;
      const std::vector<Point> inter = clip_convex(subject, clipper);
      const double inter_area = inter.size() < 3 ? 0.0 : std::abs(signed_area(inter));
      return inter_area / smaller >= cfg.min_overlap;
    }
  }
  const Mbr sm = compute_mbr(s);
  const Mbr tm = compute_mbr(t);
  const double smaller = std::min(sm.area(), tm.area());
  if (smaller <= 0.0) return false;
  return sm.intersection_area(tm) / smaller >= cfg.min_overlap;
}

double evaluate_recall(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                       double tau) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("evaluate_recall: scores and labels differ in length");
  }
  std::size_t positives = 0, retained = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    ++positives;
    if (scores[i] >= tau) ++retained;
  }
  if (positives == 0) throw std::invalid_argument("evaluate_recall: no positive labels");
  return static_cast<double>(retained) / static_cast<double>(positives);
}

VerificationOutcome verify_with_budget(const std::vector<IdPair>& pairs_at_tau,
                                       const std::vector<Geometry>& sources,
                                       const std::vector<Geometry>& targets,
                                       const PairSet& ground_truth,
                                       const MatchPredicateConfig& cfg, std::size_t budget,
                                       CostCounters* counters) {
  std::unordered_map<std::uint64_t, const Geometry*> src_by_id, tgt_by_id;
  src_by_id.reserve(sources.size());
  tgt_by_id.reserve(targets.size());
  for (const Geometry& g : sources) src_by_id.emplace(g.id, &g);
  for (const Geometry& g : targets) tgt_by_id.emplace(g.id, &g);

  VerificationOutcome out;
  out.budget = budget;
  std::size_t confirmed_truth = 0;
  for (const IdPair& p : pairs_at_tau) {
    const auto s_it = src_by_id.find(p.first);
    const auto t_it = tgt_by_id.find(p.second);
    if (s_it == src_by_id.end() || t_it == tgt_by_id.end()) {
      throw std::invalid_argument("verify_with_budget: pair references an unknown geometry id");
    }
    ++out.reviewed_count;
    if (counters != nullptr) ++counters->c_geom;
    if (is_match(*s_it->second, *t_it->second, cfg)) {
      out.retained_pairs.push_back(p);
      if (ground_truth.count(p) != 0) ++confirmed_truth;
    }
  }
  out.achieved_recall = ground_truth.empty()
                            ? 0.0
                            : static_cast<double>(confirmed_truth) /
                                  static_cast<double>(ground_truth.size());
  out.overrun = out.reviewed_count > budget;
  return out;
}

}  // namespace recallforge
