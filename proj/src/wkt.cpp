#include "recallforge/wkt.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "recallforge/common.hpp"

namespace recallforge {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Splits an `id,wkt` row. The wkt field may be double-quoted since it
// contains commas; quotes inside are doubled per RFC 4180.
bool split_row(const std::string& line, std::string& id_field, std::string& wkt_field) {
  const std::size_t comma = line.find(',');
  if (comma == std::string::npos) return false;
  id_field = trim(line.substr(0, comma));
  std::string rest = trim(line.substr(comma + 1));
  if (!rest.empty() && rest.front() == '"') {
    std::string out;
    out.reserve(rest.size());
    bool closed = false;
    for (std::size_t i = 1; i < rest.size(); ++i) {
      if (rest[i] == '"') {
        if (i + 1 < rest.size() && rest[i + 1] == '"') {
          out.push_back('"');
          ++i;
        } else {
          closed = true;
          break;
        }
      } else {
        out.push_back(rest[i]);
      }
    }
    if (!closed) return false;
    wkt_field = out;
  } else {
    wkt_field = rest;
  }
  return true;
}

double parse_double(const char*& p, const char* end, const std::string& ctx) {
  while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
  double v = 0.0;
  const auto res = std::from_chars(p, end, v);
  if (res.ec != std::errc{}) throw InputError("bad coordinate in " + ctx);
  p = res.ptr;
  return v;
}

}  // namespace

Geometry parse_wkt_polygon(std::uint64_t id, const std::string& wkt) {
  const std::string s = trim(wkt);
  std::size_t pos = 0;
  auto expect_word = [&](const char* w) {
    std::size_t n = std::char_traits<char>::length(w);
    if (s.compare(pos, n, w) != 0) throw InputError("expected POLYGON wkt, got: " + s.substr(0, 24));
    pos += n;
  };
  expect_word("POLYGON");
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (pos >= s.size() || s[pos] != '(') throw InputError("malformed POLYGON wkt");
  ++pos;
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (pos >= s.size() || s[pos] != '(') throw InputError("malformed POLYGON wkt");
  ++pos;

  Geometry g;
  g.id = id;
  const char* p = s.data() + pos;
  const char* end = s.data() + s.size();
  for (;;) {
    const double x = parse_double(p, end, "wkt polygon " + std::to_string(id));
    const double y = parse_double(p, end, "wkt polygon " + std::to_string(id));
    g.ring.push_back({x, y});
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (p < end && *p == ',') {
      ++p;
      continue;
    }
    break;
  }
  if (p >= end || *p != ')') throw InputError("unterminated ring in POLYGON wkt");
  // Inner rings, if present, are ignored.
  if (g.ring.size() >= 2) {
    const Point& first = g.ring.front();
    const Point& last = g.ring.back();
    if (first.x == last.x && first.y == last.y) g.ring.pop_back();
  }
  validate_geometry(g);
  return g;
}

std::string format_wkt_polygon(const Geometry& g) {
  char buf[64];
  std::string out = "POLYGON ((";
  auto append_pt = [&](const Point& p) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g", p.x, p.y);
    out += buf;
  };
  for (const Point& p : g.ring) {
    append_pt(p);
    out += ", ";
  }
  append_pt(g.ring.front());  // close the ring
  out += "))";
  return out;
}

std::vector<Geometry> read_geometry_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open geometry csv: " + path);
  std::string line;
  if (!std::getline(is, line)) throw InputError("empty geometry csv: " + path);
  std::vector<Geometry> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::string id_field, wkt_field;
    if (!split_row(line, id_field, wkt_field)) {
      throw InputError(path + ":" + std::to_string(line_no) + ": malformed row");
    }
    std::uint64_t id = 0;
    const auto res = std::from_chars(id_field.data(), id_field.data() + id_field.size(), id);
    if (res.ec != std::errc{}) {
      throw InputError(path + ":" + std::to_string(line_no) + ": bad id '" + id_field + "'");
    }
    out.push_back(parse_wkt_polygon(id, wkt_field));
  }
  return out;
}

void write_geometry_csv(const std::string& path, const std::vector<Geometry>& geoms) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write geometry csv: " + path);
  os << "id,wkt\n";
  for (const Geometry& g : geoms) {
    os << g.id << ",\"" << format_wkt_polygon(g) << "\"\n";
  }
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> read_pair_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open pair csv: " + path);
  std::string line;
  if (!std::getline(is, line)) throw InputError("empty pair csv: " + path);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    const std::size_t comma = row.find(',');
    if (comma == std::string::npos) {
      throw InputError(path + ":" + std::to_string(line_no) + ": malformed pair row");
    }
    std::uint64_t a = 0, b = 0;
    auto r1 = std::from_chars(row.data(), row.data() + comma, a);
    auto r2 = std::from_chars(row.data() + comma + 1, row.data() + row.size(), b);
    if (r1.ec != std::errc{} || r2.ec != std::errc{}) {
      throw InputError(path + ":" + std::to_string(line_no) + ": bad pair ids");
    }
    out.emplace_back(a, b);
  }
  return out;
}

void write_pair_csv(const std::string& path,
                    const std::vector<std::pair<std::uint64_t, std::uint64_t>>& pairs) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write pair csv: " + path);
  os << "src_id,tgt_id\n";
  for (const auto& [a, b] : pairs) os << a << ',' << b << '\n';
}

}  // namespace recallforge
