#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "htprior/common.hpp"
#include "htprior/pgm.hpp"

namespace htprior {

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

// Generating primitive: a segment (p0, p1) or a circle (center, radius).
struct Primitive {
  enum class Kind { kLine, kCircle } kind = Kind::kLine;
  Point p0;
  Point p1;
  int radius = 0;
  bool operator==(const Primitive&) const = default;
};

struct LineCircleSample {
  std::size_t index = 0;
  Raster image;
  Raster target;  // line pixels only
  std::vector<Primitive> shapes;

  std::uint64_t content_hash() const {
    std::uint64_t h = fnv1a(image.pixels.data(), image.pixels.size());
    return fnv1a(target.pixels.data(), target.pixels.size(), h);
  }
};

struct DatasetSplits {
  std::vector<LineCircleSample> train;
  std::vector<LineCircleSample> val;
  std::vector<LineCircleSample> test;
};

struct DatasetOptions {
  std::size_t width = 100;
  std::size_t height = 100;
  std::size_t n_train = 744;
  std::size_t n_val = 256;
  std::size_t n_test = 500;
  int min_lines = 1;
  int max_lines = 5;
  int min_circles = 1;
  int max_circles = 5;
  int min_radius = 5;
  int max_radius = 45;
  double min_line_length = 20.0;
  // keep every circle fully inside the frame (centre drawn after the radius)
  bool circles_inside = true;
};

inline bool in_bounds(const Raster& r, long x, long y) {
  return x >= 0 && y >= 0 && x < static_cast<long>(r.width) && y < static_cast<long>(r.height);
}

// 8-connected integer line walk including both endpoints.
inline void render_line(Raster& r, Point p0, Point p1) {
  if (p0 == p1) throw ConfigError("render_line: degenerate segment");
  if (!in_bounds(r, p0.x, p0.y) || !in_bounds(r, p1.x, p1.y)) throw ConfigError("render_line: endpoint outside image");
  int x = p0.x, y = p0.y;
  const int dx = std::abs(p1.x - p0.x), sx = p0.x < p1.x ? 1 : -1;
  const int dy = -std::abs(p1.y - p0.y), sy = p0.y < p1.y ? 1 : -1;
  int err = dx + dy;
  while (true) {
    r.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1;
    if (x == p1.x && y == p1.y) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
}

// Midpoint circle; pixels outside the raster are dropped.
inline void render_circle(Raster& r, Point c, int radius) {
  if (radius <= 0) throw ConfigError("render_circle: radius must be positive, got " + std::to_string(radius));
  if (!in_bounds(r, c.x, c.y)) throw ConfigError("render_circle: center outside image");
  auto plot = [&](long x, long y) {
    if (in_bounds(r, x, y)) r.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1;
  };
  int x = radius, y = 0, d = 1 - radius;
  while (x >= y) {
    plot(c.x + x, c.y + y);
    plot(c.x - x, c.y + y);
    plot(c.x + x, c.y - y);
    plot(c.x - x, c.y - y);
    plot(c.x + y, c.y + x);
    plot(c.x - y, c.y + x);
    plot(c.x + y, c.y - x);
    plot(c.x - y, c.y - x);
    ++y;
    if (d < 0) {
      d += 2 * y + 1;
    } else {
      --x;
      d += 2 * (y - x) + 1;
    }
  }
}

namespace detail {

inline LineCircleSample draw_sample(std::size_t index, std::uint64_t seed, std::uint32_t attempt,
                                    const DatasetOptions& opt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), attempt};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<int> n_lines(opt.min_lines, opt.max_lines);
  std::uniform_int_distribution<int> n_circles(opt.min_circles, opt.max_circles);
  std::uniform_int_distribution<int> xs(0, static_cast<int>(opt.width) - 1);
  std::uniform_int_distribution<int> ys(0, static_cast<int>(opt.height) - 1);
  std::uniform_int_distribution<int> radii(opt.min_radius, opt.max_radius);

  LineCircleSample s;
  s.index = index;
  s.image = Raster(opt.width, opt.height);
  s.target = Raster(opt.width, opt.height);
  const int nl = n_lines(rng);
  const int nc = n_circles(rng);
  for (int i = 0; i < nl; ++i) {
    Point a, b;
    do {
      a = {xs(rng), ys(rng)};
      b = {xs(rng), ys(rng)};
    } while (std::hypot(b.x - a.x, b.y - a.y) < opt.min_line_length);
    render_line(s.image, a, b);
    render_line(s.target, a, b);
    s.shapes.push_back({Primitive::Kind::kLine, a, b, 0});
  }
  for (int i = 0; i < nc; ++i) {
    Point c;
    int rad;
    if (opt.circles_inside) {
      rad = std::min({radii(rng), (static_cast<int>(opt.width) - 1) / 2, (static_cast<int>(opt.height) - 1) / 2});
      c = {std::uniform_int_distribution<int>(rad, static_cast<int>(opt.width) - 1 - rad)(rng),
           std::uniform_int_distribution<int>(rad, static_cast<int>(opt.height) - 1 - rad)(rng)};
    } else {
      c = {xs(rng), ys(rng)};
      rad = radii(rng);
    }
    render_circle(s.image, c, rad);
    s.shapes.push_back({Primitive::Kind::kCircle, c, {}, rad});
  }
  return s;
}

}  // namespace detail

// Deterministic Line-Circle dataset. Sample i draws from its own stream
// derived from (seed, i); duplicates are redrawn from the next attempt.
inline DatasetSplits generate_dataset(std::uint64_t seed, const DatasetOptions& opt = {}) {
  const std::size_t total = opt.n_train + opt.n_val + opt.n_test;
  std::vector<LineCircleSample> all(total);
  parallel_for(total, 64, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) all[i] = detail::draw_sample(i, seed, 0, opt);
  });
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < total; ++i) {
    std::uint32_t attempt = 0;
    while (!seen.insert(all[i].content_hash()).second) all[i] = detail::draw_sample(i, seed, ++attempt, opt);
  }
  DatasetSplits out;
  out.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + opt.n_train));
  out.val.assign(std::make_move_iterator(all.begin() + opt.n_train),
                 std::make_move_iterator(all.begin() + opt.n_train + opt.n_val));
  out.test.assign(std::make_move_iterator(all.begin() + opt.n_train + opt.n_val), std::make_move_iterator(all.end()));
  return out;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string sample_stem(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", index);
  return buf;
}

inline std::string format_shapes(const std::vector<Primitive>& shapes) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& p = shapes[i];
    if (i) os << ' ';
    if (p.kind == Primitive::Kind::kLine)
      os << "L:" << p.p0.x << ',' << p.p0.y << ',' << p.p1.x << ',' << p.p1.y;
    else
      os << "C:" << p.p0.x << ',' << p.p0.y << ',' << p.radius;
  }
  return os.str();
}

inline std::vector<Primitive> parse_shapes(std::istream& in, const std::string& where) {
  std::vector<Primitive> out;
  std::string tok;
  while (in >> tok) {
    Primitive p;
    int a = 0, b = 0, c = 0, d = 0;
    if (std::sscanf(tok.c_str(), "L:%d,%d,%d,%d", &a, &b, &c, &d) == 4) {
      p = {Primitive::Kind::kLine, {a, b}, {c, d}, 0};
    } else if (std::sscanf(tok.c_str(), "C:%d,%d,%d", &a, &b, &c) == 3) {
      p = {Primitive::Kind::kCircle, {a, b}, {}, c};
    } else {
      throw IoError(where + ": bad shape token '" + tok + "'");
    }
    out.push_back(p);
  }
  return out;
}

inline constexpr const char* kManifestName = "manifest.txt";

// Writes NNNN_img.pgm / NNNN_gt.pgm per sample plus manifest.txt with
// "<index> <img> <gt> <hash> <shapes...>" rows.
inline void save_split(const std::filesystem::path& dir, const std::vector<LineCircleSample>& samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto manifest = dir / kManifestName;
  std::ofstream m(manifest);
  if (!m) throw IoError("cannot open " + manifest.string() + " for writing");
  m << "# line-circle manifest v1: index image target fnv1a64 shapes\n";
  for (const auto& s : samples) {
    const std::string stem = sample_stem(s.index);
    write_binary_pgm(dir / (stem + "_img.pgm"), s.image);
    write_binary_pgm(dir / (stem + "_gt.pgm"), s.target);
    m << s.index << ' ' << stem << "_img.pgm " << stem << "_gt.pgm " << hash_hex(s.content_hash()) << ' '
      << format_shapes(s.shapes) << '\n';
  }
  if (!m) throw IoError("write failed for " + manifest.string());
}

inline std::vector<LineCircleSample> load_split(const std::filesystem::path& dir) {
  const auto manifest = dir / kManifestName;
  std::ifstream m(manifest);
  if (!m) throw IoError("cannot open " + manifest.string());
  std::vector<LineCircleSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(m, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    LineCircleSample s;
    std::string img, gt, hash;
    if (!(is >> s.index >> img >> gt >> hash)) {
      throw IoError(manifest.string() + ":" + std::to_string(lineno) + ": malformed manifest row");
    }
    s.shapes = parse_shapes(is, manifest.string() + ":" + std::to_string(lineno));
    s.image = read_binary_pgm(dir / img);
    s.target = read_binary_pgm(dir / gt);
    if (hash_hex(s.content_hash()) != hash) {
      throw IoError((dir / img).string() + ": content hash mismatch with " + manifest.string());
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError(manifest.string() + ": no samples listed");
  return out;
}

// Order-sensitive digest over sample hashes; equal iff the splits match.
inline std::uint64_t manifest_hash(const std::vector<LineCircleSample>& samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : samples) {
    const std::uint64_t v = s.content_hash();
    h = fnv1a(&v, sizeof v, h);
  }
  return h;
}

}  // namespace htprior
