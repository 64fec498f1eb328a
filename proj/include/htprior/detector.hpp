#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "htprior/hough.hpp"
#include "htprior/pgm.hpp"

namespace htprior {

// Line x_c cos(theta) + y_c sin(theta) = rho in center-origin pixel coordinates.
struct LineParam {
  double rho = 0.0;
  double theta = 0.0;
};

struct Detection {
  LineParam line;
  std::size_t rho_bin = 0;
  std::size_t theta_bin = 0;
  double score = 0.0;
};

// Bin distance in theta, treating theta as circular mod pi. Crossing the
// wrap flips the sign of rho, so the rho bin is mirrored too.
inline void bin_distance(const HoughGrid& g, std::size_t r0, std::size_t t0, std::size_t r1, std::size_t t1,
                         std::size_t& d_rho, std::size_t& d_theta) {
  auto absdiff = [](std::size_t a, std::size_t b) { return a > b ? a - b : b - a; };
  const std::size_t direct_t = absdiff(t0, t1);
  const std::size_t wrap_t = g.n_theta - direct_t;
  if (direct_t <= wrap_t) {
    d_rho = absdiff(r0, r1);
    d_theta = direct_t;
  } else {
    d_rho = absdiff(r0, g.n_rho - 1 - r1);
    d_theta = wrap_t;
  }
}

// Nearest grid bin to a continuous line, wrapping theta into [0, pi).
inline void nearest_bin(const HoughGrid& g, LineParam p, std::size_t& r, std::size_t& t) {
  double theta = std::fmod(p.theta, kPi);
  double rho = p.rho;
  if (theta < 0) theta += kPi;
  long ti = std::lround(theta / g.theta_step());
  if (ti >= static_cast<long>(g.n_theta)) {
    ti -= static_cast<long>(g.n_theta);
    rho = -rho;
  }
  t = static_cast<std::size_t>(ti);
  r = g.nearest_rho_bin(rho);
}

// Top-k Hough peaks of a binary image with greedy non-maximum suppression.
inline std::vector<Detection> detect_lines(const Raster& image, const VoteMask& mask, std::size_t k,
                                           std::size_t nms_rho = 2, std::size_t nms_theta = 2) {
  if (k < 1) throw ConfigError("detect_lines: k must be at least 1");
  const HoughGrid& g = mask.grid();
  const Tensor h = ht_forward(to_tensor<float>(image), mask);
  std::vector<std::size_t> order(h.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h[a] > h[b]; });

  std::vector<Detection> out;
  for (std::size_t idx : order) {
    if (out.size() == k) break;
    const std::size_t r = idx / g.n_theta, t = idx % g.n_theta;
    bool suppressed = false;
    for (const auto& d : out) {
      std::size_t dr, dt;
      bin_distance(g, r, t, d.rho_bin, d.theta_bin, dr, dt);
      if (dr <= nms_rho && dt <= nms_theta) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    out.push_back({{g.rho_centers[r], g.theta_samples[t]}, r, t, static_cast<double>(h[idx])});
  }
  return out;
}

// Sets the nearest pixel of the line at every integer position along its
// dominant axis, so each column (or row) it crosses gets exactly one pixel.
inline Raster rasterize_line(LineParam p, const HoughGrid& g) {
  if (std::abs(p.rho) > g.diagonal / 2.0) throw ConfigError("rasterize_line: |rho| exceeds half the diagonal");
  Raster r(g.width, g.height);
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  const bool along_x = std::abs(s) >= std::abs(c);
  const std::size_t n = along_x ? g.width : g.height;
  for (std::size_t i = 0; i < n; ++i) {
    long px, py;
    if (along_x) {
      px = static_cast<long>(i);
      py = static_cast<long>(std::floor((p.rho - (px - g.center_x()) * c) / s + g.center_y() + 0.5));
    } else {
      py = static_cast<long>(i);
      px = static_cast<long>(std::floor((p.rho - (py - g.center_y()) * s) / c + g.center_x() + 0.5));
    }
    if (px < 0 || py < 0 || px >= static_cast<long>(g.width) || py >= static_cast<long>(g.height)) continue;
    r.at(static_cast<std::size_t>(px), static_cast<std::size_t>(py)) = 1;
  }
  return r;
}

}  // namespace htprior
