#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <vector>

#include "htprior/common.hpp"
#include "htprior/tensor.hpp"

namespace htprior {

// (rho, theta) discretization. Offsets are measured from the image center in
// pixels, so rho is signed and spans [-d/2, d/2] with d the image diagonal.
struct HoughGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t n_rho = 0;
  std::size_t n_theta = 0;
  std::vector<double> theta_samples;
  std::vector<double> rho_centers;
  double diagonal = 0.0;

  double rho_step() const { return diagonal / static_cast<double>(n_rho - 1); }
  double theta_step() const { return kPi / static_cast<double>(n_theta); }
  double center_x() const { return (static_cast<double>(width) - 1.0) / 2.0; }
  double center_y() const { return (static_cast<double>(height) - 1.0) / 2.0; }

  // Nearest rho bin, exact halfway ties go to the lower index. The arithmetic
  // guess is refined against the neighbouring centers so that ties are
  // decided on the same distances a brute-force scan would compare.
  std::size_t nearest_rho_bin(double rho) const {
    const double u = (rho - rho_centers.front()) / rho_step();
    const double g = std::ceil(u - 0.5);
    std::size_t r = g <= 0.0 ? 0 : g >= static_cast<double>(n_rho - 1) ? n_rho - 1 : static_cast<std::size_t>(g);
    const auto dist = [&](std::size_t i) { return std::abs(rho - rho_centers[i]); };
    while (r > 0 && dist(r - 1) <= dist(r)) --r;
    while (r + 1 < n_rho && dist(r + 1) < dist(r)) ++r;
    return r;
  }

  bool operator==(const HoughGrid&) const = default;
};

inline HoughGrid build_grid(std::size_t width, std::size_t height, std::size_t n_rho = 183,
                            std::size_t n_theta = 60) {
  if (width < 2 || height < 2) throw ConfigError("hough grid needs an image of at least 2x2 pixels");
  if (n_rho < 3) throw ConfigError("hough grid needs n_rho >= 3, got " + std::to_string(n_rho));
  if (n_theta < 2) throw ConfigError("hough grid needs n_theta >= 2, got " + std::to_string(n_theta));

  HoughGrid g;
  g.width = width;
  g.height = height;
  g.n_rho = n_rho;
  g.n_theta = n_theta;
  g.diagonal = std::hypot(static_cast<double>(width), static_cast<double>(height));
  g.theta_samples.resize(n_theta);
  for (std::size_t t = 0; t < n_theta; ++t)
    g.theta_samples[t] = kPi * static_cast<double>(t) / static_cast<double>(n_theta);
  g.rho_centers.resize(n_rho);
  const double step = g.rho_step();
  for (std::size_t r = 0; r < n_rho; ++r)
    g.rho_centers[r] = -g.diagonal / 2.0 + step * static_cast<double>(r);
  // exact symmetry about zero
  for (std::size_t r = 0; r < n_rho / 2; ++r) {
    const double m = 0.5 * (g.rho_centers[n_rho - 1 - r] - g.rho_centers[r]);
    g.rho_centers[r] = -m;
    g.rho_centers[n_rho - 1 - r] = m;
  }
  if (n_rho % 2 == 1) g.rho_centers[n_rho / 2] = 0.0;
  return g;
}

// Sparse pixel <-> bin correspondence. Every (pixel, theta) pair votes into
// exactly one rho bin; the inverse index lists voters per bin in CSR form.
class VoteMask {
 public:
  explicit VoteMask(HoughGrid grid) : grid_(std::move(grid)) {
    const std::size_t n_pix = grid_.width * grid_.height;
    const std::size_t nt = grid_.n_theta;
    std::vector<double> cos_t(nt), sin_t(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      cos_t[t] = std::cos(grid_.theta_samples[t]);
      sin_t[t] = std::sin(grid_.theta_samples[t]);
    }
    bin_of_.resize(n_pix * nt);
    for (std::size_t y = 0; y < grid_.height; ++y) {
      const double yc = static_cast<double>(y) - grid_.center_y();
      for (std::size_t x = 0; x < grid_.width; ++x) {
        const double xc = static_cast<double>(x) - grid_.center_x();
        const std::size_t p = y * grid_.width + x;
        for (std::size_t t = 0; t < nt; ++t) {
          const double rho = xc * cos_t[t] + yc * sin_t[t];
          bin_of_[p * nt + t] = static_cast<std::uint32_t>(grid_.nearest_rho_bin(rho));
        }
      }
    }
    build_inverse();
  }

  const HoughGrid& grid() const { return grid_; }
  std::size_t pixels() const { return grid_.width * grid_.height; }
  std::size_t bins() const { return grid_.n_rho * grid_.n_theta; }

  std::uint32_t bin_of(std::size_t x, std::size_t y, std::size_t t) const {
    return bin_of_[(y * grid_.width + x) * grid_.n_theta + t];
  }
  std::span<const std::uint32_t> bin_table() const { return bin_of_; }

  // Pixel indices (y * W + x) voting into bin (r, t), in increasing order.
  std::span<const std::uint32_t> voters(std::size_t r, std::size_t t) const {
    const std::size_t b = r * grid_.n_theta + t;
    return std::span<const std::uint32_t>(voters_).subspan(offsets_[b], offsets_[b + 1] - offsets_[b]);
  }
  std::span<const std::uint32_t> voter_offsets() const { return offsets_; }
  std::span<const std::uint32_t> voter_list() const { return voters_; }

  std::size_t total_votes() const { return voters_.size(); }

  // One "x y theta_index rho_bin" line per vote.
  void dump(std::ostream& os) const {
    for (std::size_t y = 0; y < grid_.height; ++y)
      for (std::size_t x = 0; x < grid_.width; ++x)
        for (std::size_t t = 0; t < grid_.n_theta; ++t)
          os << x << ' ' << y << ' ' << t << ' ' << bin_of(x, y, t) << '\n';
  }

 private:
  void build_inverse() {
    const std::size_t nt = grid_.n_theta;
    offsets_.assign(bins() + 1, 0);
    for (std::size_t p = 0; p < pixels(); ++p)
      for (std::size_t t = 0; t < nt; ++t) ++offsets_[bin_of_[p * nt + t] * nt + t + 1];
    for (std::size_t b = 0; b < bins(); ++b) offsets_[b + 1] += offsets_[b];
    voters_.resize(offsets_.back());
    std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t p = 0; p < pixels(); ++p)
      for (std::size_t t = 0; t < nt; ++t)
        voters_[fill[bin_of_[p * nt + t] * nt + t]++] = static_cast<std::uint32_t>(p);
  }

  HoughGrid grid_;
  std::vector<std::uint32_t> bin_of_;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint32_t> voters_;
};

inline std::shared_ptr<const VoteMask> build_vote_mask(const HoughGrid& grid) {
  return std::make_shared<const VoteMask>(grid);
}

namespace detail {

inline void check_image(const Shape& s, const HoughGrid& g, const char* what) {
  if (s.rank() != 3 || s[0] != g.height || s[1] != g.width) {
    throw ConfigError(std::string(what) + ": expected [" + std::to_string(g.height) + "," +
                      std::to_string(g.width) + ",C] featuremap, got " + s.str());
  }
}

inline void check_hough(const Shape& s, const HoughGrid& g, const char* what) {
  if (s.rank() != 3 || s[0] != g.n_rho || s[1] != g.n_theta) {
    throw ConfigError(std::string(what) + ": expected [" + std::to_string(g.n_rho) + "," +
                      std::to_string(g.n_theta) + ",C] hough map, got " + s.str());
  }
}

// out(bin, c) = scale * sum over voters of in(voter, c)
//
// Sparse inputs are scattered from their nonzero pixels instead. Voters are
// stored in increasing pixel order and adding zeros is exact, so both paths
// produce identical sums.
template <typename T>
void gather_bins(const VoteMask& mask, std::span<const T> in, std::span<T> out, std::size_t channels,
                 double scale) {
  const auto offsets = mask.voter_offsets();
  const auto voters = mask.voter_list();
  const T s = static_cast<T>(scale);

  std::vector<std::uint32_t> active;
  for (std::size_t p = 0; p < mask.pixels(); ++p) {
    const T* src = in.data() + p * channels;
    for (std::size_t c = 0; c < channels; ++c)
      if (src[c] != T{0}) {
        active.push_back(static_cast<std::uint32_t>(p));
        break;
      }
  }
  if (active.size() * 4 < mask.pixels()) {
    std::fill(out.begin(), out.end(), T{0});
    const auto table = mask.bin_table();
    const std::size_t nt = mask.grid().n_theta;
    for (std::uint32_t p : active) {
      const T* src = in.data() + static_cast<std::size_t>(p) * channels;
      for (std::size_t t = 0; t < nt; ++t) {
        T* dst = out.data() + (static_cast<std::size_t>(table[p * nt + t]) * nt + t) * channels;
        for (std::size_t c = 0; c < channels; ++c) dst[c] += src[c];
      }
    }
    for (auto& v : out) v *= s;
    return;
  }

  parallel_for(mask.bins(), 512, [&](std::size_t b0, std::size_t b1) {
    if (channels == 1) {
      for (std::size_t b = b0; b < b1; ++b) {
        T acc{0};
        for (std::uint32_t i = offsets[b]; i < offsets[b + 1]; ++i) acc += in[voters[i]];
        out[b] = acc * s;
      }
      return;
    }
    std::vector<T> acc(channels);
    for (std::size_t b = b0; b < b1; ++b) {
      std::fill(acc.begin(), acc.end(), T{0});
      for (std::uint32_t i = offsets[b]; i < offsets[b + 1]; ++i) {
        const T* src = in.data() + static_cast<std::size_t>(voters[i]) * channels;
        for (std::size_t c = 0; c < channels; ++c) acc[c] += src[c];
      }
      for (std::size_t c = 0; c < channels; ++c) out[b * channels + c] = acc[c] * s;
    }
  });
}

// out(pixel, c) = scale * sum over theta of in(bin_of(pixel, theta), theta, c)
template <typename T>
void gather_pixels(const VoteMask& mask, std::span<const T> in, std::span<T> out, std::size_t channels,
                   double scale) {
  const auto table = mask.bin_table();
  const std::size_t nt = mask.grid().n_theta;
  const T s = static_cast<T>(scale);
  parallel_for(mask.pixels(), 256, [&](std::size_t p0, std::size_t p1) {
    if (channels == 1) {
      for (std::size_t p = p0; p < p1; ++p) {
        T acc{0};
        const std::uint32_t* bins = table.data() + p * nt;
        for (std::size_t t = 0; t < nt; ++t) acc += in[static_cast<std::size_t>(bins[t]) * nt + t];
        out[p] = acc * s;
      }
      return;
    }
    std::vector<T> acc(channels);
    for (std::size_t p = p0; p < p1; ++p) {
      std::fill(acc.begin(), acc.end(), T{0});
      for (std::size_t t = 0; t < nt; ++t) {
        const T* src = in.data() + (static_cast<std::size_t>(table[p * nt + t]) * nt + t) * channels;
        for (std::size_t c = 0; c < channels; ++c) acc[c] += src[c];
      }
      for (std::size_t c = 0; c < channels; ++c) out[p * channels + c] = acc[c] * s;
    }
  });
}

}  // namespace detail

// HT(r, t, c) = (1/W) * sum of F over the pixels voting into (r, t).
template <typename T>
BasicTensor<T> ht_forward(const BasicTensor<T>& F, const VoteMask& mask) {
  const auto& g = mask.grid();
  detail::check_image(F.shape(), g, "ht_forward");
  const std::size_t c = F.dim(2);
  BasicTensor<T> out(Shape{g.n_rho, g.n_theta, c});
  detail::gather_bins<T>(mask, F.data(), out.data(), c, 1.0 / static_cast<double>(g.width));
  return out;
}

// IHT(x, y, c) = (1/n_theta) * sum over theta of H(bin_of(x, y, theta), theta, c).
template <typename T>
BasicTensor<T> iht_forward(const BasicTensor<T>& H, const VoteMask& mask) {
  const auto& g = mask.grid();
  detail::check_hough(H.shape(), g, "iht_forward");
  const std::size_t c = H.dim(2);
  BasicTensor<T> out(Shape{g.height, g.width, c});
  detail::gather_pixels<T>(mask, H.data(), out.data(), c, 1.0 / static_cast<double>(g.n_theta));
  return out;
}

// Adjoint of ht_forward: the unnormalized backprojection, scaled by the
// forward 1/W.
template <typename T>
BasicTensor<T> ht_backward(const BasicTensor<T>& grad_out, const VoteMask& mask) {
  const auto& g = mask.grid();
  detail::check_hough(grad_out.shape(), g, "ht_backward");
  const std::size_t c = grad_out.dim(2);
  BasicTensor<T> out(Shape{g.height, g.width, c});
  detail::gather_pixels<T>(mask, grad_out.data(), out.data(), c, 1.0 / static_cast<double>(g.width));
  return out;
}

// Adjoint of iht_forward: scatter of grad/n_theta through the voter index.
template <typename T>
BasicTensor<T> iht_backward(const BasicTensor<T>& grad_out, const VoteMask& mask) {
  const auto& g = mask.grid();
  detail::check_image(grad_out.shape(), g, "iht_backward");
  const std::size_t c = grad_out.dim(2);
  BasicTensor<T> out(Shape{g.n_rho, g.n_theta, c});
  detail::gather_bins<T>(mask, grad_out.data(), out.data(), c, 1.0 / static_cast<double>(g.n_theta));
  return out;
}

// Reference transforms computed straight from the line equation, without a
// precomputed mask. The nearest offset is found by scanning every center.
namespace oracle {

inline std::size_t nearest_center(const HoughGrid& g, double rho) {
  std::size_t best = 0;
  double best_d = std::abs(rho - g.rho_centers[0]);
  for (std::size_t r = 1; r < g.n_rho; ++r) {
    const double d = std::abs(rho - g.rho_centers[r]);
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

inline std::size_t bin_for(const HoughGrid& g, std::size_t x, std::size_t y, std::size_t t) {
  const double xc = static_cast<double>(x) - (static_cast<double>(g.width) - 1.0) / 2.0;
  const double yc = static_cast<double>(y) - (static_cast<double>(g.height) - 1.0) / 2.0;
  const double theta = kPi * static_cast<double>(t) / static_cast<double>(g.n_theta);
  return nearest_center(g, xc * std::cos(theta) + yc * std::sin(theta));
}

}  // namespace oracle

template <typename T>
BasicTensor<T> naive_ht_oracle(const BasicTensor<T>& F, const HoughGrid& g) {
  detail::check_image(F.shape(), g, "naive_ht_oracle");
  const std::size_t C = F.dim(2);
  std::vector<double> acc(g.n_rho * g.n_theta * C, 0.0);
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x)
      for (std::size_t t = 0; t < g.n_theta; ++t) {
        const std::size_t r = oracle::bin_for(g, x, y, t);
        for (std::size_t c = 0; c < C; ++c) acc[(r * g.n_theta + t) * C + c] += F.at(y, x, c);
      }
  BasicTensor<T> out(Shape{g.n_rho, g.n_theta, C});
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i] / static_cast<double>(g.width));
  return out;
}

template <typename T>
BasicTensor<T> naive_iht_oracle(const BasicTensor<T>& H, const HoughGrid& g) {
  detail::check_hough(H.shape(), g, "naive_iht_oracle");
  const std::size_t C = H.dim(2);
  BasicTensor<T> out(Shape{g.height, g.width, C});
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t t = 0; t < g.n_theta; ++t) s += H.at(oracle::bin_for(g, x, y, t), t, c);
        out.at(y, x, c) = static_cast<T>(s / static_cast<double>(g.n_theta));
      }
  return out;
}

}  // namespace htprior
