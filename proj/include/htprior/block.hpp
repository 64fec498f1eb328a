#pragma once

#include <cmath>
#include <deque>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "htprior/autograd.hpp"
#include "htprior/hough.hpp"

namespace htprior {

// Named parameters of one model. References stay valid while the set lives.
template <typename T>
class ParamSet {
 public:
  Parameter<T>& add(std::string name, BasicTensor<T> value) {
    for (const auto& p : params_)
      if (p.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
    params_.emplace_back(std::move(name), std::move(value));
    return params_.back();
  }

  Parameter<T>& get(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p;
    throw ConfigError("unknown parameter '" + name + "'");
  }
  const Parameter<T>& get(const std::string& name) const { return const_cast<ParamSet*>(this)->get(name); }

  bool contains(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return true;
    return false;
  }

  std::vector<Parameter<T>*> all() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }
  const std::deque<Parameter<T>>& items() const { return params_; }
  std::deque<Parameter<T>>& items() { return params_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) {
      auto& q = out.add(p.name, p.value.template cast<U>());
      q.adam_m.assign(p.adam_m.begin(), p.adam_m.end());
      q.adam_v.assign(p.adam_v.begin(), p.adam_v.end());
    }
    return out;
  }

 private:
  std::deque<Parameter<T>> params_;
};

// Binds a parameter into a pass, as a gradient leaf when training and as a
// constant otherwise.
template <typename T>
Var<T> bind(Tape<T>& tape, Parameter<T>& p, bool train) {
  return train ? tape.param(p) : tape.constant(p.value);
}

// Hough-domain filtering variants of the HT-IHT block.
enum class BlockVariant { kNoConv = 0, kPlain1D = 1, kLaplacian1D = 2, kFull = 3, kSpatial3x3 = 4 };

inline const char* to_string(BlockVariant v) {
  switch (v) {
    case BlockVariant::kNoConv: return "no_conv";
    case BlockVariant::kPlain1D: return "plain_1d";
    case BlockVariant::kLaplacian1D: return "laplacian_1d";
    case BlockVariant::kFull: return "full";
    case BlockVariant::kSpatial3x3: return "spatial_3x3";
  }
  return "?";
}

struct BlockConfig {
  BlockVariant variant = BlockVariant::kFull;
  std::size_t support = 9;
  std::size_t channels_in = 4;
  std::size_t channels_mid = 4;
  std::size_t channels_out = 4;
  double sigma_low = 0.5;
  double sigma_high = 2.5;

  void validate() const {
    if (support % 2 == 0) throw ConfigError("block support must be odd, got " + std::to_string(support));
    if (channels_in == 0) throw ConfigError("block needs at least one input channel");
    if (variant == BlockVariant::kFull) {
      if (channels_mid == 0 || channels_out == 0) throw ConfigError("full block needs nonzero channel counts");
      if (channels_mid > channels_in) {
        throw ConfigError("full block must not widen before the inverse transform: channels_mid " +
                          std::to_string(channels_mid) + " > channels_in " + std::to_string(channels_in));
      }
    }
    if (!(sigma_low > 0.0) || sigma_high < sigma_low) {
      throw ConfigError("sigma range must satisfy 0 < low <= high");
    }
  }

  // Channels produced by the Hough branch.
  std::size_t branch_channels() const { return variant == BlockVariant::kFull ? channels_out : channels_in; }
  std::size_t output_channels() const { return channels_in + branch_channels(); }
};

struct LaplacianInit {
  double sigma = 1.0;
  std::size_t support = 9;
  std::vector<double> taps;
};

// Sign-inverted second derivative of a Gaussian sampled at integer offsets,
// truncated to the support, shifted to zero mean and scaled to unit L1 norm.
inline LaplacianInit laplacian_filter(double sigma, std::size_t support) {
  if (!(sigma > 0.0)) throw ConfigError("laplacian sigma must be positive");
  if (support % 2 == 0 || support < 3) throw ConfigError("laplacian support must be odd and >= 3");
  LaplacianInit f{sigma, support, std::vector<double>(support)};
  const long half = static_cast<long>(support / 2);
  const double s2 = sigma * sigma;
  double mean = 0.0;
  for (long i = -half; i <= half; ++i) {
    const double r2 = static_cast<double>(i * i);
    const double g = std::exp(-r2 / (2.0 * s2)) / (std::sqrt(2.0 * kPi) * sigma);
    f.taps[static_cast<std::size_t>(i + half)] = g * (1.0 / s2 - r2 / (s2 * s2));
  }
  for (double v : f.taps) mean += v;
  mean /= static_cast<double>(support);
  for (auto& v : f.taps) v -= mean;
  // symmetrize away rounding so mirrored taps are bitwise equal
  for (std::size_t i = 0; i < support / 2; ++i) {
    const double m = 0.5 * (f.taps[i] + f.taps[support - 1 - i]);
    f.taps[i] = f.taps[support - 1 - i] = m;
  }
  double l1 = 0.0;
  for (double v : f.taps) l1 += std::abs(v);
  for (auto& v : f.taps) v /= l1;
  return f;
}

template <typename Rng>
std::vector<LaplacianInit> init_laplacian_filters(std::size_t count, std::size_t support,
                                                  std::pair<double, double> sigma_range, Rng& rng) {
  if (!(sigma_range.first > 0.0) || sigma_range.second < sigma_range.first) {
    throw ConfigError("laplacian sigma range must satisfy 0 < low <= high");
  }
  std::uniform_real_distribution<double> dist(sigma_range.first, sigma_range.second);
  std::vector<LaplacianInit> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(laplacian_filter(dist(rng), support));
  return out;
}

// He-normal initialization for a kernel with the given fan-in.
template <typename T, typename Rng>
BasicTensor<T> he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

// Registers the block's Hough-domain filters under "<prefix>.".
template <typename T, typename Rng>
void add_block_params(ParamSet<T>& ps, const BlockConfig& cfg, const std::string& prefix, Rng& rng) {
  cfg.validate();
  const std::size_t k = cfg.support, c = cfg.channels_in;
  auto laplacian_kernel = [&] {
    BasicTensor<T> w(Shape{k, 1, c});
    const auto filters = init_laplacian_filters(c, k, {cfg.sigma_low, cfg.sigma_high}, rng);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t tap = 0; tap < k; ++tap) w[tap * c + ch] = static_cast<T>(filters[ch].taps[tap]);
    return w;
  };
  switch (cfg.variant) {
    case BlockVariant::kNoConv:
      break;
    case BlockVariant::kPlain1D:
      ps.add(prefix + ".rho", he_normal<T>(Shape{k, c, c}, k * c, rng));
      break;
    case BlockVariant::kLaplacian1D:
      ps.add(prefix + ".laplacian", laplacian_kernel());
      break;
    case BlockVariant::kFull:
      ps.add(prefix + ".laplacian", laplacian_kernel());
      ps.add(prefix + ".merge1", he_normal<T>(Shape{k, c, cfg.channels_mid}, k * c, rng));
      ps.add(prefix + ".merge2",
             he_normal<T>(Shape{k, cfg.channels_mid, cfg.channels_out}, k * cfg.channels_mid, rng));
      break;
    case BlockVariant::kSpatial3x3:
      for (int i = 1; i <= 3; ++i)
        ps.add(prefix + ".hough3x3_" + std::to_string(i), he_normal<T>(Shape{3, 3, c, c}, 9 * c, rng));
      break;
  }
}

// Residual HT-IHT block: concat(F, IHT(filters(HT(F)))).
template <typename T>
Var<T> block_forward(Tape<T>& tape, Var<T> F, const BlockConfig& cfg, const std::shared_ptr<const VoteMask>& mask,
                     ParamSet<T>& ps, const std::string& prefix, bool train) {
  if (F.shape().rank() != 3 || F.shape()[2] != cfg.channels_in) {
    throw ConfigError("block_forward: expected " + std::to_string(cfg.channels_in) + " channels, got " +
                      F.shape().str());
  }
  Var<T> h = ht(F, mask);
  auto p = [&](const std::string& n) { return bind(tape, ps.get(prefix + "." + n), train); };
  switch (cfg.variant) {
    case BlockVariant::kNoConv:
      break;
    case BlockVariant::kPlain1D:
      h = relu(conv1d_rho(h, p("rho"), Conv1dMode::kDense));
      break;
    case BlockVariant::kLaplacian1D:
      h = relu(conv1d_rho(h, p("laplacian"), Conv1dMode::kChannelwise));
      break;
    case BlockVariant::kFull:
      h = relu(conv1d_rho(h, p("laplacian"), Conv1dMode::kChannelwise));
      h = relu(conv1d_rho(h, p("merge1"), Conv1dMode::kDense));
      h = relu(conv1d_rho(h, p("merge2"), Conv1dMode::kDense));
      break;
    case BlockVariant::kSpatial3x3:
      for (int i = 1; i <= 3; ++i) h = relu(conv2d(h, p("hough3x3_" + std::to_string(i))));
      break;
  }
  return concat_channels(F, iht(h, mask));
}

}  // namespace htprior
