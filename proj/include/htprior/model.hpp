#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>

#include "htprior/autograd.hpp"
#include "htprior/block.hpp"
#include "htprior/hough.hpp"

namespace htprior {

enum class ModelKind { kLocal, kGlobal, kLocalGlobal, kBlock };

enum class InitScheme { kHe, kZero };

// Everything needed to rebuild a model's architecture.
struct ModelSpec {
  ModelKind kind = ModelKind::kLocalGlobal;
  BlockConfig block;  // kBlock only; block.channels_in doubles as stem width
  std::size_t width = 100;
  std::size_t height = 100;
  std::size_t n_rho = 183;
  std::size_t n_theta = 60;
  std::size_t global_support = 3;
  bool global_bias = false;  // optional bias after the global rho filter (global and local_global only)
  std::size_t head_channels = 0;  // kBlock: hidden 3x3 layer before the output, 0 = none
  InitScheme init = InitScheme::kHe;
  std::uint64_t seed = 0;

  // "local", "global", "local_global" or "block_variant_<0..4>"
  std::string name() const {
    switch (kind) {
      case ModelKind::kLocal: return "local";
      case ModelKind::kGlobal: return "global";
      case ModelKind::kLocalGlobal: return "local_global";
      case ModelKind::kBlock: return "block_variant_" + std::to_string(static_cast<int>(block.variant));
    }
    return "?";
  }

  bool uses_bce() const { return kind == ModelKind::kBlock; }
};

// Parses a model kind name into spec.kind (and spec.block.variant).
inline void set_model_kind(ModelSpec& spec, const std::string& name) {
  if (name == "local") {
    spec.kind = ModelKind::kLocal;
  } else if (name == "global") {
    spec.kind = ModelKind::kGlobal;
  } else if (name == "local_global") {
    spec.kind = ModelKind::kLocalGlobal;
  } else if (name.size() == 15 && name.starts_with("block_variant_") && name[14] >= '0' && name[14] <= '4') {
    spec.kind = ModelKind::kBlock;
    spec.block.variant = static_cast<BlockVariant>(name[14] - '0');
  } else {
    throw ConfigError("unknown model kind '" + name +
                      "' (expected local, global, local_global or block_variant_0..4)");
  }
}

// Line prediction network. The local/global models map a binary image to a
// line map trained with L2; block models end in a sigmoid and train with BCE.
//
//   local        relu(conv3x3(img) + b)
//   global       IHT(relu(conv_rho(HT(img))))
//   local_global img * global(img)
//   block        sigmoid(head(HT-IHT block(relu(stem(img)))))
template <typename T>
class Model {
 public:
  explicit Model(ModelSpec spec) : Model(spec, nullptr) { init_params(); }

  Model(ModelSpec spec, std::shared_ptr<const VoteMask> mask) : spec_(std::move(spec)), mask_(std::move(mask)) {
    if (spec_.kind == ModelKind::kBlock) spec_.block.validate();
    if (spec_.global_support % 2 == 0) throw ConfigError("global filter support must be odd");
    if (!mask_ && spec_.kind != ModelKind::kLocal)
      mask_ = build_vote_mask(build_grid(spec_.width, spec_.height, spec_.n_rho, spec_.n_theta));
  }

  const ModelSpec& spec() const { return spec_; }
  const std::shared_ptr<const VoteMask>& mask() const { return mask_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  std::vector<Parameter<T>*> parameters() { return params_.all(); }

  Var<T> forward(Tape<T>& tape, Var<T> img, bool train = true) {
    const Shape& s = img.shape();
    if (s.rank() != 3 || s[2] != 1) throw ConfigError("model input must be [H,W,1], got " + s.str());
    if (mask_ && (s[0] != mask_->grid().height || s[1] != mask_->grid().width)) {
      throw ConfigError("model built for " + std::to_string(mask_->grid().width) + "x" +
                        std::to_string(mask_->grid().height) + " inputs, got " + s.str());
    }
    auto p = [&](const char* n) { return bind(tape, params_.get(n), train); };
    switch (spec_.kind) {
      case ModelKind::kLocal:
        return relu(conv2d(img, p("local.weight"), p("local.bias")));
      case ModelKind::kGlobal:
        return global_branch(tape, img, train);
      case ModelKind::kLocalGlobal:
        return mul(global_branch(tape, img, train), img);
      case ModelKind::kBlock: {
        Var<T> f = relu(conv2d(img, p("stem.weight"), p("stem.bias")));
        f = block_forward(tape, f, spec_.block, mask_, params_, "block", train);
        if (spec_.head_channels > 0) f = relu(conv2d(f, p("hidden.weight"), p("hidden.bias")));
        return sigmoid(conv2d(f, p("head.weight"), p("head.bias")));
      }
    }
    throw ConfigError("unreachable model kind");
  }

  Var<T> loss(Var<T> pred, Var<T> target) const {
    return spec_.uses_bce() ? bce_loss(pred, target) : l2_loss(pred, target);
  }

  // One forward pass without gradient bookkeeping.
  BasicTensor<T> predict(const BasicTensor<T>& img) {
    Tape<T> tape;
    return forward(tape, tape.constant(img), false).value();
  }

  template <typename U>
  Model<U> cast() const {
    Model<U> out(spec_, mask_);
    out.params() = params_.template cast<U>();
    return out;
  }

 private:
  Var<T> global_branch(Tape<T>& tape, Var<T> img, bool train) {
    Var<T> h = ht(img, mask_);
    h = conv1d_rho(h, bind(tape, params_.get("global.rho"), train), Conv1dMode::kDense);
    if (spec_.global_bias) h = add_channel_bias(h, bind(tape, params_.get("global.bias"), train));
    h = relu(h);
    return iht(h, mask_);
  }

  void init_params() {
    std::mt19937_64 rng(spec_.seed);
    const bool zero = spec_.init == InitScheme::kZero;
    auto conv = [&](const std::string& name, std::size_t cin, std::size_t cout) {
      BasicTensor<T> w = he_normal<T>(Shape{3, 3, cin, cout}, 9 * cin, rng);
      if (zero) w = BasicTensor<T>(w.shape());
      params_.add(name + ".weight", std::move(w));
      params_.add(name + ".bias", BasicTensor<T>(Shape{cout}));
    };
    switch (spec_.kind) {
      case ModelKind::kLocal:
        conv("local", 1, 1);
        break;
      case ModelKind::kGlobal:
      case ModelKind::kLocalGlobal: {
        const auto f = laplacian_filter(0.5 * (spec_.block.sigma_low + spec_.block.sigma_high), spec_.global_support);
        BasicTensor<T> w(Shape{spec_.global_support, 1, 1});
        if (!zero)
          for (std::size_t i = 0; i < f.taps.size(); ++i) w[i] = static_cast<T>(f.taps[i]);
        params_.add("global.rho", std::move(w));
        if (spec_.global_bias) params_.add("global.bias", BasicTensor<T>(Shape{1}));
        break;
      }
      case ModelKind::kBlock: {
        const BlockConfig& b = spec_.block;
        conv("stem", 1, b.channels_in);
        add_block_params(params_, b, "block", rng);
        if (zero)
          for (auto& p : params_.items()) p.value = BasicTensor<T>(p.value.shape());
        if (spec_.head_channels > 0) {
          conv("hidden", b.output_channels(), spec_.head_channels);
          conv("head", spec_.head_channels, 1);
        } else {
          conv("head", b.output_channels(), 1);
        }
        break;
      }
    }
    for (auto& p : params_.items()) p.value.set_requires_grad(true);
  }

  ModelSpec spec_;
  std::shared_ptr<const VoteMask> mask_;
  ParamSet<T> params_;
};

}  // namespace htprior
