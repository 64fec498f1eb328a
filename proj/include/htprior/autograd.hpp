#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "htprior/common.hpp"
#include "htprior/conv.hpp"
#include "htprior/hough.hpp"
#include "htprior/tensor.hpp"

namespace htprior {

// Learnable tensor with its Adam moment buffers. The gradient lives in
// value.grad() and is absent until a backward pass reaches the parameter.
template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  std::vector<T> adam_m;
  std::vector<T> adam_v;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v) : name(std::move(n)), value(std::move(v)) {
    value.set_requires_grad(true);
    adam_m.assign(value.size(), T{0});
    adam_v.assign(value.size(), T{0});
  }
};

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;
  std::uint64_t generation = 0;

  const BasicTensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Records forward ops in execution order; backward() replays them in reverse.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const BasicTensor<T>& grad_out)>;

  // When set, relu appends one bit per element (input > 0). Gradient checks
  // use it to notice a finite-difference step that crosses a kink.
  std::vector<bool>* relu_signs = nullptr;

  Var<T> constant(BasicTensor<T> value) { return push(std::move(value), false, nullptr, {}, true); }

  Var<T> param(Parameter<T>& p) { return push(p.value, true, &p, {}, true); }

  // Records an op output. The backward closure receives the output gradient
  // and calls accumulate() for whichever inputs need_grad().
  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      check_owned(in);
      needs = needs || nodes_[in.id].needs_grad;
    }
    assert(value.all_finite() && "non-finite value produced by a recorded op");
    return push(std::move(value), needs, nullptr, needs ? std::move(backward) : BackwardFn{}, false);
  }

  const BasicTensor<T>& value(const Var<T>& v) const {
    check_owned(v);
    return nodes_[v.id].value;
  }

  bool needs_grad(const Var<T>& v) const { return nodes_[v.id].needs_grad; }

  void accumulate(const Var<T>& v, const BasicTensor<T>& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (!n.grad) n.grad.emplace(n.value.shape());
    auto dst = n.grad->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  // Reverse sweep from a scalar loss. Leaves every reachable Parameter with a
  // populated gradient and clears the tape.
  void backward(const Var<T>& loss) {
    if (loss.tape != this || loss.generation != generation_ || loss.id >= nodes_.size()) {
      throw UsageError("backward: tensor was not produced by the current recorded pass");
    }
    if (nodes_[loss.id].leaf) throw UsageError("backward: tensor is a leaf, not the output of a recorded op");
    if (nodes_[loss.id].value.size() != 1) {
      throw UsageError("backward: loss must be a scalar, got shape " + nodes_[loss.id].value.shape().str());
    }
    nodes_[loss.id].grad.emplace(nodes_[loss.id].value.shape(), T{1});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad) continue;
      if (n.param) {
        if (!n.param->value.has_grad()) n.param->value.zero_grad();
        if (n.grad) n.param->value.accumulate_grad(n.grad->data());
        continue;
      }
      if (n.grad && n.backward) {
        const BasicTensor<T> g = std::move(*n.grad);
        n.grad.reset();
        n.backward(*this, g);
      }
    }
    clear();
  }

  void clear() {
    nodes_.clear();
    ++generation_;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> value;
    bool needs_grad = false;
    bool leaf = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
    std::optional<BasicTensor<T>> grad;
  };

  Var<T> push(BasicTensor<T> value, bool needs, Parameter<T>* p, BackwardFn fn, bool leaf) {
    nodes_.push_back(Node{std::move(value), needs, leaf, p, std::move(fn), std::nullopt});
    return Var<T>{this, nodes_.size() - 1, generation_};
  }

  void check_owned(const Var<T>& v) const {
    if (v.tape != this || v.generation != generation_ || v.id >= nodes_.size()) {
      throw UsageError("tensor does not belong to the current recorded pass");
    }
  }

  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
};

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  return tape->value(*this);
}

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ConfigError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace detail

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, std::optional<std::type_identity_t<Var<T>>> bias = std::nullopt) {
  Tape<T>& tape = *x.tape;
  const BasicTensor<T>* b = bias ? &bias->value() : nullptr;
  auto out = kernels::conv2d_forward(x.value(), kernel.value(), b);
  auto backward = [x, kernel, bias](Tape<T>& tp, const BasicTensor<T>& g) {
    if (tp.needs_grad(x)) tp.accumulate(x, kernels::conv2d_backward_input(g, kernel.value(), x.shape()));
    if (tp.needs_grad(kernel)) tp.accumulate(kernel, kernels::conv2d_backward_kernel(g, x.value(), kernel.shape()));
    if (bias && tp.needs_grad(*bias)) tp.accumulate(*bias, kernels::bias_backward(g));
  };
  if (bias) return tape.record(std::move(out), {x, kernel, *bias}, backward);
  return tape.record(std::move(out), {x, kernel}, backward);
}

template <typename T>
Var<T> conv1d_rho(Var<T> x, Var<T> kernel, Conv1dMode mode) {
  auto out = kernels::conv1d_rho_forward(x.value(), kernel.value(), mode);
  return x.tape->record(std::move(out), {x, kernel}, [x, kernel, mode](Tape<T>& tp, const BasicTensor<T>& g) {
    if (tp.needs_grad(x)) tp.accumulate(x, kernels::conv1d_rho_backward_input(g, kernel.value(), x.shape(), mode));
    if (tp.needs_grad(kernel))
      tp.accumulate(kernel, kernels::conv1d_rho_backward_kernel(g, x.value(), kernel.shape(), mode));
  });
}

// Adds b[c] to every element of channel c (the last axis).
template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> b) {
  const std::size_t c = x.shape()[x.shape().rank() - 1];
  if (b.shape().rank() != 1 || b.shape()[0] != c)
    throw ConfigError("add_channel_bias: bias " + b.shape().str() + " does not match " + x.shape().str());
  BasicTensor<T> out = x.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % c];
  return x.tape->record(std::move(out), {x, b}, [x, b, c](Tape<T>& tp, const BasicTensor<T>& g) {
    if (tp.needs_grad(x)) tp.accumulate(x, g);
    if (tp.needs_grad(b)) {
      BasicTensor<T> gb(Shape{c});
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
      tp.accumulate(b, gb);
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  BasicTensor<T> out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
  if (auto* trace = x.tape->relu_signs)
    for (std::size_t i = 0; i < in.size(); ++i) trace->push_back(in[i] > T{0});
  return x.tape->record(std::move(out), {x}, [x](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> gi(x.shape());
    const auto in = x.value().data();
    for (std::size_t i = 0; i < in.size(); ++i) gi[i] = in[i] > T{0} ? g[i] : T{0};
    tp.accumulate(x, gi);
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  BasicTensor<T> out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = T{1} / (T{1} + std::exp(-in[i]));
  return x.tape->record(std::move(out), {x}, [x](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> gi(x.shape());
    const auto in = x.value().data();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const T s = T{1} / (T{1} + std::exp(-in[i]));
      gi[i] = g[i] * s * (T{1} - s);
    }
    tp.accumulate(x, gi);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const BasicTensor<T>& g) {
    if (tp.needs_grad(a)) {
      BasicTensor<T> ga(a.shape());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * b.value()[i];
      tp.accumulate(a, ga);
    }
    if (tp.needs_grad(b)) {
      BasicTensor<T> gb(b.shape());
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = g[i] * a.value()[i];
      tp.accumulate(b, gb);
    }
  });
}

// Concatenates two [H, W, C] tensors along the channel axis.
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank() != 3 || sb.rank() != 3 || sa[0] != sb[0] || sa[1] != sb[1]) {
    throw ConfigError("concat_channels: spatial shape mismatch " + sa.str() + " vs " + sb.str());
  }
  const std::size_t ca = sa[2], cb = sb[2], n = sa[0] * sa[1];
  BasicTensor<T> out(Shape{sa[0], sa[1], ca + cb});
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < ca; ++c) out[p * (ca + cb) + c] = a.value()[p * ca + c];
    for (std::size_t c = 0; c < cb; ++c) out[p * (ca + cb) + ca + c] = b.value()[p * cb + c];
  }
  return a.tape->record(std::move(out), {a, b}, [a, b, ca, cb, n](Tape<T>& tp, const BasicTensor<T>& g) {
    if (tp.needs_grad(a)) {
      BasicTensor<T> ga(a.shape());
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t c = 0; c < ca; ++c) ga[p * ca + c] = g[p * (ca + cb) + c];
      tp.accumulate(a, ga);
    }
    if (tp.needs_grad(b)) {
      BasicTensor<T> gb(b.shape());
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t c = 0; c < cb; ++c) gb[p * cb + c] = g[p * (ca + cb) + ca + c];
      tp.accumulate(b, gb);
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  double s = 0.0;
  for (T v : x.value().data()) s += static_cast<double>(v);
  BasicTensor<T> out(Shape{1}, static_cast<T>(s));
  return x.tape->record(std::move(out), {x}, [x](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(x, BasicTensor<T>(x.shape(), g[0]));
  });
}

// Mean squared difference.
template <typename T>
Var<T> l2_loss(Var<T> pred, Var<T> target) {
  detail::require_same_shape(pred.shape(), target.shape(), "l2_loss");
  const std::size_t n = pred.value().size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.value()[i]) - static_cast<double>(target.value()[i]);
    s += d * d;
  }
  BasicTensor<T> out(Shape{1}, static_cast<T>(s / static_cast<double>(n)));
  return pred.tape->record(std::move(out), {pred, target}, [pred, target, n](Tape<T>& tp, const BasicTensor<T>& g) {
    const T scale = g[0] * T{2} / static_cast<T>(n);
    BasicTensor<T> gp(pred.shape());
    for (std::size_t i = 0; i < n; ++i) gp[i] = scale * (pred.value()[i] - target.value()[i]);
    if (tp.needs_grad(pred)) tp.accumulate(pred, gp);
    if (tp.needs_grad(target)) {
      for (auto& v : gp.data()) v = -v;
      tp.accumulate(target, gp);
    }
  });
}

inline constexpr double kBceEpsilon = 1e-7;

// Mean binary cross entropy. Probabilities are clamped to [eps, 1 - eps].
template <typename T>
Var<T> bce_loss(Var<T> pred, Var<T> target) {
  detail::require_same_shape(pred.shape(), target.shape(), "bce_loss");
  const std::size_t n = pred.value().size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(static_cast<double>(pred.value()[i]), kBceEpsilon, 1.0 - kBceEpsilon);
    const double t = static_cast<double>(target.value()[i]);
    s -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  BasicTensor<T> out(Shape{1}, static_cast<T>(s / static_cast<double>(n)));
  return pred.tape->record(std::move(out), {pred}, [pred, target, n](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> gp(pred.shape());
    const double scale = static_cast<double>(g[0]) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = static_cast<double>(pred.value()[i]);
      if (raw < kBceEpsilon || raw > 1.0 - kBceEpsilon) continue;
      const double t = static_cast<double>(target.value()[i]);
      gp[i] = static_cast<T>(scale * (raw - t) / (raw * (1.0 - raw)));
    }
    tp.accumulate(pred, gp);
  });
}

template <typename T>
Var<T> ht(Var<T> x, std::shared_ptr<const VoteMask> mask) {
  auto out = ht_forward(x.value(), *mask);
  return x.tape->record(std::move(out), {x}, [x, mask](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(x, ht_backward(g, *mask));
  });
}

template <typename T>
Var<T> iht(Var<T> x, std::shared_ptr<const VoteMask> mask) {
  auto out = iht_forward(x.value(), *mask);
  return x.tape->record(std::move(out), {x}, [x, mask](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(x, iht_backward(g, *mask));
  });
}

}  // namespace htprior
