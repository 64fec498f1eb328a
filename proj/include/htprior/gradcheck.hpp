#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "htprior/model.hpp"

namespace htprior {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::vector<std::pair<std::string, double>> per_parameter;
  std::size_t shrunk_steps = 0;  // probes retried with a smaller step near a relu kink
};

// Compares analytic gradients (f32 or f64) with central differences evaluated on a
// 64-bit copy of the parameters. Per parameter tensor the error is
// max_i |analytic_i - numeric_i| / max(|numeric|_inf, |analytic|_inf, 1e-6).
//
// loss_f(Tape<TA>&) must record the loss using params_f as gradient leaves;
// loss_d(std::vector<bool>* relu_signs) must evaluate the loss from the
// current values in params_d, tracing relu input signs when given a vector.
// A coordinate whose +-delta probes flip a relu sign is re-probed with the
// step shrunk tenfold (down to min_delta), so every coordinate is compared
// against a derivative of a locally smooth function.
template <typename TA, typename LossF, typename LossD>
GradCheckReport compare_gradients(ParamSet<TA>& params_f, LossF&& loss_f, ParamSet<double>& params_d,
                                  LossD&& loss_d, double delta = 1e-3, double min_delta = 1e-8) {
  for (auto* p : params_f.all()) p->value.clear_grad();
  {
    Tape<TA> tape;
    tape.backward(loss_f(tape));
  }
  std::vector<bool> base, up_signs, down_signs;
  loss_d(&base);
  GradCheckReport report;
  for (auto* pf : params_f.all()) {
    auto& pd = params_d.get(pf->name);
    auto w = pd.value.data();
    std::vector<double> numeric(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      for (double h = delta;; h /= 10.0) {
        up_signs.clear();
        down_signs.clear();
        w[i] = orig + h;
        const double up = loss_d(&up_signs);
        w[i] = orig - h;
        const double down = loss_d(&down_signs);
        w[i] = orig;
        numeric[i] = (up - down) / (2.0 * h);
        if ((up_signs == base && down_signs == base) || h / 10.0 < min_delta) break;
        ++report.shrunk_steps;
      }
    }
    double max_diff = 0.0, max_num = 0.0, max_ana = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double a = pf->value.has_grad() ? static_cast<double>(pf->value.grad()[i]) : 0.0;
      max_diff = std::max(max_diff, std::abs(a - numeric[i]));
      max_num = std::max(max_num, std::abs(numeric[i]));
      max_ana = std::max(max_ana, std::abs(a));
    }
    const double err = max_diff / std::max({max_num, max_ana, 1e-6});
    report.per_parameter.emplace_back(pf->name, err);
    report.max_relative_error = std::max(report.max_relative_error, err);
  }
  for (auto* p : params_f.all()) p->value.clear_grad();
  return report;
}

template <typename T>
double model_loss(Model<T>& model, const BasicTensor<T>& image, const BasicTensor<T>& target,
                  std::vector<bool>* relu_signs = nullptr) {
  Tape<T> tape;
  tape.relu_signs = relu_signs;
  Var<T> pred = model.forward(tape, tape.constant(image), false);
  return static_cast<double>(model.loss(pred, tape.constant(target)).value()[0]);
}

inline GradCheckReport finite_diff_check_report(Model<float>& model, const Tensor& image, const Tensor& target,
                                                double delta = 1e-3) {
  Model<double> shadow = model.cast<double>();
  const auto image_d = image.cast<double>();
  const auto target_d = target.cast<double>();
  return compare_gradients(
      model.params(),
      [&](Tape<float>& tape) {
        Var<float> pred = model.forward(tape, tape.constant(image), true);
        return model.loss(pred, tape.constant(target));
      },
      shadow.params(), [&](std::vector<bool>* signs) { return model_loss(shadow, image_d, target_d, signs); },
      delta);
}

// Worst relative error over all parameters of the model on one sample.
inline double finite_diff_check(Model<float>& model, const Tensor& image, const Tensor& target,
                                double delta = 1e-3) {
  return finite_diff_check_report(model, image, target, delta).max_relative_error;
}

// Named model on an 8x8 input with seeded weights, a uniform random input in
// [0, 1] and a random binary target.
inline GradCheckReport gradcheck_model(const std::string& kind, std::uint64_t seed, double delta = 1e-3) {
  ModelSpec spec;
  set_model_kind(spec, kind);
  spec.width = spec.height = 8;
  spec.seed = seed;
  Model<float> model(spec);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor image(Shape{8, 8, 1}), target(Shape{8, 8, 1});
  for (auto& v : image.data()) v = u(rng);
  for (auto& v : target.data()) v = u(rng) < 0.3f ? 1.0f : 0.0f;
  return finite_diff_check_report(model, image, target, delta);
}

}  // namespace htprior
