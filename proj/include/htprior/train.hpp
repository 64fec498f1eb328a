#pragma once

#include <algorithm>
#include <bit>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <random>
#include <vector>

#include "htprior/checkpoint.hpp"
#include "htprior/config.hpp"
#include "htprior/dataset.hpp"
#include "htprior/evaluation.hpp"
#include "htprior/model.hpp"
#include "htprior/optim.hpp"

namespace htprior {

struct EvalReport {
  std::vector<MatchResult> curve;
  double ap = 0.0;
  std::size_t images = 0;
};

// Dataset-level PR curve: per-threshold counts are summed over all images
// before precision and recall are formed.
inline EvalReport evaluate(Model<float>& model, const std::vector<LineCircleSample>& samples,
                           double tol_fraction = 0.0075) {
  std::vector<std::vector<MatchResult>> per_image(samples.size());
  const auto thresholds = default_thresholds();
  parallel_for(samples.size(), 4, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& s = samples[i];
      const Tensor pred = model.predict(to_tensor<float>(s.image));
      per_image[i] = pr_curve(pred, s.target, thresholds, tolerance_px(s.target.width, s.target.height, tol_fraction));
    }
  });
  PrAccumulator acc(thresholds);
  for (const auto& c : per_image) acc.add(c);
  return {acc.curve(), acc.ap(), samples.size()};
}

inline void write_eval_report(std::ostream& os, const std::string& model_name, const std::string& split,
                              const EvalReport& r) {
  os << "model: " << model_name << '\n'
     << "split: " << split << '\n'
     << "images: " << r.images << '\n'
     << std::fixed << std::setprecision(4) << "AP: " << 100.0 * r.ap << "%\n"
     << "threshold precision recall\n";
  for (const auto& m : r.curve) os << m.threshold << ' ' << m.precision << ' ' << m.recall << '\n';
}

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_ap = 0.0;
};

struct TrainState {
  std::size_t next_epoch = 0;
  double best_val_ap = -1.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_since_best = 0;
};

inline const std::string kTrainStateName = "adam.train_state";

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  // called when the validation AP improves
  std::function<void(const Model<float>&, const EpochLog&)> on_best;
  // called after every epoch with the full resumable state
  std::function<void(const Model<float>&, const Adam&, const TrainState&)> on_checkpoint;
};

// Shuffled order of the training set for one epoch, derived from (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// One optimizer step per image (batch size 1). Returns the mean loss.
inline double train_epoch(Model<float>& model, Adam& opt, const std::vector<Tensor>& images,
                          const std::vector<Tensor>& targets, const std::vector<std::size_t>& order, double lr) {
  double total = 0.0;
  Tape<float> tape;
  for (std::size_t idx : order) {
    Var<float> pred = model.forward(tape, tape.constant(images[idx]), true);
    Var<float> loss = model.loss(pred, tape.constant(targets[idx]));
    total += static_cast<double>(loss.value()[0]);
    tape.backward(loss);
    opt.step(model.parameters(), lr);
  }
  return order.empty() ? 0.0 : total / static_cast<double>(order.size());
}

// Adam training with per-epoch validation AP and optional early stopping.
inline std::vector<EpochLog> train_model(Model<float>& model, Adam& opt, TrainState& state, const RunConfig& cfg,
                                         const std::vector<LineCircleSample>& train,
                                         const std::vector<LineCircleSample>& val, const TrainHooks& hooks = {}) {
  std::vector<Tensor> images, targets;
  for (const auto& s : train) {
    images.push_back(to_tensor<float>(s.image));
    targets.push_back(to_tensor<float>(s.target));
  }
  std::vector<EpochLog> log;
  for (std::size_t epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    EpochLog e;
    e.epoch = epoch;
    e.lr = cfg.lr_at(epoch);
    e.train_loss = train_epoch(model, opt, images, targets, epoch_order(train.size(), cfg.seed, epoch), e.lr);
    e.val_ap = val.empty() ? 0.0 : evaluate(model, val).ap;
    log.push_back(e);
    state.next_epoch = epoch + 1;
    if (e.val_ap > state.best_val_ap) {
      state.best_val_ap = e.val_ap;
      state.best_epoch = epoch;
      state.epochs_since_best = 0;
      if (hooks.on_best) hooks.on_best(model, e);
    } else {
      ++state.epochs_since_best;
    }
    if (hooks.on_epoch) hooks.on_epoch(e);
    if (hooks.on_checkpoint) hooks.on_checkpoint(model, opt, state);
    if (cfg.patience > 0 && state.epochs_since_best >= cfg.patience) break;
  }
  return log;
}

// Training progress as f32 entries. The best AP is stored as four 16-bit
// chunks of its bit pattern so a resumed run compares against the exact value.
inline std::vector<NamedTensor> pack_train_state(const Model<float>& model, const Adam& opt, const TrainState& st) {
  auto out = pack_state(model.params(), &opt);
  const auto bits = std::bit_cast<std::uint64_t>(st.best_val_ap);
  std::vector<float> v = {static_cast<float>(st.next_epoch), static_cast<float>(st.best_epoch),
                          static_cast<float>(st.epochs_since_best)};
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<float>((bits >> (16 * i)) & 0xffff));
  out.push_back({kTrainStateName, Tensor(Shape{7}, std::move(v))});
  return out;
}

inline TrainState unpack_train_state(const std::vector<NamedTensor>& tensors, Model<float>& model, Adam& opt,
                                     const std::string& source) {
  std::vector<NamedTensor> rest;
  TrainState st;
  bool found = false;
  for (const auto& t : tensors) {
    if (t.name == kTrainStateName && t.value.size() == 7) {
      st.next_epoch = static_cast<std::size_t>(t.value[0]);
      st.best_epoch = static_cast<std::size_t>(t.value[1]);
      st.epochs_since_best = static_cast<std::size_t>(t.value[2]);
      std::uint64_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint64_t>(t.value[3 + i]) << (16 * i);
      st.best_val_ap = std::bit_cast<double>(bits);
      found = true;
    } else {
      rest.push_back(t);
    }
  }
  if (!found) throw ConfigError(source + ": not a resumable checkpoint (no training state)");
  unpack_state(rest, model.params(), &opt, source);
  return st;
}

inline std::vector<LineCircleSample> take_first(std::vector<LineCircleSample> v, std::size_t n) {
  if (n > 0 && n < v.size()) v.resize(n);
  return v;
}

inline AdamConfig adam_config_for(const RunConfig& cfg) {
  AdamConfig a;
  a.weight_decay = cfg.weight_decay;
  return a;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

// Full training run into cfg.out_dir:
//   config.txt      resolved settings, read back by eval and detect
//   train_log.csv   epoch,lr,train_loss,val_ap
//   best.htp        weights of the best validation epoch
//   last.htp        weights plus optimizer and schedule state (resume point)
//   val_report.txt  validation report of best.htp
// Progress lines go to `log` when given.
inline EvalReport run_training(const RunConfig& cfg, const std::vector<LineCircleSample>& train_all,
                               const std::vector<LineCircleSample>& val_all, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  const auto train = take_first(train_all, cfg.train_limit);
  const auto val = take_first(val_all, cfg.val_limit);

  Model<float> model(cfg.model);
  Adam opt(adam_config_for(cfg));
  TrainState state;
  std::ostringstream csv;
  csv << std::setprecision(9);
  if (!cfg.resume.empty()) {
    state = unpack_train_state(read_checkpoint(cfg.resume), model, opt, cfg.resume);
    std::ifstream prev(out / "train_log.csv", std::ios::binary);
    if (prev) csv << prev.rdbuf();
  }
  if (csv.tellp() <= 0) csv << "epoch,lr,train_loss,val_ap\n";
  write_file(out / "config.txt", cfg.to_text());

  bool wrote_best = !cfg.resume.empty() && fs::exists(out / "best.htp");
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    csv << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_ap << '\n';
    write_file(out / "train_log.csv", csv.str());
    if (log) *log << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.train_loss << " val_ap " << e.val_ap << std::endl;
  };
  hooks.on_best = [&](const Model<float>& m, const EpochLog&) {
    write_checkpoint(out / "best.htp", pack_state(m.params(), nullptr));
    wrote_best = true;
  };
  hooks.on_checkpoint = [&](const Model<float>& m, const Adam& o, const TrainState& st) {
    write_checkpoint(out / "last.htp", pack_train_state(m, o, st));
  };
  train_model(model, opt, state, cfg, train, val, hooks);
  if (!fs::exists(out / "last.htp")) write_checkpoint(out / "last.htp", pack_train_state(model, opt, state));
  if (!wrote_best) write_checkpoint(out / "best.htp", pack_state(model.params(), nullptr));

  unpack_state(read_checkpoint(out / "best.htp"), model.params(), nullptr, (out / "best.htp").string());
  const EvalReport report = evaluate(model, val);
  std::ostringstream rep;
  write_eval_report(rep, cfg.model.name(), "val", report);
  write_file(out / "val_report.txt", rep.str());
  if (log) *log << "best epoch " << state.best_epoch << " val AP " << 100.0 * report.ap << "%" << std::endl;
  return report;
}

}  // namespace htprior
