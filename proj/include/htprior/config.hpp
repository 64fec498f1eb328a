#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "htprior/common.hpp"
#include "htprior/model.hpp"

namespace htprior {

// Training run settings, read from a flat key=value file ('#' starts a comment).
struct RunConfig {
  ModelSpec model;
  std::string data_dir;
  std::string out_dir = "run";
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double lr = 4e-4;
  std::size_t lr_decay_epoch = 0;  // 0 = constant rate
  double lr_decay_factor = 0.1;
  double weight_decay = 1e-4;
  std::size_t patience = 0;  // 0 = no early stop
  std::size_t train_limit = 0;  // 0 = whole split
  std::size_t val_limit = 0;
  std::string resume;

  // Rate for a zero-based epoch index.
  double lr_at(std::size_t epoch) const {
    return (lr_decay_epoch > 0 && epoch >= lr_decay_epoch) ? lr * lr_decay_factor : lr;
  }

  std::string to_text() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_value(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  V v{};
  is >> v;
  if (is.fail() || !(is >> std::ws).eof() || (std::is_unsigned_v<V> && text.starts_with('-'))) {
    throw ConfigError("config key '" + key + "': cannot parse value '" + text + "'");
  }
  return v;
}

}  // namespace detail

inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

inline RunConfig run_config_from(const std::map<std::string, std::string>& kv, const std::string& source) {
  static const std::vector<std::string> known = {
      "model",        "data",         "out",          "seed",       "epochs",     "lr",
      "lr_decay_epoch", "lr_decay_factor", "weight_decay", "patience", "init",      "n_rho",
      "n_theta",      "width",        "height",       "support",    "channels",   "channels_mid",
      "channels_out", "sigma_low",    "sigma_high",   "head_channels", "global_support", "global_bias", "train_limit",
      "val_limit",    "resume"};
  std::vector<std::string> unknown;
  for (const auto& [k, v] : kv)
    if (std::find(known.begin(), known.end(), k) == known.end()) unknown.push_back(k);
  if (!unknown.empty()) {
    std::string msg = source + ": invalid config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  auto it = kv.find("model");
  if (it == kv.end()) throw ConfigError(source + ": missing required key 'model'");

  RunConfig c;
  set_model_kind(c.model, it->second);
  const bool block = c.model.kind == ModelKind::kBlock;
  c.epochs = block ? 30 : 200;
  c.lr_decay_epoch = block ? 25 : 0;
  c.patience = block ? 0 : 20;

  auto get = [&]<typename V>(const char* key, V& dst) {
    if (auto f = kv.find(key); f != kv.end()) dst = detail::parse_value<V>(key, f->second);
  };
  if (auto f = kv.find("data"); f != kv.end()) c.data_dir = f->second;
  if (auto f = kv.find("out"); f != kv.end()) c.out_dir = f->second;
  if (auto f = kv.find("resume"); f != kv.end()) c.resume = f->second;
  get("seed", c.seed);
  get("epochs", c.epochs);
  get("lr", c.lr);
  get("lr_decay_epoch", c.lr_decay_epoch);
  get("lr_decay_factor", c.lr_decay_factor);
  get("weight_decay", c.weight_decay);
  get("patience", c.patience);
  get("train_limit", c.train_limit);
  get("val_limit", c.val_limit);
  get("n_rho", c.model.n_rho);
  get("n_theta", c.model.n_theta);
  get("width", c.model.width);
  get("height", c.model.height);
  get("support", c.model.block.support);
  get("channels", c.model.block.channels_in);
  c.model.block.channels_mid = c.model.block.channels_in;
  c.model.block.channels_out = c.model.block.channels_in;
  get("channels_mid", c.model.block.channels_mid);
  get("channels_out", c.model.block.channels_out);
  get("sigma_low", c.model.block.sigma_low);
  get("sigma_high", c.model.block.sigma_high);
  get("head_channels", c.model.head_channels);
  get("global_support", c.model.global_support);
  get("global_bias", c.model.global_bias);
  if (auto f = kv.find("init"); f != kv.end()) {
    if (f->second == "he") c.model.init = InitScheme::kHe;
    else if (f->second == "zero") c.model.init = InitScheme::kZero;
    else throw ConfigError(source + ": init must be 'he' or 'zero', got '" + f->second + "'");
  }
  c.model.seed = c.seed;
  if (c.lr < 0.0) throw ConfigError(source + ": lr must be non-negative");
  if (block) c.model.block.validate();
  return c;
}

inline RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>") {
  std::istringstream is(text);
  return run_config_from(parse_key_values(is, source), source);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return run_config_from(parse_key_values(in, path.string()), path.string());
}

inline std::string RunConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "model = " << model.name() << '\n';
  if (!data_dir.empty()) os << "data = " << data_dir << '\n';
  os << "out = " << out_dir << '\n'
     << "seed = " << seed << '\n'
     << "epochs = " << epochs << '\n'
     << "lr = " << lr << '\n'
     << "lr_decay_epoch = " << lr_decay_epoch << '\n'
     << "lr_decay_factor = " << lr_decay_factor << '\n'
     << "weight_decay = " << weight_decay << '\n'
     << "patience = " << patience << '\n'
     << "init = " << (model.init == InitScheme::kZero ? "zero" : "he") << '\n'
     << "width = " << model.width << '\n'
     << "height = " << model.height << '\n'
     << "n_rho = " << model.n_rho << '\n'
     << "n_theta = " << model.n_theta << '\n'
     << "global_support = " << model.global_support << '\n'
     << "global_bias = " << (model.global_bias ? 1 : 0) << '\n'
     << "support = " << model.block.support << '\n'
     << "channels = " << model.block.channels_in << '\n'
     << "channels_mid = " << model.block.channels_mid << '\n'
     << "channels_out = " << model.block.channels_out << '\n'
     << "sigma_low = " << model.block.sigma_low << '\n'
     << "sigma_high = " << model.block.sigma_high << '\n'
     << "head_channels = " << model.head_channels << '\n';
  if (train_limit) os << "train_limit = " << train_limit << '\n';
  if (val_limit) os << "val_limit = " << val_limit << '\n';
  return os.str();
}

}  // namespace htprior
