#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "htprior/htprior.hpp"

namespace fs = std::filesystem;
using namespace htprior;

namespace {

const std::vector<LineCircleSample>& pick_split(const DatasetSplits& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  return ds.test;
}

DatasetSplits load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  DatasetSplits ds;
  ds.train = load_split(dir / "train");
  ds.val = load_split(dir / "val");
  ds.test = load_split(dir / "test");
  return ds;
}

// Model settings for a checkpoint: an explicit config, else config.txt beside it.
RunConfig config_for_checkpoint(const fs::path& ckpt, const std::string& explicit_config) {
  const fs::path cfg_path = explicit_config.empty() ? ckpt.parent_path() / "config.txt" : fs::path(explicit_config);
  if (!fs::exists(cfg_path))
    throw IoError("no model config for " + ckpt.string() + " (expected " + cfg_path.string() + ", or pass --config)");
  return load_run_config(cfg_path);
}

Model<float> load_model(const fs::path& ckpt, const std::string& explicit_config) {
  const RunConfig cfg = config_for_checkpoint(ckpt, explicit_config);
  Model<float> model(cfg.model);
  unpack_state(read_checkpoint(ckpt), model.params(), nullptr, ckpt.string());
  return model;
}

int cmd_gen_data(std::uint64_t seed, const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw IoError(out.string() + " already exists and is not empty (use --force to overwrite)");
    for (const char* split : {"train", "val", "test"}) fs::remove_all(out / split);
  }
  fs::create_directories(out);
  const DatasetSplits ds = generate_dataset(seed);
  save_split(out / "train", ds.train);
  save_split(out / "val", ds.val);
  save_split(out / "test", ds.test);
  std::cout << "wrote " << ds.train.size() << " train, " << ds.val.size() << " val, " << ds.test.size()
            << " test samples to " << out.string() << "\n"
            << "manifest hashes: " << hash_hex(manifest_hash(ds.train)) << ' ' << hash_hex(manifest_hash(ds.val)) << ' '
            << hash_hex(manifest_hash(ds.test)) << "\n";
  return 0;
}

int cmd_train(const fs::path& config_path) {
  RunConfig cfg = load_run_config(config_path);
  if (cfg.data_dir.empty()) throw ConfigError(config_path.string() + ": missing required key 'data'");
  const DatasetSplits ds = load_dataset(cfg.data_dir);
  std::cout << "training " << cfg.model.name() << " on " << cfg.data_dir << " -> " << cfg.out_dir << std::endl;
  run_training(cfg, ds.train, ds.val, &std::cout);
  return 0;
}

int cmd_eval(const fs::path& ckpt, const std::string& split, const fs::path& data, const std::string& config,
             const std::string& out_dir) {
  Model<float> model = load_model(ckpt, config);
  const DatasetSplits ds = load_dataset(data);
  const EvalReport report = evaluate(model, pick_split(ds, split));
  write_eval_report(std::cout, model.spec().name(), split, report);
  const fs::path out = out_dir.empty() ? ckpt.parent_path() : fs::path(out_dir);
  fs::create_directories(out);
  std::ostringstream rep, csv;
  write_eval_report(rep, model.spec().name(), split, report);
  write_pr_csv(csv, report.curve);
  write_file(out / ("eval_" + split + ".txt"), rep.str());
  write_file(out / ("eval_" + split + "_pr.csv"), csv.str());
  return 0;
}

int cmd_detect(const fs::path& image_path, const std::string& mode, const std::string& ckpt, const std::string& config,
               const fs::path& out, std::size_t k) {
  const GrayImage img = read_pgm(image_path);
  fs::create_directories(out);
  if (mode == "learned") {
    if (ckpt.empty()) throw ConfigError("detect --mode learned requires --ckpt");
    Model<float> model = load_model(ckpt, config);
    if (img.width != model.spec().width || img.height != model.spec().height) {
      throw ConfigError("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) + ", model expects " +
                        std::to_string(model.spec().width) + "x" + std::to_string(model.spec().height));
    }
    const Tensor pred = model.predict(to_tensor<float>(img, 1.0 / 255.0));
    write_pgm(out / "pred.pgm", to_gray(pred));
    std::cout << "wrote " << (out / "pred.pgm").string() << "\n";
    return 0;
  }
  Raster bin(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) bin.pixels[i] = img.pixels[i] > 127 ? 1 : 0;
  const auto mask = build_vote_mask(build_grid(img.width, img.height));
  const auto found = detect_lines(bin, *mask, k);
  Raster lines(img.width, img.height);
  std::ofstream txt(out / "lines.txt");
  if (!txt) throw IoError("cannot open " + (out / "lines.txt").string() + " for writing");
  txt << "# rho theta score\n" << std::setprecision(9);
  for (const auto& d : found) {
    if (d.score <= 0.0) continue;
    txt << d.line.rho << ' ' << d.line.theta << ' ' << d.score << '\n';
    const Raster r = rasterize_line(d.line, mask->grid());
    for (std::size_t i = 0; i < r.pixels.size(); ++i) lines.pixels[i] |= r.pixels[i];
  }
  write_binary_pgm(out / "pred.pgm", lines);
  std::cout << "wrote " << (out / "pred.pgm").string() << " and " << (out / "lines.txt").string() << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& kind, std::uint64_t seed, double delta, double tolerance) {
  const GradCheckReport r = gradcheck_model(kind, seed, delta);
  for (const auto& [name, err] : r.per_parameter) std::cout << name << ' ' << err << '\n';
  std::cout << "max relative error " << r.max_relative_error << (r.max_relative_error <= tolerance ? " ok" : " FAIL")
            << '\n';
  if (r.max_relative_error > tolerance) throw UsageError("gradient check failed for " + kind);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hough-transform line priors: data generation, training, evaluation, detection"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out, config, ckpt, split, data, image, mode, kind, eval_out;
  bool force = false;
  std::size_t k = 5;
  double delta = 1e-3, tolerance = 1e-3;

  auto* gen = app.add_subcommand("gen-data", "generate the Line-Circle dataset");
  gen->add_option("--seed", seed, "dataset seed")->required();
  gen->add_option("--out", out, "output directory")->required();
  gen->add_flag("--force", force, "overwrite an existing dataset");

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config, "key=value config file")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval->add_option("--split", split, "train, val or test")->required()->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--config", config, "model config (default: config.txt next to the checkpoint)");
  eval->add_option("--out", eval_out, "report directory (default: the checkpoint's directory)");

  auto* detect = app.add_subcommand("detect", "detect lines in one PGM image");
  detect->add_option("--image", image, "input PGM")->required();
  detect->add_option("--mode", mode, "learned or classic")->required()->check(CLI::IsMember({"learned", "classic"}));
  detect->add_option("--ckpt", ckpt, "checkpoint (learned mode)");
  detect->add_option("--config", config, "model config (default: config.txt next to the checkpoint)");
  detect->add_option("--out", out, "output directory")->required();
  detect->add_option("--k", k, "peaks to report (classic mode)")->check(CLI::PositiveNumber);

  auto* grad = app.add_subcommand("gradcheck", "compare analytic and numeric gradients on an 8x8 input");
  grad->add_option("--model", kind, "model kind")->required();
  grad->add_option("--seed", seed, "seed for weights and input")->required();
  grad->add_option("--delta", delta, "finite-difference step");
  grad->add_option("--tolerance", tolerance, "largest accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (const char* t = std::getenv("HTPRIOR_THREADS")) parse_thread_count(t);
    if (*gen) return cmd_gen_data(seed, out, force);
    if (*train) return cmd_train(config);
    if (*eval) return cmd_eval(ckpt, split, data, config, eval_out);
    if (*detect) return cmd_detect(image, mode, ckpt, config, out, k);
    if (*grad) return cmd_gradcheck(kind, seed, delta, tolerance);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
