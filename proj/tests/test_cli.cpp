#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "htprior/htprior.hpp"

using namespace htprior;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const fs::path& work() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("htprior_cli_tests_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CliResult cli(const std::string& args, const std::string& env = "") {
  const fs::path o = work() / "stdout.txt", e = work() / "stderr.txt";
  const std::string cmd = env + " '" + std::string(HTPRIOR_CLI) + "' " + args + " >'" + o.string() + "' 2>'" +
                          e.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

// Dataset shared by the tests that need one on disk.
const fs::path& dataset() {
  static const fs::path d = [] {
    const fs::path p = work() / "data";
    const CliResult r = cli("gen-data --seed 3 --out '" + p.string() + "'");
    EXPECT_EQ(r.code, 0) << r.err;
    return p;
  }();
  return d;
}

// A one-epoch local_global run on a few images.
const fs::path& trained_run() {
  static const fs::path d = [] {
    const fs::path run = work() / "run";
    const fs::path cfg = work() / "train.cfg";
    write_file(cfg, "model = local_global\ndata = " + dataset().string() + "\nout = " + run.string() +
                        "\nepochs = 1\nlr = 0.005\ntrain_limit = 6\nval_limit = 3\n");
    const CliResult r = cli("train --config '" + cfg.string() + "'");
    EXPECT_EQ(r.code, 0) << r.err;
    return run;
  }();
  return d;
}

void expect_error(const CliResult& r, const std::string& fragment) {
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
  EXPECT_NE(r.err.find(fragment), std::string::npos) << r.err;
}

}  // namespace

TEST(Cli, GenDataWritesSplitsDeterministically) {
  const fs::path d = dataset();
  for (const char* split : {"train", "val", "test"}) EXPECT_TRUE(fs::exists(d / split / "manifest.txt"));
  EXPECT_TRUE(fs::exists(d / "test" / "1000_img.pgm"));
  EXPECT_TRUE(fs::exists(d / "test" / "1499_gt.pgm"));
  const CliResult again = cli("gen-data --seed 3 --out '" + (work() / "data2").string() + "'");
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_NE(again.out.find("744 train, 256 val, 500 test"), std::string::npos);
  for (const char* split : {"train", "val", "test"})
    EXPECT_EQ(slurp(d / split / "manifest.txt"), slurp(work() / "data2" / split / "manifest.txt"));
}

TEST(Cli, GenDataRefusesToOverwrite) {
  const fs::path d = work() / "data_force";
  ASSERT_EQ(cli("gen-data --seed 1 --out '" + d.string() + "'").code, 0);
  const std::string before = slurp(d / "val" / "manifest.txt");
  expect_error(cli("gen-data --seed 2 --out '" + d.string() + "'"), "--force");
  EXPECT_EQ(slurp(d / "val" / "manifest.txt"), before);
  ASSERT_EQ(cli("gen-data --seed 2 --out '" + d.string() + "' --force").code, 0);
  EXPECT_NE(slurp(d / "val" / "manifest.txt"), before);
  fs::remove_all(d);
}

TEST(Cli, TrainWritesRunDirectory) {
  const fs::path run = trained_run();
  for (const char* f : {"config.txt", "train_log.csv", "best.htp", "last.htp", "val_report.txt"})
    EXPECT_TRUE(fs::exists(run / f)) << f;
  EXPECT_EQ(slurp(run / "train_log.csv").rfind("epoch,lr,train_loss,val_ap\n", 0), 0u);
}

TEST(Cli, TrainRejectsBadConfigs) {
  const fs::path cfg = work() / "bad.cfg";
  write_file(cfg, "model = local\nout = x\nlearning_rate = 1\n");
  expect_error(cli("train --config '" + cfg.string() + "'"), "learning_rate");
  write_file(cfg, "model = local\nout = x\n");
  expect_error(cli("train --config '" + cfg.string() + "'"), "data");
  expect_error(cli("train --config '" + (work() / "nope.cfg").string() + "'"), "nope.cfg");
}

TEST(Cli, EvalReportsAndIsRepeatable) {
  const fs::path run = trained_run();
  const std::string args =
      "eval --ckpt '" + (run / "best.htp").string() + "' --split test --data '" + dataset().string() + "'";
  const CliResult a = cli(args), b = cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("split: test"), std::string::npos);
  EXPECT_NE(a.out.find("images: 500"), std::string::npos);
  EXPECT_NE(a.out.find("AP: "), std::string::npos);
  EXPECT_EQ(slurp(run / "eval_test.txt"), a.out);
  const std::string csv = slurp(run / "eval_test_pr.csv");
  EXPECT_EQ(csv.rfind("threshold,precision,recall,tp,fp,fn\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
}

TEST(Cli, EvalErrors) {
  const fs::path run = trained_run();
  expect_error(cli("eval --ckpt '" + (work() / "none.htp").string() + "' --split val --data '" +
                   dataset().string() + "'"),
               "none.htp");
  EXPECT_NE(cli("eval --ckpt '" + (run / "best.htp").string() + "' --split dev --data x").code, 0);
  // weights from one architecture cannot be read into another
  const fs::path cfg = work() / "mismatch.cfg";
  write_file(cfg, "model = block_variant_1\n");
  expect_error(cli("eval --ckpt '" + (run / "best.htp").string() + "' --config '" + cfg.string() +
                   "' --split val --data '" + dataset().string() + "'"),
               "lacks parameter");
}

TEST(Cli, DetectClassicRecoversRenderedLine) {
  const auto grid = build_grid(100, 100);
  const LineParam truth{12.0, 0.9};
  const Raster r = rasterize_line(truth, grid);
  const fs::path img = work() / "line.pgm", out = work() / "det_classic";
  write_binary_pgm(img, r);
  const CliResult run = cli("detect --image '" + img.string() + "' --mode classic --out '" + out.string() + "'");
  ASSERT_EQ(run.code, 0) << run.err;
  EXPECT_TRUE(fs::exists(out / "pred.pgm"));
  std::istringstream lines(slurp(out / "lines.txt"));
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "# rho theta score");
  double rho, theta, score;
  ASSERT_TRUE(lines >> rho >> theta >> score);
  EXPECT_LT(std::abs(rho - truth.rho), 2 * grid.rho_step());
  EXPECT_LT(std::abs(theta - truth.theta), 2 * grid.theta_step());
  EXPECT_GT(score, 0.0);
}

TEST(Cli, DetectLearned) {
  const fs::path run = trained_run();
  const fs::path zero = work() / "zero.pgm", out = work() / "det_learned";
  write_pgm(zero, GrayImage(100, 100));
  const CliResult ok = cli("detect --image '" + zero.string() + "' --mode learned --ckpt '" + (run / "best.htp").string() +
                     "' --out '" + out.string() + "'");
  ASSERT_EQ(ok.code, 0) << ok.err;
  for (auto v : read_pgm(out / "pred.pgm").pixels) ASSERT_EQ(v, 0);

  expect_error(cli("detect --image '" + zero.string() + "' --mode learned --out '" + out.string() + "'"), "--ckpt");
  const fs::path small = work() / "small.pgm";
  write_pgm(small, GrayImage(40, 30));
  expect_error(cli("detect --image '" + small.string() + "' --mode learned --ckpt '" + (run / "best.htp").string() +
                   "' --out '" + out.string() + "'"),
               "40x30");
  expect_error(cli("detect --image '" + (work() / "absent.pgm").string() + "' --mode classic --out '" + out.string() +
                   "'"),
               "absent.pgm");
}

TEST(Cli, GradcheckCommand) {
  const CliResult ok = cli("gradcheck --model block_variant_2 --seed 4");
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("max relative error"), std::string::npos);
  expect_error(cli("gradcheck --model mlp --seed 4"), "mlp");
}

TEST(Cli, UsageAndEnvironmentErrors) {
  EXPECT_NE(cli("").code, 0);
  EXPECT_NE(cli("frobnicate").code, 0);
  EXPECT_EQ(cli("frobnicate").err.rfind("error: ", 0), 0u);
  expect_error(cli("gen-data --out x"), "--seed");
  expect_error(cli("gradcheck --model local --seed 1", "HTPRIOR_THREADS=lots"), "HTPRIOR_THREADS");
  expect_error(cli("gradcheck --model local --seed 1", "HTPRIOR_THREADS=0"), "HTPRIOR_THREADS");
  EXPECT_EQ(cli("gradcheck --model local --seed 1", "HTPRIOR_THREADS=2").code, 0);
}
