// Runs the holoseg binary and compares its files with direct library calls.

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "holoseg/contamination.hpp"
#include "holoseg/io.hpp"
#include "holoseg/synthetic.hpp"
#include "oracles.hpp"

using namespace holoseg;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("holoseg_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) const {
    const std::string cmd = std::string(HOLOSEG_CLI) + " " + args + " >" + (dir_ / "stdout").string() + " 2>" +
                            (dir_ / "stderr").string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir_ / "stdout"), slurp(dir_ / "stderr")};
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  /// Writes a small noisy score-map set and returns its library form.
  std::vector<ScoreMapSet> write_synthetic(Index count) const {
    NoisyScoreConfig cfg;
    cfg.count = count;
    cfg.height = cfg.width = 16;
    cfg.num_classes = 12;
    cfg.min_labels = 3;
    cfg.max_labels = 6;
    auto data = make_noisy_score_maps(cfg, 5);
    fs::create_directories(path("scores"));
    fs::create_directories(path("truth"));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::string stem = "im" + std::to_string(10 + i);
      io::write_tensor(path("scores") / (stem + ".hstn"), data[i].scores);
      io::write_pgm(path("truth") / (stem + ".pgm"), data[i].truth);
      data[i].scores = io::read_tensor(path("scores") / (stem + ".hstn"));  // stored precision
    }
    return data;
  }

  fs::path dir_;
};

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(Cli, EvalOnIdenticalDirectoriesIsPerfect) {
  std::mt19937_64 rng(1);
  fs::create_directories(path("p"));
  for (int i = 0; i < 3; ++i) io::write_pgm(path("p") / ("m" + std::to_string(i) + ".pgm"), oracle::random_labels(8, 8, 4, rng));
  const CliResult r = run("eval --pred-dir " + path("p").string() + " --truth-dir " + path("p").string() + " --classes 4");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "pAcc,mAcc,mIU,fwIU,valid_classes\n1.000000,1.000000,1.000000,1.000000,4\n");
}

TEST_F(Cli, GradcheckSoftFilter) {
  const CliResult r = run("gradcheck --op soft_filter --tol 1e-4");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto line = r.out.substr(r.out.find("soft_filter,"));
  EXPECT_LT(std::stod(line.substr(12)), 1e-4);
  EXPECT_NE(line.find("pass"), std::string::npos);
}

TEST_F(Cli, ContaminateGridIsDeterministicAndMatchesLibrary) {
  const auto data = write_synthetic(8);
  const std::string args = "contaminate-grid --scores-dir " + path("scores").string() + " --truth-dir " +
                           path("truth").string() + " --np-list 0,0.6,2 --nr-list 0,1.4 --seed 3 --heatmap " +
                           path("h.ppm").string() + " --cell-size 2 --csv ";
  ASSERT_EQ(run(args + path("a.csv").string()).code, 0);
  ASSERT_EQ(run(args + path("b.csv").string()).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));

  const auto records = run_grid(data, {0, 0.6, 2}, {0, 1.4}, 3);
  std::string want = grid_csv_header() + "\n";
  for (const auto& rec : records) want += to_csv_row(rec) + "\n";
  EXPECT_EQ(slurp(path("a.csv")), want);
  const RgbImage heat = io::read_ppm(path("h.ppm"));
  EXPECT_EQ(heat.width, 6);
  EXPECT_EQ(heat.height, 4);
}

TEST_F(Cli, FilterHardMatchesLibrary) {
  const auto data = write_synthetic(1);
  io::write_text(path("labels.txt"), "0 3 5\n");
  const CliResult r = run("filter-hard --scores " + (path("scores") / "im10.hstn").string() + " --labels-file " +
                    path("labels.txt").string() + " --out " + path("out.pgm").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_bytes(path("out.pgm")), io::encode_pgm(hard_filter_argmax(data[0].scores, {0, 3, 5})));
}

TEST_F(Cli, FilterSoftBothOrders) {
  std::mt19937_64 rng(2);
  const Tensor seg = oracle::random_tensor({3, 4, 3}, rng, -3, 3), conf = oracle::random_tensor({3}, rng, -3, 3);
  io::write_tensor(path("seg.hstn"), seg);
  io::write_tensor(path("conf.hstn"), conf);
  const Tensor s = io::read_tensor(path("seg.hstn")), c = io::read_tensor(path("conf.hstn"));
  const std::string base = "filter-soft --scores " + path("seg.hstn").string() + " --conf " + path("conf.hstn").string();

  ASSERT_EQ(run(base + " --out " + path("a.hstn").string() + " --upsample 6 7").code, 0);
  EXPECT_EQ(io::read_bytes(path("a.hstn")), io::encode_tensor(filter_then_upsample(s, c, 6, 7)));
  ASSERT_EQ(run(base + " --out " + path("b.hstn").string() + " --upsample 6 7 --filter-after-upsample").code, 0);
  EXPECT_EQ(io::read_bytes(path("b.hstn")), io::encode_tensor(upsample_then_filter(s, c, 6, 7)));
  ASSERT_EQ(run(base + " --out " + path("c.hstn").string() + " --eps 1e-3").code, 0);
  EXPECT_EQ(io::read_bytes(path("c.hstn")), io::encode_tensor(soft_filter(s, c, 1e-3)));
}

TEST_F(Cli, RenderMatchesLibrary) {
  std::mt19937_64 rng(3);
  const LabelMap m = oracle::random_labels(5, 6, 4, rng);
  io::write_pgm(path("m.pgm"), m);
  ASSERT_EQ(run("render --labels " + path("m.pgm").string() + " --out " + path("m.ppm").string() +
                " --classes 4 --palette-seed 2").code,
            0);
  EXPECT_EQ(io::read_bytes(path("m.ppm")), io::encode_ppm(io::render_labels(m, 4, 2)));
}

TEST_F(Cli, TrainToyReplaysAndHonorsConfigFile) {
  io::write_text(path("toy.ini"), "epochs=1\ntrain-images=3\nval-images=2\nimage-size=16\nhidden=4\nfeature-channels=3\nlr=0.5\n");
  const std::string base = "train-toy --config " + path("toy.ini").string() + " --seed 4 --lr 0.01 --log ";
  const CliResult a = run(base + path("a.csv").string() + " --out-checkpoint " + path("ck").string());
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(run(base + path("b.csv").string()).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(count_lines(slurp(path("a.csv"))), 2);
  EXPECT_NE(a.out.find("steps=3 "), std::string::npos);

  // --lr on the command line must beat lr=0.5 from the file.
  MicroNetConfig cfg;
  cfg.epochs = 1;
  cfg.hidden = 4;
  cfg.feature_channels = 3;
  cfg.learning_rate = 0.01;
  const auto train_set = make_shapes_dataset(3, 16, 16, cfg.num_classes, 4);
  const auto val_set = make_shapes_dataset(2, 16, 16, cfg.num_classes, 4 ^ 0x9E3779B97F4A7C15ull);
  const TrainResult lib = train(train_set, val_set, cfg, 4, Variant::kHolistic);
  EXPECT_EQ(slurp(path("a.csv")), epoch_log_csv_header() + "\n" + to_csv_row(lib.log[0]) + "\n");
  const Weights ck = io::load_checkpoint(path("ck"), cfg);
  for (Index i = 0; i < ck.pixel_head.size(); ++i) EXPECT_EQ(ck.pixel_head[i], double(float(lib.params.weights.pixel_head[i])));
}

TEST_F(Cli, FailuresPrintOneLineAndExitNonzero) {
  for (const std::string args :
       {"eval --pred-dir /nonexistent --truth-dir /tmp --classes 3", "gradcheck --op nope", "gradcheck",
        "train-toy --variant other", "train-toy --momentum 1.5", "render --labels /nonexistent.pgm --out x.ppm",
        "filter-hard --bogus 1", "contaminate-grid --scores-dir /tmp --truth-dir /tmp --np-list 1,x"}) {
    const CliResult r = run(args);
    EXPECT_NE(r.code, 0) << args;
    EXPECT_EQ(count_lines(r.err), 1) << args << ": " << r.err;
    EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << args;
  }
}
