// Command-line front end. Every subcommand parses its flags, calls one
// library routine and serializes the result.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "holoseg/contamination.hpp"
#include "holoseg/filter.hpp"
#include "holoseg/gradcheck_suite.hpp"
#include "holoseg/io.hpp"
#include "holoseg/metrics.hpp"
#include "holoseg/micronet.hpp"
#include "holoseg/synthetic.hpp"

namespace {

using namespace holoseg;
namespace fs = std::filesystem;

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    io::write_text(path, text);
  }
}

/// Pairs files of two directories by stem; both sides must match exactly.
std::vector<std::pair<fs::path, fs::path>> pair_by_stem(const fs::path& a_dir, const std::string& a_ext,
                                                        const fs::path& b_dir, const std::string& b_ext) {
  const auto a = io::list_files(a_dir, a_ext);
  const auto b = io::list_files(b_dir, b_ext);
  if (a.empty()) throw Error(a_dir.string() + ": no " + a_ext + " files");
  if (a.size() != b.size()) {
    throw Error(a_dir.string() + " has " + std::to_string(a.size()) + " files but " +
                b_dir.string() + " has " + std::to_string(b.size()));
  }
  std::vector<std::pair<fs::path, fs::path>> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].stem() != b[i].stem()) {
      throw Error("no match for " + a[i].filename().string() + " in " + b_dir.string());
    }
    out.emplace_back(a[i], b[i]);
  }
  return out;
}

/// Sets every option of `cmd` that was not given on the command line from a
/// key=value file; keys are long option names without the dashes.
void apply_config_file(CLI::App& cmd, const std::string& path) {
  for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;  // section boundaries
    CLI::Option* opt = cmd.get_option_no_throw("--" + item.name);
    if (opt == nullptr || item.name == "config") throw Error(path + ": unknown key '" + item.name + "'");
    if (opt->count() > 0) continue;
    for (const auto& v : item.inputs) opt->add_result(v);
    opt->run_callback();
  }
}

std::optional<std::int32_t> ignore_option(std::int32_t ignore) {
  return ignore < 0 ? std::nullopt : std::optional<std::int32_t>(ignore);
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string pred_dir, truth_dir, out;
  Index classes = 0;
  std::int32_t ignore = kDefaultIgnoreLabel;
};

int run_eval(const EvalArgs& a) {
  ConfusionMatrix cm(a.classes);
  for (const auto& [pred, truth] : pair_by_stem(a.pred_dir, ".pgm", a.truth_dir, ".pgm"))
    cm.accumulate(io::read_pgm(pred), io::read_pgm(truth), ignore_option(a.ignore));
  emit(metric_csv_header() + "\n" + to_csv_row(compute_metrics(cm)) + "\n", a.out);
  return 0;
}

struct FilterHardArgs {
  std::string scores, labels_file, out;
};

int run_filter_hard(const FilterHardArgs& a) {
  io::write_pgm(a.out, hard_filter_argmax(io::read_tensor(a.scores), io::read_label_set(a.labels_file)));
  return 0;
}

struct FilterSoftArgs {
  std::string scores, conf, out;
  double eps = kDefaultLogitEps;
  std::vector<Index> upsample;
  bool after_upsample = false;
};

int run_filter_soft(const FilterSoftArgs& a) {
  const Tensor seg = io::read_tensor(a.scores);
  const Tensor conf = io::read_tensor(a.conf);
  Tensor out;
  if (a.upsample.empty()) {
    if (a.after_upsample) throw Error("--filter-after-upsample requires --upsample");
    out = soft_filter(seg, conf, a.eps);
  } else if (a.after_upsample) {
    out = upsample_then_filter(seg, conf, a.upsample[0], a.upsample[1], a.eps);
  } else {
    out = filter_then_upsample(seg, conf, a.upsample[0], a.upsample[1], a.eps);
  }
  io::write_tensor(a.out, out);
  return 0;
}

struct GridArgs {
  std::string scores_dir, truth_dir, np_list = "0,0.2,0.4,0.6,0.8,1,2,3,4,5,6,7,8,9,10",
                                     nr_list = "0,0.2,0.4,0.6,0.8,1,2,3,4,5,6,7,8,9,10";
  std::uint64_t seed = 0;
  std::string csv, heatmap, metric = "mIU";
  Index cell_size = 16;
  std::int32_t ignore = kDefaultIgnoreLabel;
};

int run_grid_command(const GridArgs& a) {
  const auto np = io::parse_number_list(a.np_list);
  const auto nr = io::parse_number_list(a.nr_list);
  const GridMetric metric = parse_grid_metric(a.metric);
  std::vector<ScoreMapSet> data;
  for (const auto& [scores, truth] : pair_by_stem(a.scores_dir, ".hstn", a.truth_dir, ".pgm")) {
    ScoreMapSet s{io::read_tensor(scores), io::read_pgm(truth)};
    if (s.scores.rank() != 3 || s.scores.dim(0) != s.truth.rows() || s.scores.dim(1) != s.truth.cols()) {
      throw Error(scores.string() + ": score map does not match " + truth.string());
    }
    data.push_back(std::move(s));
  }
  const auto records = run_grid(data, np, nr, a.seed, ignore_option(a.ignore));
  std::string csv = grid_csv_header() + "\n";
  for (const auto& r : records) csv += to_csv_row(r) + "\n";
  emit(csv, a.csv);
  if (!a.heatmap.empty()) {
    std::optional<double> baseline;
    if (metric != GridMetric::kPrecision && metric != GridMetric::kRecall) {
      baseline = metric_value(unfiltered_baseline(data, ignore_option(a.ignore)), metric);
    }
    io::write_ppm(a.heatmap, render_surface(records, metric, baseline, a.cell_size));
  }
  return 0;
}

struct GradcheckArgs {
  std::string op;
  bool full_net = false;
  std::uint64_t seed = 0;
  double tol = 1e-6;
};

int run_gradcheck(const GradcheckArgs& a) {
  if (a.op.empty() == !a.full_net) throw Error("gradcheck needs exactly one of --op or --full-net");
  bool ok = true;
  auto line = [&](const std::string& name, double err, double tol) {
    ok = ok && err <= tol;
    std::printf("%s,%.3e,%s\n", name.c_str(), err, err <= tol ? "pass" : "FAIL");
  };
  std::printf("name,max_rel_error,status\n");
  if (a.full_net) {
    const auto check = check_full_net(a.seed);
    for (const auto& t : check.tensors) line(t.name, t.error, a.tol);
    const bool path = check.holistic_path_norm > 0;
    ok = ok && path;
    std::printf("holistic_path_norm,%.3e,%s\n", check.holistic_path_norm, path ? "pass" : "FAIL");
  } else {
    const std::vector<std::string> ops =
        a.op == "all" ? gradcheck_op_names() : std::vector<std::string>{a.op};
    for (const auto& op : ops) line(op, check_op(op, a.seed), a.tol);
  }
  return ok ? 0 : 1;
}

struct TrainArgs {
  std::string variant = "holistic";
  std::uint64_t seed = 0;
  std::string config, checkpoint, log;
  Index train_images = 50, val_images = 20, image_size = 32;
  MicroNetConfig cfg;
};

int run_train(const TrainArgs& a) {
  const Variant variant = parse_variant(a.variant);
  a.cfg.validate();
  if (a.train_images < 1 || a.val_images < 0) throw Error("image counts must be positive");
  const auto train_set = make_shapes_dataset(a.train_images, a.image_size, a.image_size, a.cfg.num_classes, a.seed);
  const auto val_set = make_shapes_dataset(a.val_images, a.image_size, a.image_size, a.cfg.num_classes,
                                           a.seed ^ 0x9E3779B97F4A7C15ull);
  const MicroNetParams initial = init_params(a.cfg, a.seed);
  const double before = mean_loss(initial.weights, a.cfg, train_set, variant).total;
  const TrainResult result = train(initial, train_set, val_set, a.cfg, a.seed, variant);
  const double after = mean_loss(result.params.weights, a.cfg, train_set, variant).total;

  std::string csv = epoch_log_csv_header() + "\n";
  for (const auto& row : result.log) csv += to_csv_row(row) + "\n";
  if (!a.log.empty()) emit(csv, a.log);
  if (!a.checkpoint.empty()) io::save_checkpoint(a.checkpoint, result.params.weights);
  std::printf("variant=%s steps=%td initial_loss=%.6f final_loss=%.6f", a.variant.c_str(),
              a.cfg.epochs * a.train_images, before, after);
  if (!result.log.empty()) std::printf(" val_mIU=%.6f", result.log.back().val_miu);
  std::printf("\n");
  return 0;
}

struct RenderArgs {
  std::string labels, out;
  Index classes = 0;
  std::uint64_t palette_seed = 0;
  std::int32_t ignore = kDefaultIgnoreLabel;
};

int run_render(const RenderArgs& a) {
  const LabelMap labels = io::read_pgm(a.labels);
  Index classes = a.classes;
  if (classes <= 0) {
    const LabelSet present = labels_present(labels, ignore_option(a.ignore));
    classes = present.empty() ? 1 : *present.rbegin() + 1;
  }
  io::write_ppm(a.out, io::render_labels(labels, classes, a.palette_seed, ignore_option(a.ignore)));
  return 0;
}

struct SynthArgs {
  std::string out_dir;
  std::uint64_t seed = 0;
  NoisyScoreConfig cfg;
};

int run_synth(const SynthArgs& a) {
  const fs::path root(a.out_dir);
  fs::create_directories(root / "scores");
  fs::create_directories(root / "truth");
  const auto data = make_noisy_score_maps(a.cfg, a.seed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "img%04zu", i);
    io::write_tensor(root / "scores" / (std::string(stem) + ".hstn"), data[i].scores);
    io::write_pgm(root / "truth" / (std::string(stem) + ".pgm"), data[i].truth);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Holistic label filtering for semantic segmentation"};
  app.require_subcommand(1);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "pAcc, mAcc, mIU and fwIU of predicted label maps");
  eval_cmd->add_option("--pred-dir", eval.pred_dir, "predicted PGM label maps")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--truth-dir", eval.truth_dir, "ground-truth PGM label maps")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--classes", eval.classes, "number of classes")->required()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--ignore", eval.ignore, "ignore label (-1 for none)");
  eval_cmd->add_option("--out", eval.out, "CSV output (default stdout)");

  FilterHardArgs hard;
  auto* hard_cmd = app.add_subcommand("filter-hard", "argmax restricted to a label set");
  hard_cmd->add_option("--scores", hard.scores, "h x w x c score tensor")->required()->check(CLI::ExistingFile);
  hard_cmd->add_option("--labels-file", hard.labels_file, "allowed class ids")->required()->check(CLI::ExistingFile);
  hard_cmd->add_option("--out", hard.out, "output PGM label map")->required();

  FilterSoftArgs soft;
  auto* soft_cmd = app.add_subcommand("filter-soft", "differentiable holistic filter");
  soft_cmd->add_option("--scores", soft.scores, "h x w x c segmentation map")->required()->check(CLI::ExistingFile);
  soft_cmd->add_option("--conf", soft.conf, "length-c confidence tensor")->required()->check(CLI::ExistingFile);
  soft_cmd->add_option("--eps", soft.eps, "logit clamp")->check(CLI::Range(1e-300, 0.5));
  soft_cmd->add_option("--out", soft.out, "output tensor")->required();
  soft_cmd->add_option("--upsample", soft.upsample, "target height and width")->expected(2)->check(CLI::PositiveNumber);
  soft_cmd->add_flag("--filter-after-upsample", soft.after_upsample, "upsample first, then filter");

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("contaminate-grid", "filtering under contaminated label sets");
  grid_cmd->add_option("--scores-dir", grid.scores_dir, "score tensors (*.hstn)")->required()->check(CLI::ExistingDirectory);
  grid_cmd->add_option("--truth-dir", grid.truth_dir, "ground truth (*.pgm), same stems")->required()->check(CLI::ExistingDirectory);
  grid_cmd->add_option("--np-list", grid.np_list, "noisy labels added per image");
  grid_cmd->add_option("--nr-list", grid.nr_list, "true labels removed per image");
  grid_cmd->add_option("--seed", grid.seed, "random seed");
  grid_cmd->add_option("--csv", grid.csv, "CSV output (default stdout)");
  grid_cmd->add_option("--heatmap", grid.heatmap, "PPM heatmap output");
  grid_cmd->add_option("--metric", grid.metric, "heatmap metric: pAcc, mAcc, mIU, fwIU, precision, recall");
  grid_cmd->add_option("--cell-size", grid.cell_size, "heatmap pixels per cell")->check(CLI::PositiveNumber);
  grid_cmd->add_option("--ignore", grid.ignore, "ignore label (-1 for none)");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  auto* op_opt = gc_cmd->add_option("--op", gc.op, "primitive name, or 'all'");
  auto* net_opt = gc_cmd->add_flag("--full-net", gc.full_net, "every weight tensor of the toy network");
  op_opt->excludes(net_opt);
  gc_cmd->add_option("--seed", gc.seed, "random seed");
  gc_cmd->add_option("--tol", gc.tol, "maximum relative error")->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train-toy", "train the toy network on synthetic shapes");
  tr_cmd->add_option("--config", tr.config, "key=value config file (flags take precedence)")
      ->check(CLI::ExistingFile);
  tr_cmd->add_option("--variant", tr.variant, "holistic, baseline or holistic_gt")
      ->check(CLI::IsMember({"holistic", "baseline", "holistic_gt"}));
  tr_cmd->add_option("--seed", tr.seed, "random seed");
  tr_cmd->add_option("--out-checkpoint", tr.checkpoint, "checkpoint directory");
  tr_cmd->add_option("--log", tr.log, "epoch log CSV (- for stdout)");
  tr_cmd->add_option("--train-images", tr.train_images, "training images")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--val-images", tr.val_images, "validation images")->check(CLI::NonNegativeNumber);
  tr_cmd->add_option("--image-size", tr.image_size, "image height and width")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--classes", tr.cfg.num_classes, "class count")->check(CLI::Range(3, 255));
  tr_cmd->add_option("--feature-channels", tr.cfg.feature_channels)->check(CLI::PositiveNumber);
  tr_cmd->add_option("--hidden", tr.cfg.hidden)->check(CLI::PositiveNumber);
  tr_cmd->add_option("--downsample", tr.cfg.downsample)->check(CLI::PositiveNumber);
  tr_cmd->add_option("--kernel", tr.cfg.kernel)->check(CLI::PositiveNumber);
  tr_cmd->add_option("--dilation", tr.cfg.dilation)->check(CLI::PositiveNumber);
  tr_cmd->add_option("--patch", tr.cfg.patch, "patch window in pixels (0 = 4 x downsample)");
  tr_cmd->add_option("--lambda", tr.cfg.lambda, "classification loss weight");
  tr_cmd->add_option("--lr", tr.cfg.learning_rate, "learning rate");
  tr_cmd->add_option("--momentum", tr.cfg.momentum);
  tr_cmd->add_option("--epochs", tr.cfg.epochs)->check(CLI::NonNegativeNumber);
  tr_cmd->add_option("--eps", tr.cfg.eps, "logit clamp");
  tr_cmd->add_flag("--augment", tr.cfg.augment, "flip and scale augmentation");

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "color-code a label map");
  render_cmd->add_option("--labels", render.labels, "PGM label map")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--out", render.out, "PPM output")->required();
  render_cmd->add_option("--classes", render.classes, "class count (default: max label + 1)");
  render_cmd->add_option("--palette-seed", render.palette_seed);
  render_cmd->add_option("--ignore", render.ignore, "ignore label, drawn black (-1 for none)");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("make-synthetic", "write noisy score maps and truth for contaminate-grid");
  synth_cmd->add_option("--out-dir", synth.out_dir, "creates scores/ and truth/ below")->required();
  synth_cmd->add_option("--images", synth.cfg.count)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--classes", synth.cfg.num_classes)->check(CLI::Range(2, 254));
  synth_cmd->add_option("--size", synth.cfg.height)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--signal", synth.cfg.signal);
  synth_cmd->add_option("--noise", synth.cfg.noise)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*eval_cmd) return run_eval(eval);
    if (*hard_cmd) return run_filter_hard(hard);
    if (*soft_cmd) return run_filter_soft(soft);
    if (*grid_cmd) return run_grid_command(grid);
    if (*gc_cmd) return run_gradcheck(gc);
    if (*tr_cmd) {
      if (!tr.config.empty()) apply_config_file(*tr_cmd, tr.config);
      return run_train(tr);
    }
    if (*render_cmd) return run_render(render);
    if (*synth_cmd) {
      synth.cfg.width = synth.cfg.height;
      return run_synth(synth);
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 1;
}
