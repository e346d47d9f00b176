// Command-line front end: degrade, train, infer, evaluate, ablate.
#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "srcyc/srcyc.hpp"

namespace {

using namespace srcyc;
namespace fs = std::filesystem;

struct DataFlags {
  std::string hr_dir;
  std::string lr_dir;
  int synthetic = 0;
  double synthetic_sigma = 8.0;
};

void add_data_flags(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--hr-dir", d.hr_dir, "Directory of HR training images");
  cmd->add_option("--lr-dir", d.lr_dir, "Directory of LR images (a manifest.csv there decides pairing)");
  cmd->add_option("--synthetic", d.synthetic, "Train on N generated 128x128 pairs instead of image folders");
  cmd->add_option("--synthetic-sigma", d.synthetic_sigma, "Noise level for generated pairs (8-bit units)");
}

Dataset load_data(const DataFlags& d, const TrainConfig& cfg) {
  if (d.synthetic > 0) return make_synthetic_dataset(d.synthetic, 128, cfg.scale, d.synthetic_sigma, cfg.seed + 7);
  if (d.hr_dir.empty() || d.lr_dir.empty()) throw ConfigError("give --hr-dir and --lr-dir, or --synthetic N");
  return load_dataset(d.hr_dir, d.lr_dir);
}

struct TrainFlags {
  std::string config_file;
  std::string preset;
  bool no_cycle = false;
  std::optional<long long> iters;
  bool tiny = false;
  bool desk = false;
  std::optional<std::uint64_t> seed;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("config", f.config_file, "key = value file with TrainConfig fields")->check(CLI::ExistingFile);
  cmd->add_option("--preset", f.preset, "Loss preset")->check(CLI::IsMember({"standard", "structural"}));
  cmd->add_flag("--no-cycle", f.no_cycle, "Disable the G_LR / D_y cyclic path");
  cmd->add_option("--iters", f.iters, "Total training iterations");
  cmd->add_flag("--tiny", f.tiny, "Use the reduced network sizes");
  cmd->add_flag("--desk", f.desk, "Start from the CPU desk preset (tiny, batch 4, 200 iterations)");
  cmd->add_option("--seed", f.seed, "Seed for initialization and sampling");
}

// File values first, then explicit flags.
TrainConfig resolve_config(const TrainFlags& f) {
  TrainConfig cfg = f.desk ? TrainConfig::desk() : TrainConfig{};
  if (!f.config_file.empty()) cfg.apply(read_config_file(f.config_file));
  if (!f.preset.empty()) cfg.preset = parse_loss_preset(f.preset);
  if (f.no_cycle) cfg.cyclic_path = false;
  if (f.iters) cfg.total_iters = *f.iters;
  if (f.tiny) cfg.tiny = true;
  if (f.seed) cfg.seed = *f.seed;
  cfg.validate();
  return cfg;
}

int report_failures(const std::vector<std::string>& failures) {
  for (const auto& f : failures) std::cerr << "error: " << f << '\n';
  return failures.empty() ? EXIT_SUCCESS : EXIT_FAILURE;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cyclic GAN super-resolution toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // degrade
  auto* degrade_cmd = app.add_subcommand("degrade", "Synthesize LR images from a directory of HR PNGs");
  std::string deg_hr, deg_out, deg_jpeg = "off";
  DegradationSpec deg_spec;
  degrade_cmd->add_option("hr_dir", deg_hr, "Input HR directory")->required()->check(CLI::ExistingDirectory);
  degrade_cmd->add_option("out_dir", deg_out, "Output directory for LR images and manifest.csv")->required();
  degrade_cmd->add_option("--scale", deg_spec.scale, "Downsampling factor")->check(CLI::Range(1, 4));
  degrade_cmd->add_option("--sigma", deg_spec.noise_sigma, "Gaussian noise std in 8-bit units");
  degrade_cmd->add_option("--jpeg-q", deg_jpeg, "JPEG quality 1..100 or 'off'");
  degrade_cmd->add_option("--seed", deg_spec.seed, "Base seed; file i uses seed + i");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the SR model");
  TrainFlags train_flags;
  DataFlags train_data;
  std::string train_out = "run", train_resume;
  add_train_flags(train_cmd, train_flags);
  add_data_flags(train_cmd, train_data);
  train_cmd->add_option("--out", train_out, "Output directory for checkpoints and loss.csv");
  train_cmd->add_option("--resume", train_resume, "Resume from a training checkpoint")->check(CLI::ExistingFile);

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "Super-resolve a PNG or a directory of PNGs");
  std::string infer_in, infer_ckpt, infer_out = "sr";
  bool infer_ensemble = false;
  infer_cmd->add_option("input", infer_in, "LR image or directory")->required()->check(CLI::ExistingPath);
  infer_cmd->add_option("checkpoint", infer_ckpt, "Training or generator checkpoint")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", infer_out, "Output directory");
  infer_cmd->add_flag("--ensemble", infer_ensemble, "Average over the 8 flip/rotation transforms");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score SR images against HR references");
  std::string eval_sr, eval_hr, eval_csv;
  eval_cmd->add_option("sr_dir", eval_sr, "Directory of SR outputs")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("hr_dir", eval_hr, "Directory of references")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--csv", eval_csv, "Write the report as CSV to this file");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train with and without the cyclic path and compare");
  TrainFlags ablate_flags;
  DataFlags ablate_data;
  std::string ablate_csv;
  add_train_flags(ablate_cmd, ablate_flags);
  add_data_flags(ablate_cmd, ablate_data);
  ablate_cmd->add_option("--csv", ablate_csv, "Write the report as CSV to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*degrade_cmd) {
      if (deg_jpeg != "off") deg_spec.jpeg_quality = std::stoi(deg_jpeg);
      const auto rows = degrade_directory(deg_hr, deg_out, deg_spec);
      write_manifest(rows, fs::path(deg_out) / "manifest.csv");
      std::cout << "wrote " << rows.size() << " LR image(s) and " << (fs::path(deg_out) / "manifest.csv").string()
                << '\n';
      return EXIT_SUCCESS;
    }
    if (*train_cmd) {
      const TrainConfig cfg = resolve_config(train_flags);
      const Dataset ds = load_data(train_data, cfg);
      Trainer<float> trainer(cfg);
      TrainOptions opt;
      opt.out_dir = train_out;
      if (!train_resume.empty()) opt.resume = fs::path(train_resume);
      const TrainResult r = train(trainer, ds, opt);
      std::cout << "checkpoint: " << r.checkpoint.string() << "\nloss log: " << r.loss_csv.string() << '\n';
      return EXIT_SUCCESS;
    }
    if (*infer_cmd) {
      const auto gen = load_generator<float>(fs::path(infer_ckpt));
      const auto summary = super_resolve_path(*gen, infer_in, infer_out, infer_ensemble);
      std::cout << "wrote " << summary.written.size() << " image(s) to " << infer_out << '\n';
      return report_failures(summary.failures);
    }
    if (*eval_cmd) {
      const MetricReport report = evaluate_dir(eval_sr, eval_hr);
      report.print_table(std::cout);
      if (!eval_csv.empty()) {
        std::ofstream out(eval_csv);
        if (!out) throw std::runtime_error(eval_csv + ": cannot write");
        report.write_csv(out);
      }
      return report.ok() ? EXIT_SUCCESS : EXIT_FAILURE;
    }
    if (*ablate_cmd) {
      const TrainConfig cfg = resolve_config(ablate_flags);
      const Dataset ds = load_data(ablate_data, cfg);
      const AblationReport report = run_ablation<float>(cfg, ds, ds, &std::cout);
      report.print_table(std::cout);
      if (!ablate_csv.empty()) {
        std::ofstream out(ablate_csv);
        if (!out) throw std::runtime_error(ablate_csv + ": cannot write");
        report.write_csv(out);
      }
      return EXIT_SUCCESS;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_FAILURE;
}
