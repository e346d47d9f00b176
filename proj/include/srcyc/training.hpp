// Alternating adversarial training of the SR / LR generator-discriminator
// pairs, checkpointing and the cyclic-path ablation harness.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "srcyc/checkpoint.hpp"
#include "srcyc/degradation.hpp"
#include "srcyc/losses.hpp"
#include "srcyc/metrics.hpp"
#include "srcyc/models.hpp"
#include "srcyc/optim.hpp"

namespace srcyc {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Configuration

enum class LossPreset { standard, structural };

inline std::string to_string(LossPreset p) { return p == LossPreset::standard ? "standard" : "structural"; }

inline LossPreset parse_loss_preset(const std::string& s) {
  if (s == "standard") return LossPreset::standard;
  if (s == "structural") return LossPreset::structural;
  throw ConfigError("unknown loss preset '" + s + "' (expected standard or structural)");
}

/// Reads "key = value" lines; blank lines and '#' comments are ignored.
inline ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  ConfigMap out;
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

struct TrainConfig {
  int batch_size = 16;
  int lr_patch = 32;
  long long total_iters = 51000;
  double base_lr = 1e-4;
  std::vector<long long> lr_milestones{5000, 10000, 20000, 30000};
  double lr_factor = 0.5;
  AdamOptions adam;
  LossPreset preset = LossPreset::standard;
  bool cyclic_path = true;
  std::uint64_t seed = 0;
  bool tiny = false;
  int scale = 4;
  long long checkpoint_every = 1000;
  long long log_every = 10;
  std::string feature_weights;  // empty: the built-in fallback extractor

  /// CPU-sized run: tiny networks, 200 iterations on small patches.
  static TrainConfig desk() {
    TrainConfig c;
    c.batch_size = 4;
    c.lr_patch = 16;
    c.total_iters = 200;
    c.tiny = true;
    c.checkpoint_every = 100;
    return c;
  }

  std::optional<LossWeights> weights_override;  // programmatic only; not part of the config file

  LossWeights weights() const {
    if (weights_override) return *weights_override;
    return preset == LossPreset::standard ? LossWeights::standard() : LossWeights::structural();
  }

  GSRConfig gsr_config() const {
    GSRConfig c = tiny ? GSRConfig::tiny() : GSRConfig{};
    c.scale = scale;
    return c;
  }
  DxConfig dx_config() const { return tiny ? DxConfig::tiny() : DxConfig{}; }
  GLRConfig glr_config() const { return tiny ? GLRConfig::tiny() : GLRConfig{}; }
  DyConfig dy_config() const { return tiny ? DyConfig::tiny() : DyConfig{}; }

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr_patch < 1) throw ConfigError("lr_patch must be >= 1");
    if (total_iters < 0) throw ConfigError("total_iters must be >= 0");
    if (!(base_lr > 0) || !(lr_factor > 0)) throw ConfigError("learning rates must be > 0");
    for (std::size_t i = 1; i < lr_milestones.size(); ++i)
      if (lr_milestones[i] <= lr_milestones[i - 1]) throw ConfigError("lr_milestones must be strictly increasing");
    if (scale < 1 || scale > 4) throw ConfigError("scale must be in {1,2,3,4}");
    if (cyclic_path && scale != LRGenerator<float>::kFactor)
      throw ConfigError("the cyclic path needs scale 4 (G_LR downsamples by 4)");
    if ((lr_patch * scale) % LRGenerator<float>::kFactor != 0 && cyclic_path)
      throw ConfigError("HR patch size must be divisible by 4 for the cyclic path");
    if (checkpoint_every < 0 || log_every < 0) throw ConfigError("intervals must be >= 0");
  }

  ConfigMap to_map() const {
    ConfigMap m;
    m["batch_size"] = std::to_string(batch_size);
    m["lr_patch"] = std::to_string(lr_patch);
    m["total_iters"] = std::to_string(total_iters);
    std::ostringstream lr;
    lr << std::setprecision(17) << base_lr;
    m["base_lr"] = lr.str();
    std::string ms;
    for (long long v : lr_milestones) ms += (ms.empty() ? "" : ",") + std::to_string(v);
    m["lr_milestones"] = ms;
    std::ostringstream f;
    f << std::setprecision(17) << lr_factor;
    m["lr_factor"] = f.str();
    auto num = [](double v) {
      std::ostringstream os;
      os << std::setprecision(17) << v;
      return os.str();
    };
    m["adam_beta1"] = num(adam.beta1);
    m["adam_beta2"] = num(adam.beta2);
    m["adam_eps"] = num(adam.eps);
    m["preset"] = to_string(preset);
    m["cyclic_path"] = cyclic_path ? "true" : "false";
    m["seed"] = std::to_string(seed);
    m["tiny"] = tiny ? "true" : "false";
    m["scale"] = std::to_string(scale);
    m["checkpoint_every"] = std::to_string(checkpoint_every);
    m["log_every"] = std::to_string(log_every);
    m["feature_weights"] = feature_weights;
    return m;
  }

  /// Overrides fields named in `m`; unknown keys are rejected.
  void apply(const ConfigMap& m) {
    auto as_bool = [](const std::string& k, const std::string& v) {
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      throw ConfigError(k + ": expected a boolean, got '" + v + "'");
    };
    for (const auto& [k, v] : m) {
      try {
        if (k == "batch_size") batch_size = std::stoi(v);
        else if (k == "lr_patch") lr_patch = std::stoi(v);
        else if (k == "total_iters") total_iters = std::stoll(v);
        else if (k == "base_lr") base_lr = std::stod(v);
        else if (k == "lr_milestones") {
          lr_milestones.clear();
          std::istringstream is(v);
          for (std::string part; std::getline(is, part, ',');)
            if (!part.empty()) lr_milestones.push_back(std::stoll(part));
        } else if (k == "lr_factor") lr_factor = std::stod(v);
        else if (k == "adam_beta1") adam.beta1 = std::stod(v);
        else if (k == "adam_beta2") adam.beta2 = std::stod(v);
        else if (k == "adam_eps") adam.eps = std::stod(v);
        else if (k == "preset") preset = parse_loss_preset(v);
        else if (k == "cyclic_path") cyclic_path = as_bool(k, v);
        else if (k == "seed") seed = std::stoull(v);
        else if (k == "tiny") tiny = as_bool(k, v);
        else if (k == "scale") scale = std::stoi(v);
        else if (k == "checkpoint_every") checkpoint_every = std::stoll(v);
        else if (k == "log_every") log_every = std::stoll(v);
        else if (k == "feature_weights") feature_weights = v;
        else throw ConfigError("unknown config key '" + k + "'");
      } catch (const std::logic_error& e) {
        if (dynamic_cast<const ConfigError*>(&e)) throw;
        throw ConfigError(k + ": invalid value '" + v + "'");
      }
    }
  }

  static TrainConfig from_map(const ConfigMap& m, TrainConfig base) {
    base.apply(m);
    return base;
  }
  static TrainConfig from_map(const ConfigMap& m) { return from_map(m, TrainConfig()); }
};

// ---------------------------------------------------------------------------
// Data

struct TrainingPair {
  std::string name;
  Image lr;
  Image hr;
};

using Dataset = std::vector<TrainingPair>;

/// Smooth random scenes (sinusoid mixtures with a few flat rectangles),
/// degraded by bicubic downsampling plus Gaussian noise.
inline Dataset make_synthetic_dataset(int count, int hr_size, int scale, double sigma, std::uint64_t seed) {
  if (count < 1 || hr_size % scale != 0) throw ConfigError("synthetic dataset: bad size parameters");
  Rng rng(seed);
  Dataset ds;
  for (int i = 0; i < count; ++i) {
    Image hr(3, hr_size, hr_size);
    for (int c = 0; c < 3; ++c) {
      double fx[3], fy[3], ph[3], amp[3];
      for (int k = 0; k < 3; ++k) {
        fx[k] = rng.uniform(0.5, 6.0) * 2.0 * std::numbers::pi / hr_size;
        fy[k] = rng.uniform(0.5, 6.0) * 2.0 * std::numbers::pi / hr_size;
        ph[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        amp[k] = rng.uniform(0.05, 0.15);
      }
      const double base = rng.uniform(0.3, 0.7);
      for (int y = 0; y < hr_size; ++y)
        for (int x = 0; x < hr_size; ++x) {
          double v = base;
          for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(fx[k] * x + fy[k] * y + ph[k]);
          hr.at(c, y, x) = v;
        }
    }
    for (int r = 0; r < 3; ++r) {
      const int h = rng.uniform_int(hr_size / 8, hr_size / 3), w = rng.uniform_int(hr_size / 8, hr_size / 3);
      const int y0 = rng.uniform_int(0, hr_size - h), x0 = rng.uniform_int(0, hr_size - w);
      double col[3];
      for (double& v : col) v = rng.uniform(0.05, 0.95);
      for (int c = 0; c < 3; ++c)
        for (int y = y0; y < y0 + h; ++y)
          for (int x = x0; x < x0 + w; ++x) hr.at(c, y, x) = col[c];
    }
    hr = clip(std::move(hr));
    DegradationSpec spec{scale, sigma, std::nullopt, seed * 1000 + static_cast<std::uint64_t>(i)};
    ds.push_back({"synthetic_" + std::to_string(i), degrade(hr, spec), std::move(hr)});
  }
  return ds;
}

/// Pairs HR and LR images. With a manifest.csv in lr_dir its rows decide the
/// pairing; otherwise {stem}.png in hr_dir matches {stem}_lr.png or
/// {stem}.png in lr_dir.
inline Dataset load_dataset(const std::filesystem::path& hr_dir, const std::filesystem::path& lr_dir) {
  Dataset ds;
  const auto manifest = lr_dir / "manifest.csv";
  if (std::filesystem::exists(manifest)) {
    for (const auto& row : read_manifest(manifest))
      ds.push_back({row.hr_path.stem().string(), load_image(row.lr_path), load_image(row.hr_path)});
  } else {
    for (const auto& hr_path : list_png_files(hr_dir)) {
      auto lr_path = lr_dir / (hr_path.stem().string() + "_lr.png");
      if (!std::filesystem::exists(lr_path)) lr_path = lr_dir / hr_path.filename();
      if (!std::filesystem::exists(lr_path))
        throw TrainingError("no LR counterpart for " + hr_path.string() + " in " + lr_dir.string());
      ds.push_back({hr_path.stem().string(), load_image(lr_path), load_image(hr_path)});
    }
  }
  if (ds.empty()) throw TrainingError("empty dataset: no images under " + hr_dir.string());
  return ds;
}

// ---------------------------------------------------------------------------
// Trainer

inline constexpr const char* kStructureNoCycle = "y->G_SR->y_hat";
inline constexpr const char* kStructureCycle = "y->G_SR->y_hat->G_LR->y'";

template <class T = float>
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_((cfg.validate(), std::move(cfg))),
        gsr_(cfg_.gsr_config(), cfg_.seed * 16 + 1),
        dx_(cfg_.dx_config(), cfg_.seed * 16 + 2),
        glr_(cfg_.glr_config(), cfg_.seed * 16 + 3),
        dy_(cfg_.dy_config(), cfg_.seed * 16 + 4),
        opt_gsr_(gsr_.store(), cfg_.adam),
        opt_dx_(dx_.store(), cfg_.adam),
        opt_glr_(glr_.store(), cfg_.adam),
        opt_dy_(dy_.store(), cfg_.adam),
        rng_(cfg_.seed),
        phi_(cfg_.feature_weights.empty()
                 ? ConvFeatureExtractor<T>::fallback(cfg_.gsr_config().channels)
                 : ConvFeatureExtractor<T>::from_file(cfg_.feature_weights, cfg_.gsr_config().channels)) {}

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const noexcept { return cfg_; }
  long long iteration() const noexcept { return iter_; }
  double current_lr() const { return learning_rate_at(iter_, cfg_.base_lr, cfg_.lr_milestones, cfg_.lr_factor); }

  SRGenerator<T>& gsr() noexcept { return gsr_; }
  SRDiscriminator<T>& dx() noexcept { return dx_; }
  LRGenerator<T>& glr() noexcept { return glr_; }
  LRDiscriminator<T>& dy() noexcept { return dy_; }
  const SRGenerator<T>& gsr() const noexcept { return gsr_; }

  /// Parameter hashes keyed by network name.
  std::map<std::string, std::size_t> parameter_hashes() const {
    return {{"G_SR", gsr_.store().hash()}, {"D_x", dx_.store().hash()}, {"G_LR", glr_.store().hash()},
            {"D_y", dy_.store().hash()}};
  }

  /// Networks that the current configuration updates.
  std::vector<std::string> trained_networks() const {
    if (cfg_.cyclic_path) return {"G_SR", "D_x", "G_LR", "D_y"};
    return {"G_SR", "D_x"};
  }

  std::size_t trained_parameter_count() const {
    std::size_t n = gsr_.store().parameter_count() + dx_.store().parameter_count();
    if (cfg_.cyclic_path) n += glr_.store().parameter_count() + dy_.store().parameter_count();
    return n;
  }

  /// Draws batch_size random (LR, HR) patch pairs from `ds`.
  std::pair<Tensor<T>, Tensor<T>> sample_batch(const Dataset& ds) {
    if (ds.empty()) throw TrainingError("empty dataset");
    std::vector<Image> lrs, hrs;
    for (int b = 0; b < cfg_.batch_size; ++b) {
      const auto& pair = ds[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(ds.size()) - 1))];
      PatchPair p = extract_patch_pair(pair.hr, pair.lr, cfg_.lr_patch, cfg_.scale, rng_);
      lrs.push_back(std::move(p.lr));
      hrs.push_back(std::move(p.hr));
    }
    return {to_batch<T>(std::span<const Image>(lrs)), to_batch<T>(std::span<const Image>(hrs))};
  }

  LossBreakdown step(const Dataset& ds) {
    auto [y, x] = sample_batch(ds);
    return train_step(y, x);
  }

  /// One alternating iteration: discriminators on detached generator outputs,
  /// then the generators on the composite objective.
  LossBreakdown train_step(const Tensor<T>& y_batch, const Tensor<T>& x_batch) {
    update_discriminators(y_batch, x_batch);
    const LossBreakdown b = update_generators(y_batch, x_batch);
    ++iter_;
    return b;
  }

  /// Discriminator half of an iteration. Skipped when the adversarial weight
  /// is zero; D_y only trains on the cyclic path.
  void update_discriminators(const Tensor<T>& y_batch, const Tensor<T>& x_batch) {
    check_batch(y_batch, x_batch);
    if (!(cfg_.weights().gan > 0)) return;
    const double lr = current_lr();
    const Var<T> y = Var<T>::constant(y_batch);
    const std::vector<double> sigma = SRGenerator<T>::estimate_sigmas(y_batch);
    Tensor<T> sr_fixed, lr_rec_fixed;
    {
      NoGradGuard guard;
      sr_fixed = gsr_.forward(y, sigma).value();
      if (cfg_.cyclic_path) lr_rec_fixed = glr_.forward(Var<T>::constant(sr_fixed)).value();
    }
    update_discriminator(dx_, opt_dx_, Var<T>::constant(x_batch), Var<T>::constant(sr_fixed), lr, "D_x");
    if (cfg_.cyclic_path) update_discriminator(dy_, opt_dy_, y, Var<T>::constant(lr_rec_fixed), lr, "D_y");
  }

  /// Generator half of an iteration; discriminator parameters stay frozen.
  LossBreakdown update_generators(const Tensor<T>& y_batch, const Tensor<T>& x_batch) {
    check_batch(y_batch, x_batch);
    const double lr = current_lr();
    const LossWeights w = cfg_.weights();
    const bool cyclic = cfg_.cyclic_path;
    const Var<T> y = Var<T>::constant(y_batch);
    const Var<T> x = Var<T>::constant(x_batch);
    const std::vector<double> sigma = SRGenerator<T>::estimate_sigmas(y_batch);

    gsr_.store().zero_grad();
    glr_.store().zero_grad();
    GeneratorLossInputs<T> in;
    in.sr = gsr_.forward(y, sigma);
    in.hr = x;
    in.phi = &phi_;
    if (cyclic) {
      in.lr = y;
      in.lr_rec = glr_.forward(in.sr);
    }
    FrozenGuard freeze_dx(dx_.store()), freeze_dy(dy_.store());
    std::pair<Var<T>, LossBreakdown> result;
    try {
      if (w.gan > 0) {
        {
          NoGradGuard guard;
          in.sr_real_logits = dx_.forward(x);
          if (cyclic) in.lr_real_logits = dy_.forward(y);
        }
        in.sr_fake_logits = dx_.forward(in.sr);
        if (cyclic) in.lr_fake_logits = dy_.forward(*in.lr_rec);
      }
      result = composite_generator_loss(in, w);
    } catch (const LossError& e) {
      throw TrainingError("generator loss failed at iteration " + std::to_string(iter_) + ": " + e.what());
    }
    auto& [total, breakdown] = result;
    if (!breakdown.finite())
      throw TrainingError("non-finite generator loss at iteration " + std::to_string(iter_) + ": " +
                          breakdown.describe());
    if (total.requires_grad()) {
      total.backward();
      opt_gsr_.step(lr);
      if (cyclic) opt_glr_.step(lr);
    }
    return breakdown;
  }

  /// Mean PSNR / SSIM of full-image super-resolution over `ds`.
  std::pair<double, double> evaluate(const Dataset& ds) const {
    NoGradGuard guard;
    double p = 0, s = 0;
    for (const auto& pair : ds) {
      const Image sr = from_batch(gsr_.forward(Var<T>::constant(to_batch<T>(pair.lr))).value()).front();
      p += psnr(sr, pair.hr);
      s += ssim(sr, pair.hr);
    }
    return {p / static_cast<double>(ds.size()), s / static_cast<double>(ds.size())};
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.header["kind"] = "srcyc-train";
    ck.header["iteration"] = std::to_string(iter_);
    ck.header["rng"] = rng_.state();
    for (const auto& [k, v] : cfg_.to_map()) ck.header["train." + k] = v;
    gsr_.config().write(ck.header, "gsr.");
    dx_.config().write(ck.header, "dx.");
    glr_.config().write(ck.header, "glr.");
    dy_.config().write(ck.header, "dy.");
    save_store(ck, "gsr.", gsr_.store());
    save_store(ck, "dx.", dx_.store());
    save_store(ck, "glr.", glr_.store());
    save_store(ck, "dy.", dy_.store());
    opt_gsr_.save(ck, "adam.gsr.");
    opt_dx_.save(ck, "adam.dx.");
    opt_glr_.save(ck, "adam.glr.");
    opt_dy_.save(ck, "adam.dy.");
    return ck;
  }

  void save(const std::filesystem::path& path) const { to_checkpoint().save(path); }

  /// Restores networks, optimizer moments, iteration and RNG state. The
  /// checkpoint's architectures must match this trainer's.
  void load(const Checkpoint& ck) {
    if (GSRConfig::read(ck.header, "gsr.") != gsr_.config() || DxConfig::read(ck.header, "dx.") != dx_.config() ||
        GLRConfig::read(ck.header, "glr.") != glr_.config() || DyConfig::read(ck.header, "dy.") != dy_.config())
      throw CheckpointError("checkpoint architecture does not match the training configuration");
    load_store(ck, "gsr.", gsr_.store());
    load_store(ck, "dx.", dx_.store());
    load_store(ck, "glr.", glr_.store());
    load_store(ck, "dy.", dy_.store());
    opt_gsr_.load(ck, "adam.gsr.");
    opt_dx_.load(ck, "adam.dx.");
    opt_glr_.load(ck, "adam.glr.");
    opt_dy_.load(ck, "adam.dy.");
    iter_ = std::stoll(ck.header_value("iteration"));
    rng_.restore(ck.header_value("rng"));
  }

  void load(const std::filesystem::path& path) { load(Checkpoint::load(path)); }

 private:
  // Freezes a parameter store for the lifetime of the guard.
  struct FrozenGuard {
    explicit FrozenGuard(ParameterStore<T>& s) : store(s) { store.set_trainable(false); }
    ~FrozenGuard() { store.set_trainable(true); }
    FrozenGuard(const FrozenGuard&) = delete;
    FrozenGuard& operator=(const FrozenGuard&) = delete;
    ParameterStore<T>& store;
  };

  void check_batch(const Tensor<T>& y, const Tensor<T>& x) const {
    detail::require_4d(y.shape(), "train_step");
    detail::require_4d(x.shape(), "train_step");
    const auto& ys = y.shape();
    const auto& xs = x.shape();
    if (xs[0] != ys[0] || xs[1] != ys[1] || xs[2] != ys[2] * cfg_.scale || xs[3] != ys[3] * cfg_.scale)
      throw TrainingError("batch shapes " + to_string(ys) + " / " + to_string(xs) + " inconsistent with scale " +
                          std::to_string(cfg_.scale));
  }

  template <class Net>
  void update_discriminator(Net& d, Adam<T>& opt, const Var<T>& real, const Var<T>& fake, double lr,
                            const char* name) {
    d.store().zero_grad();
    Var<T> loss;
    try {
      loss = ragan_discriminator_loss(d.forward(real), d.forward(fake));
    } catch (const LossError& e) {
      throw TrainingError(std::string(name) + " loss failed at iteration " + std::to_string(iter_) + ": " + e.what());
    }
    if (!std::isfinite(static_cast<double>(loss.item())))
      throw TrainingError(std::string("non-finite ") + name + " loss at iteration " + std::to_string(iter_));
    loss.backward();
    opt.step(lr);
  }

  TrainConfig cfg_;
  SRGenerator<T> gsr_;
  SRDiscriminator<T> dx_;
  LRGenerator<T> glr_;
  LRDiscriminator<T> dy_;
  Adam<T> opt_gsr_, opt_dx_, opt_glr_, opt_dy_;
  Rng rng_;
  ConvFeatureExtractor<T> phi_;
  long long iter_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  std::vector<LossBreakdown> history;
};

struct TrainOptions {
  std::filesystem::path out_dir = "run";
  std::optional<std::filesystem::path> resume;
  std::ostream* progress = &std::cout;  // nullptr silences progress lines
};

/// Runs the trainer up to total_iters, writing loss.csv (one row per
/// iteration), periodic and milestone checkpoints, and final.ckpt.
template <class T = float>
TrainResult train(Trainer<T>& trainer, const Dataset& ds, const TrainOptions& opt) {
  if (ds.empty()) throw TrainingError("empty dataset");
  const TrainConfig& cfg = trainer.config();
  std::filesystem::create_directories(opt.out_dir);
  if (opt.resume) trainer.load(*opt.resume);

  TrainResult result;
  result.loss_csv = opt.out_dir / "loss.csv";
  const bool append = opt.resume.has_value() && std::filesystem::exists(result.loss_csv);
  std::ofstream csv(result.loss_csv, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw TrainingError(result.loss_csv.string() + ": cannot write");
  csv << std::setprecision(9);
  if (!append) csv << LossBreakdown::kCsvHeader << '\n';

  auto is_milestone = [&](long long it) {
    return std::find(cfg.lr_milestones.begin(), cfg.lr_milestones.end(), it) != cfg.lr_milestones.end();
  };
  while (trainer.iteration() < cfg.total_iters) {
    const double lr = trainer.current_lr();
    const LossBreakdown b = trainer.step(ds);
    const long long it = trainer.iteration();
    b.write_csv_row(csv, it);
    result.history.push_back(b);
    if (opt.progress && (cfg.log_every > 0 && (it % cfg.log_every == 0 || it == 1 || it == cfg.total_iters)))
      *opt.progress << "iter=" << it << " lr=" << lr << " total=" << b.total << std::endl;
    if ((cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) || is_milestone(it)) {
      std::ostringstream name;
      name << "ckpt_" << std::setw(6) << std::setfill('0') << it << ".ckpt";
      trainer.save(opt.out_dir / name.str());
    }
  }
  csv.flush();
  result.checkpoint = opt.out_dir / "final.ckpt";
  trainer.save(result.checkpoint);
  return result;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string variant;    // "no-cycle" or "cycle"
  bool cyclic = false;
  std::string structure;  // network structure string
  double psnr = 0;
  double ssim = 0;
  std::size_t gsr_params = 0;
  std::size_t trained_params = 0;
  std::vector<std::string> optimized;  // networks whose parameters changed
};

struct AblationReport {
  std::vector<AblationRow> rows;

  void write_csv(std::ostream& os) const {
    os << "variant,cyclic_path,structure,psnr,ssim,gsr_params,trained_params,optimized\n" << std::setprecision(10);
    for (const auto& r : rows) {
      std::string nets;
      for (const auto& n : r.optimized) nets += (nets.empty() ? "" : " ") + n;
      os << r.variant << ',' << (r.cyclic ? "yes" : "no") << ',' << r.structure << ',' << r.psnr << ',' << r.ssim << ','
         << r.gsr_params << ',' << r.trained_params << ',' << nets << '\n';
    }
  }

  void print_table(std::ostream& os) const {
    os << std::left << std::setw(10) << "variant" << std::setw(7) << "cycle" << std::setw(28) << "structure" << std::right
       << std::setw(10) << "PSNR" << std::setw(8) << "SSIM" << std::setw(12) << "G_SR params" << std::setw(14)
       << "trained" << "  optimized\n";
    for (const auto& r : rows) {
      std::string nets;
      for (const auto& n : r.optimized) nets += (nets.empty() ? "" : ",") + n;
      os << std::left << std::setw(10) << r.variant << std::setw(7) << (r.cyclic ? "yes" : "no") << std::setw(28)
         << r.structure << std::right << std::fixed << std::setprecision(3) << std::setw(10) << r.psnr
         << std::setprecision(4) << std::setw(8) << r.ssim << std::setw(12) << r.gsr_params << std::setw(14)
         << r.trained_params << "  " << nets << '\n'
         << std::defaultfloat;
    }
  }
};

/// Trains the no-cycle and cycle variants from identical seeds and budget and
/// scores both on `val`.
template <class T = float>
AblationReport run_ablation(TrainConfig cfg, const Dataset& train_set, const Dataset& val_set,
                            std::ostream* progress = nullptr) {
  AblationReport report;
  for (bool cyclic : {false, true}) {
    cfg.cyclic_path = cyclic;
    Trainer<T> trainer(cfg);
    const auto before = trainer.parameter_hashes();
    while (trainer.iteration() < cfg.total_iters) {
      const LossBreakdown b = trainer.step(train_set);
      if (progress && cfg.log_every > 0 && trainer.iteration() % cfg.log_every == 0)
        *progress << (cyclic ? "[cycle] " : "[no-cycle] ") << "iter=" << trainer.iteration() << " total=" << b.total
                  << '\n';
    }
    const auto after = trainer.parameter_hashes();
    AblationRow row;
    row.variant = cyclic ? "cycle" : "no-cycle";
    row.cyclic = cyclic;
    row.structure = cyclic ? kStructureCycle : kStructureNoCycle;
    std::tie(row.psnr, row.ssim) = trainer.evaluate(val_set);
    row.gsr_params = count_parameters(trainer.gsr());
    row.trained_params = trainer.trained_parameter_count();
    for (const char* name : {"G_SR", "D_x", "G_LR", "D_y"})
      if (before.at(name) != after.at(name)) row.optimized.push_back(name);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace srcyc
