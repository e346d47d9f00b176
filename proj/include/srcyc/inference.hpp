// Single-image and directory super-resolution, with the optional 8-way
// geometric self-ensemble.
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "srcyc/checkpoint.hpp"
#include "srcyc/degradation.hpp"
#include "srcyc/image_io.hpp"
#include "srcyc/models.hpp"

namespace srcyc {

/// Writes only the SR generator and its architecture.
template <class T>
void save_generator(const SRGenerator<T>& gen, const std::filesystem::path& path) {
  Checkpoint ck;
  ck.header["kind"] = "srcyc-generator";
  gen.config().write(ck.header, "gsr.");
  save_store(ck, "gsr.", gen.store());
  ck.save(path);
}

/// Builds an SR generator from any checkpoint holding gsr.* entries (training
/// or generator-only). When `expected` is given the stored architecture must
/// equal it.
template <class T = float>
std::unique_ptr<SRGenerator<T>> load_generator(const Checkpoint& ck, const std::optional<GSRConfig>& expected = {}) {
  if (!ck.header.contains("gsr.feat_maps"))
    throw CheckpointError("checkpoint does not contain an SR generator");
  const GSRConfig cfg = GSRConfig::read(ck.header, "gsr.");
  if (expected && !(*expected == cfg))
    throw CheckpointError("checkpoint generator config (feat_maps=" + std::to_string(cfg.feat_maps) +
                          ", resblocks=" + std::to_string(cfg.resblocks) + ", scale=" + std::to_string(cfg.scale) +
                          ") does not match the requested one");
  auto gen = std::make_unique<SRGenerator<T>>(cfg);
  load_store(ck, "gsr.", gen->store());
  gen->set_training(false);
  return gen;
}

template <class T = float>
std::unique_ptr<SRGenerator<T>> load_generator(const std::filesystem::path& path,
                                               const std::optional<GSRConfig>& expected = {}) {
  return load_generator<T>(Checkpoint::load(path), expected);
}

// Reflection padding needs at least 3 pixels per side for the 5x5 layers.
inline constexpr int kMinInputSide = 3;

/// SR of one image with sigma estimated from the input. Inputs narrower than
/// kMinInputSide are extended by mirroring and the output cropped back.
template <class T>
Image super_resolve(const SRGenerator<T>& gen, const Image& lr) {
  if (lr.channels() != gen.config().channels)
    throw ImageError("generator expects " + std::to_string(gen.config().channels) + " channels, got " +
                     lr.shape_string());
  const int s = gen.config().scale;
  const int h = lr.height(), w = lr.width();
  const int ph = std::max(h, kMinInputSide), pw = std::max(w, kMinInputSide);
  Image input = lr;
  if (ph != h || pw != w) {
    input = Image(lr.channels(), ph, pw);
    for (int c = 0; c < lr.channels(); ++c)
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) input.at(c, y, x) = lr.at(c, symmetric_index(y, h), symmetric_index(x, w));
  }
  NoGradGuard guard;
  const std::vector<double> sigma{estimate_noise_sigma(lr)};
  const Var<T> out = gen.forward(Var<T>::constant(to_batch<T>(input)), sigma);
  Image sr = from_batch(out.value()).front();
  if (ph != h || pw != w) sr = crop(sr, 0, 0, h * s, w * s);
  return sr;
}

/// Mean of the 8 aligned branch outputs (transform, super-resolve, inverse
/// transform), reduced in all_transforms() order, before clipping.
template <class T>
Image super_resolve_ensemble_unclipped(const SRGenerator<T>& gen, const Image& lr) {
  std::optional<Image> acc;
  for (const GeomTransform t : all_transforms()) {
    const Image branch = apply_transform(super_resolve(gen, apply_transform(lr, t)), inverse(t));
    if (!acc) {
      acc = branch;
    } else {
      for (std::size_t i = 0; i < branch.size(); ++i) acc->values()[i] += branch.values()[i];
    }
  }
  for (double& v : acc->values()) v /= 8.0;
  return std::move(*acc);
}

template <class T>
Image super_resolve_ensemble(const SRGenerator<T>& gen, const Image& lr) {
  return clip(super_resolve_ensemble_unclipped(gen, lr));
}

struct InferenceSummary {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> failures;
};

/// Super-resolves a PNG file or every PNG in a directory into out_dir, keeping
/// file names.
template <class T>
InferenceSummary super_resolve_path(const SRGenerator<T>& gen, const std::filesystem::path& input,
                                    const std::filesystem::path& out_dir, bool ensemble) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(input)) {
    const auto listed = list_png_files(input);
    files.assign(listed.begin(), listed.end());
  } else {
    files.push_back(input);
  }
  std::filesystem::create_directories(out_dir);
  InferenceSummary summary;
  for (const auto& f : files) {
    try {
      const Image lr = load_image(f);
      const Image sr = ensemble ? super_resolve_ensemble(gen, lr) : super_resolve(gen, lr);
      const auto dst = out_dir / f.filename();
      save_image(sr, dst);
      summary.written.push_back(dst);
    } catch (const std::exception& e) {
      summary.failures.push_back(f.string() + ": " + e.what());
    }
  }
  return summary;
}

}  // namespace srcyc
