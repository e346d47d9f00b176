// Trains a tiny model for a few dozen iterations on generated data and
// compares it with plain bicubic upsampling.
#include <iostream>

#include "srcyc/srcyc.hpp"

int main(int argc, char** argv) {
  using namespace srcyc;
  TrainConfig cfg = TrainConfig::desk();
  cfg.total_iters = argc > 1 ? std::stoll(argv[1]) : 40;
  cfg.log_every = 10;

  const Dataset data = make_synthetic_dataset(8, 128, cfg.scale, 8.0, 11);
  Trainer<float> trainer(cfg);
  TrainOptions opt;
  opt.out_dir = "quickstart_run";
  train(trainer, data, opt);

  double bicubic_psnr = 0;
  for (const auto& pair : data) bicubic_psnr += psnr(clip(bicubic_upsample(pair.lr, cfg.scale)), pair.hr);
  bicubic_psnr /= static_cast<double>(data.size());

  const auto [model_psnr, model_ssim] = trainer.evaluate(data);
  std::cout << "bicubic PSNR " << bicubic_psnr << " dB\n"
            << "model   PSNR " << model_psnr << " dB, SSIM " << model_ssim << '\n'
            << "G_SR parameters: " << count_parameters(trainer.gsr()) << '\n';
}
