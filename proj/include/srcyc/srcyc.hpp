// Umbrella header for the whole library.
#pragma once

#include "srcyc/autodiff.hpp"
#include "srcyc/bicubic.hpp"
#include "srcyc/checkpoint.hpp"
#include "srcyc/degradation.hpp"
#include "srcyc/image.hpp"
#include "srcyc/image_io.hpp"
#include "srcyc/inference.hpp"
#include "srcyc/layers.hpp"
#include "srcyc/losses.hpp"
#include "srcyc/metrics.hpp"
#include "srcyc/models.hpp"
#include "srcyc/noise_estimate.hpp"
#include "srcyc/ops.hpp"
#include "srcyc/optim.hpp"
#include "srcyc/random.hpp"
#include "srcyc/ssim.hpp"
#include "srcyc/tensor.hpp"
#include "srcyc/training.hpp"
