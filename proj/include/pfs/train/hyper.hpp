#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "pfs/error.hpp"

namespace pfs::train {

/// Training hyperparameters. Defaults: k = 4, N = 25, lr 5e-4, batch 128.
struct Hyper {
  int k = 4;                  ///< mixture components
  int N = 25;                 ///< window history (N+1 inputs)
  int m = 64;                 ///< LSTM cells
  double learning_rate = 5e-4;
  int batch_size = 128;
  int steps = 5000;
  int eval_every = 250;       ///< held-out evaluation period in steps
  int eval_windows = 2048;    ///< cap on held-out windows per evaluation
  double holdout_fraction = 0.1;
  double clip_norm = 10.0;
  double input_noise = 0.3;   ///< std of noise added to the normalized wrench inputs during training
  std::uint64_t seed = 1;
  double temperature = 1.0;   ///< default sampling temperature at deployment
  int workers = 1;

  void validate() const {
    auto positive = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("hyper: ") + what);
    };
    positive(k >= 1, "k must be >= 1");
    positive(N >= 0, "N must be >= 0");
    positive(m >= 1, "m must be >= 1");
    positive(learning_rate > 0 && std::isfinite(learning_rate), "learning_rate must be > 0");
    positive(batch_size >= 1, "batch_size must be >= 1");
    positive(steps >= 0, "steps must be >= 0");
    positive(eval_every >= 1, "eval_every must be >= 1");
    positive(eval_windows >= 1, "eval_windows must be >= 1");
    positive(holdout_fraction >= 0 && holdout_fraction < 1, "holdout_fraction must be in [0, 1)");
    positive(clip_norm > 0, "clip_norm must be > 0");
    positive(input_noise >= 0 && std::isfinite(input_noise), "input_noise must be >= 0");
    positive(temperature >= 0 && std::isfinite(temperature), "temperature must be >= 0");
    positive(workers >= 1, "workers must be >= 1");
  }

  friend bool operator==(const Hyper&, const Hyper&) = default;
};

}  // namespace pfs::train
