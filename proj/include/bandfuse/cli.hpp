#pragma once

#include "bandfuse/encoder.hpp"
#include "bandfuse/segnet.hpp"
#include "bandfuse/synthetic.hpp"
#include "bandfuse/train.hpp"

#include <iosfwd>

namespace bandfuse {

/// Everything `train` needs, read from a key = value file. Lines starting
/// with '#' and [section] headers are ignored; unknown keys are errors.
struct TrainSetup {
  TrainConfig train;
  bool use_encoder = true;
  EncoderConfig encoder;
  SegNetConfig segnet;
  int qat_steps = 0;
  double qat_lr = 1e-4;
  double val_fraction = 0.2;
  int log_every = 10;
  std::size_t synthetic_tiles = 96;
  SyntheticOptions synthetic;
};

TrainSetup parse_train_setup(std::istream& in);

/// Exit codes: 0 success, 2 invalid input or usage, 1 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bandfuse
