// Flat key=value run configuration shared by every command. Unknown keys are
// rejected; numeric ranges are validated against the owning module's rules.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace lab {

struct RunConfig {
  std::string command;

  // paths
  std::string dataset, out, checkpoint, synthetic_dataset, predictions;

  // run shape
  std::uint64_t seed = 42;
  int epochs = 30;
  int batch = 8;
  int side = 32;
  int n_per_class = 100;
  int resamples = 10000;

  // optimization / loss weights
  double lr = 2e-4;
  double lambda = 10;
  double mu = 5;
  double gamma = 5;
  double tau = 0.5;
  double alpha_fuse = 0.7;
  double alpha_ema = 0.9;
  double distill_temp = 2.0;
  double threshold = 0.5;

  // screening calculator
  double se = 0.9950;
  double sp = 0.9722;
  std::vector<double> prevalences = {0.0002, 0.09, 0.308, 0.40};

  // modes
  std::string k_rule = "n25";        // n | n10 | n25 | n50
  std::string lambda_form = "linear";  // linear | cosine
  std::string attention = "sparse";  // sparse | dense
  std::string gen_adv = "nonsat";    // nonsat | literal
  int alg1_weighting = 0;
  int export_translated = 0;

  // architecture (desk scale)
  int patch = 2;
  int heads = 2;
  int d_teacher = 64;
  int d_student = 16;
  int stem_teacher = 16;
  int stem_student = 8;
  int base_channels = 8;
  int trunk_blocks = 2;
  int private_blocks = 2;
  int disc_base = 8;

  explicit RunConfig(std::string command = "");

  void set(const std::string& key, const std::string& value);
  void load_file(const std::string& path);
  void validate() const;
  // resolved configuration, sorted keys, one per line
  std::string echo() const;
};

}  // namespace lab
