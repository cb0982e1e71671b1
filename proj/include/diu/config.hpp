#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "diu/backbone.hpp"
#include "diu/synthdata.hpp"
#include "diu/trainer.hpp"

namespace diu {

// The one declarative document an experiment runs from. Image size comes
// from the network section; the dataset renders whatever the network eats.
// All randomness flows from `seed`; subsystems derive their own labeled
// streams from it.
struct ExperimentConfig {
  std::string name = "experiment";
  uint64_t seed = 0;
  std::string out_dir;  // defaults to runs/<name>

  NetworkConfig network;  // seed field unused here; roles derive their own

  int n_identities = 40;
  int n_samples = 20;
  int n_folds = 5;
  double source_noise_sigma = 0.05;

  double target_mix_angle = 2.0;
  bool target_invert = true;
  double target_blur_sigma = 1.0;
  double target_noise_sigma = 0.05;

  LossConfig loss;
  OptimizerConfig optimizer;
  TrainConfig teacher;  // CE stage; loss/genuine_fraction/diu_cutoff unused
  TrainConfig diu;

  static ExperimentConfig from_toml_text(const std::string& text);
  static ExperimentConfig from_toml_file(const std::filesystem::path& path);

  // Fully-resolved view (defaults expanded) written next to every run.
  nlohmann::ordered_json resolved_json() const;

  // Derived dataset description: seed = dataset_seed(root), dims from network.
  DatasetConfig dataset_config() const;

  std::filesystem::path resolved_out_dir() const;

  void validate() const;
};

}  // namespace diu
