#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "swisenet/dataset.hpp"
#include "swisenet/model.hpp"
#include "swisenet/preprocess.hpp"
#include "swisenet/trainer.hpp"

namespace swisenet {

inline constexpr int kRunConfigSchema = 1;

/// Everything a CLI run needs. Serialized as `key = value` lines with a
/// mandatory `schema_version`; unknown keys are rejected.
struct RunConfig {
  // paths
  std::string dataset;
  std::string out_dir = "runs/default";
  std::string checkpoint;
  std::string cache_dir;  // empty: <out_dir>/cache

  // model
  bool reduced = false;
  int image_size = 300;
  double alpha = 0.5;
  std::vector<std::string> class_names{"bacterialblight", "blast", "brownspot", "tungro"};
  // 0 keeps the preset's ratio: 16 for the full model, 4 for the reduced one.
  int se_reduction = 0;
  int ca_reduction = 0;
  double bn_momentum = 0.99;
  std::string hidden_activation = "swish_relu";

  // training
  double learning_rate = 5e-5;
  int epochs = 100;
  int batch_size = 32;
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 42;
  std::string averaging = "macro";

  // split
  double train_fraction = 0.75;
  bool stratified = true;
  std::string eval_split = "val";  // train | val | all

  // preprocessing
  int levels = 256;
  double sigma = 1.0;
  int radius = 2;
  bool adaptive_sigma = false;
  double adaptive_sigma_scale = 4.0;
  std::string border = "replicate";
  int stage_images = 4;

  // execution
  bool strict = false;
  int threads = 0;
  bool plots = true;

  /// Parses config text over the defaults. Throws ConfigError on a missing
  /// or unsupported schema_version, an unknown or repeated key, or a bad value.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  // Every key, one per line, in a fixed order; parse(render()) == *this.
  std::string render() const;
  // Throws ConfigError naming the offending key.
  void validate() const;

  std::filesystem::path cache_path() const;
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  SplitConfig split_config() const;
  PreprocessConfig preprocess_config() const;

  bool operator==(const RunConfig&) const = default;
};

}  // namespace swisenet
