#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "swisenet/dataset.hpp"
#include "swisenet/metrics.hpp"
#include "swisenet/model.hpp"
#include "swisenet/optim.hpp"
#include "swisenet/preprocess.hpp"

namespace swisenet {

/// Indexed collection of labelled, model-ready images of one size.
class SampleSource {
 public:
  virtual ~SampleSource() = default;

  virtual std::size_t size() const = 0;
  virtual int label(std::size_t i) const = 0;
  virtual int image_size() const = 0;
  // Writes image i as S*S*3 floats (HWC) to dst. Safe to call concurrently
  // for distinct i.
  virtual void load(std::size_t i, float* dst) const = 0;
};

class InMemorySource final : public SampleSource {
 public:
  // Each image is [S,S,3] or [1,S,S,3].
  InMemorySource(std::vector<Tensor<float>> images, std::vector<int> labels);

  std::size_t size() const override { return labels_.size(); }
  int label(std::size_t i) const override { return labels_[i]; }
  int image_size() const override { return size_; }
  void load(std::size_t i, float* dst) const override;

 private:
  std::vector<Tensor<float>> images_;
  std::vector<int> labels_;
  int size_ = 0;
};

// Canonical text of a preprocessing config; part of every cache key.
std::string preprocess_signature(const PreprocessConfig& cfg);

// Content hash of the file bytes mixed with the preprocessing signature.
std::uint64_t cache_key(std::span<const std::uint8_t> file_bytes, const PreprocessConfig& cfg);

/// Decodes and preprocesses files on demand. With a cache directory, each
/// result is stored under its cache_key and reused on later loads. Decoded
/// tensors are also kept in memory up to `memory_budget_bytes`.
class ImageFolderSource final : public SampleSource {
 public:
  ImageFolderSource(DatasetIndex index, PreprocessConfig cfg, std::optional<std::filesystem::path> cache_dir = {},
                    std::size_t memory_budget_bytes = std::size_t{1} << 30);

  std::size_t size() const override { return index_.size(); }
  int label(std::size_t i) const override { return index_.samples[i].label; }
  int image_size() const override { return cfg_.target_height; }
  void load(std::size_t i, float* dst) const override;

  const DatasetIndex& index() const { return index_; }
  // Loads served from the on-disk cache / recomputed from the image file.
  std::size_t cache_hits() const { return hits_.load(); }
  std::size_t cache_misses() const { return misses_.load(); }

 private:
  DatasetIndex index_;
  PreprocessConfig cfg_;
  std::optional<std::filesystem::path> cache_dir_;
  std::size_t budget_;
  mutable std::vector<std::vector<float>> memo_;
  mutable std::atomic<std::size_t> memo_bytes_{0};
  mutable std::atomic<std::size_t> hits_{0};
  mutable std::atomic<std::size_t> misses_{0};
};

// [indices.size(), S, S, 3] batch plus labels, loaded in parallel.
struct Batch {
  Tensor<float> images;
  std::vector<int> labels;
};
Batch load_batch(const SampleSource& source, std::span<const std::size_t> indices);

struct TrainConfig {
  double learning_rate = 5e-5;
  int epochs = 100;
  int batch_size = 32;
  int image_size = 300;
  std::uint64_t seed = 42;
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double alpha = 0.5;
  Averaging averaging = Averaging::Macro;

  void validate() const;
  OptimizerConfig optimizer_config() const;
};

struct EvalResult {
  MetricsRow metrics;
  ConfusionMatrix confusion;
  std::vector<int> predictions;
};

/// Inference-mode pass over the whole source: mean cross-entropy, argmax
/// predictions, confusion matrix and averaged scores.
EvalResult evaluate(const SwiSENet<float>& model, const SampleSource& source, int batch_size = 32,
                    Averaging averaging = Averaging::Macro);

struct EpochRecord {
  int epoch = 0;  // 1-based
  std::string split;
  MetricsRow metrics;
};

// "epoch,split,loss,accuracy,precision,recall,f1"
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRecord& record);

struct TrainOptions {
  // Receives metrics.csv (appended), last.ckpt and best.ckpt when set.
  std::optional<std::filesystem::path> out_dir;
  // Continue from a checkpoint written by an earlier run.
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const EpochRecord&)> on_epoch;
  // Called after every optimizer step with (epoch, batch, loss).
  std::function<void(int, int, double)> on_step;
  // Checked after each epoch's checkpoints are written; true ends training.
  std::function<bool(int)> stop_after;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int first_epoch = 1;
  int best_epoch = 0;
  double best_val_accuracy = -1.0;
  std::uint64_t steps = 0;
};

/// Per epoch: shuffle with a permutation seeded by (seed, epoch), step
/// through minibatches (the last one may be partial), then evaluate the
/// full train and val sources. The shuffle depends only on seed and epoch,
/// so a resumed run continues exactly where an uninterrupted one would.
/// A non-finite loss or gradient throws NumericError naming the epoch and
/// batch.
TrainResult train(SwiSENet<float>& model, const SampleSource& train_set, const SampleSource& val_set,
                  const TrainConfig& cfg, const TrainOptions& options = {});

}  // namespace swisenet
