#include "swisenet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "swisenet/checkpoint.hpp"
#include "swisenet/image_io.hpp"
#include "swisenet/keyvalue.hpp"
#include "swisenet/parallel.hpp"
#include "swisenet/rng.hpp"

namespace swisenet {

namespace fs = std::filesystem;

InMemorySource::InMemorySource(std::vector<Tensor<float>> images, std::vector<int> labels)
    : images_(std::move(images)), labels_(std::move(labels)) {
  if (images_.size() != labels_.size()) throw ArgumentError("image and label counts differ");
  if (images_.empty()) throw ArgumentError("empty sample source");
  for (auto& img : images_) {
    if (img.rank() == 4 && img.shape()[0] == 1) img = img.reshaped(Shape{img.shape()[1], img.shape()[2], img.shape()[3]});
    if (img.rank() != 3 || img.shape()[0] != img.shape()[1] || img.shape()[2] != 3) {
      throw ShapeError("expected a square [S,S,3] image, got " + img.shape().str());
    }
    if (size_ == 0) size_ = static_cast<int>(img.shape()[0]);
    if (img.shape()[0] != size_) throw ShapeError("images differ in size");
  }
}

void InMemorySource::load(std::size_t i, float* dst) const {
  const auto& v = images_[i].vec();
  std::memcpy(dst, v.data(), v.size() * sizeof(float));
}

std::string preprocess_signature(const PreprocessConfig& cfg) {
  std::ostringstream s;
  s << "resize=" << cfg.resize << ";height=" << cfg.target_height << ";width=" << cfg.target_width
    << ";levels=" << cfg.levels << ";sigma=" << format_double(cfg.sigma) << ";radius=" << cfg.radius
    << ";adaptive=" << cfg.adaptive_sigma << ";adaptive_scale=" << format_double(cfg.adaptive_sigma_scale)
    << ";border=" << to_string(cfg.border);
  return s.str();
}

std::uint64_t cache_key(std::span<const std::uint8_t> file_bytes, const PreprocessConfig& cfg) {
  const std::string_view bytes(reinterpret_cast<const char*>(file_bytes.data()), file_bytes.size());
  return fnv1a(preprocess_signature(cfg), fnv1a(bytes));
}

ImageFolderSource::ImageFolderSource(DatasetIndex index, PreprocessConfig cfg, std::optional<fs::path> cache_dir,
                                     std::size_t memory_budget_bytes)
    : index_(std::move(index)),
      cfg_(cfg),
      cache_dir_(std::move(cache_dir)),
      budget_(memory_budget_bytes),
      memo_(index_.size()) {
  if (index_.samples.empty()) throw ArgumentError("empty sample source");
  if (!cfg_.resize || cfg_.target_height != cfg_.target_width) {
    throw ArgumentError("training images must be resized to a square");
  }
  if (cache_dir_) fs::create_directories(*cache_dir_);
}

void ImageFolderSource::load(std::size_t i, float* dst) const {
  const std::size_t n = static_cast<std::size_t>(cfg_.target_height) * static_cast<std::size_t>(cfg_.target_width) * 3;
  if (!memo_[i].empty()) {
    std::memcpy(dst, memo_[i].data(), n * sizeof(float));
    return;
  }
  const auto& path = index_.samples[i].path;
  const auto bytes = read_file(path);
  const std::uint64_t key = cache_key(bytes, cfg_);
  std::vector<float> values;
  fs::path cache_file;
  if (cache_dir_) {
    char name[32];
    std::snprintf(name, sizeof name, "%016llx.swsc", static_cast<unsigned long long>(key));
    cache_file = *cache_dir_ / name;
    if (auto hit = read_tensor_cache(cache_file, key); hit && hit->values.size() == n) {
      values = std::move(hit->values);
      ++hits_;
    }
  }
  if (values.empty()) {
    RawImage raw;
    try {
      raw = decode_image(bytes);
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
    const auto tensor = preprocess_pipeline(raw, cfg_).to_tensor();
    values = tensor.vec();
    ++misses_;
    if (cache_dir_) {
      write_tensor_cache(cache_file, key,
                         {"image", Shape{cfg_.target_height, cfg_.target_width, 3}, values});
    }
  }
  std::memcpy(dst, values.data(), n * sizeof(float));
  if (memo_bytes_.fetch_add(n * sizeof(float)) + n * sizeof(float) <= budget_) {
    memo_[i] = std::move(values);
  } else {
    memo_bytes_.fetch_sub(n * sizeof(float));
  }
}

Batch load_batch(const SampleSource& source, std::span<const std::size_t> indices) {
  const std::int64_t s = source.image_size();
  Batch b{Tensor<float>(Shape{static_cast<std::int64_t>(indices.size()), s, s, 3}), {}};
  const auto per = static_cast<std::size_t>(s * s * 3);
  float* base = b.images.vec().data();
  parallel_for(0, static_cast<std::int64_t>(indices.size()), 1, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t k = lo; k < hi; ++k) {
      source.load(indices[static_cast<std::size_t>(k)], base + static_cast<std::size_t>(k) * per);
    }
  });
  for (std::size_t i : indices) b.labels.push_back(source.label(i));
  return b;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be at least 1, got " + std::to_string(epochs));
  if (batch_size < 1) throw ArgumentError("batch_size must be positive");
  if (image_size < 8) throw ArgumentError("image_size must be at least 8");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0, 1]");
  optimizer_config().validate();
}

OptimizerConfig TrainConfig::optimizer_config() const {
  return {optimizer, learning_rate, beta1, beta2, epsilon};
}

EvalResult evaluate(const SwiSENet<float>& model, const SampleSource& source, int batch_size, Averaging averaging) {
  if (source.size() == 0) throw ArgumentError("cannot evaluate an empty set");
  if (batch_size < 1) throw ArgumentError("batch_size must be positive");
  const int k = model.config().num_classes();
  EvalResult r{{}, ConfusionMatrix(k), {}};
  double loss_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < source.size(); start += static_cast<std::size_t>(batch_size)) {
    idx.clear();
    for (std::size_t i = start; i < std::min(source.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    const Batch b = load_batch(source, idx);
    const Tensor<float> logits = model.infer(b.images);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      const auto row = static_cast<std::int64_t>(n);
      int best = 0;
      double zmax = logits.at(row, 0);
      for (int c = 1; c < k; ++c) {
        if (logits.at(row, c) > zmax) {
          zmax = logits.at(row, c);
          best = c;
        }
      }
      double se = 0.0;
      for (int c = 0; c < k; ++c) se += std::exp(static_cast<double>(logits.at(row, c)) - zmax);
      loss_sum += zmax + std::log(se) - static_cast<double>(logits.at(row, b.labels[n]));
      r.predictions.push_back(best);
      r.confusion.add(b.labels[n], best);
    }
  }
  r.metrics = compute_metrics(r.confusion, averaging);
  r.metrics.loss = loss_sum / static_cast<double>(source.size());
  return r;
}

std::string metrics_csv_header() { return "epoch,split,loss,accuracy,precision,recall,f1"; }

std::string metrics_csv_row(const EpochRecord& r) {
  return std::to_string(r.epoch) + "," + r.split + "," + format_double(r.metrics.loss) + "," +
         format_double(r.metrics.accuracy) + "," + format_double(r.metrics.precision) + "," +
         format_double(r.metrics.recall) + "," + format_double(r.metrics.f1);
}

namespace {

// Keeps rows up to `last_epoch` from an earlier run's metrics file and
// returns them; the file is rewritten so appends continue after them.
std::vector<EpochRecord> carry_over_metrics(const fs::path& file, int last_epoch) {
  std::vector<EpochRecord> kept;
  std::ifstream in(file);
  if (!in) return kept;
  std::string line;
  std::getline(in, line);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = parse_list(KeyValue{"metrics row", line, line_no});
    if (f.size() != 7) continue;
    auto field = [&](std::size_t i, const char* name) { return KeyValue{name, f[i], line_no}; };
    EpochRecord r;
    r.epoch = static_cast<int>(parse_int(field(0, "epoch")));
    if (r.epoch > last_epoch) continue;
    r.split = f[1];
    r.metrics = {parse_double(field(2, "loss")), parse_double(field(3, "accuracy")),
                 parse_double(field(4, "precision")), parse_double(field(5, "recall")), parse_double(field(6, "f1"))};
    kept.push_back(r);
  }
  in.close();
  std::ofstream out(file, std::ios::trunc);
  out << metrics_csv_header() << "\n";
  for (const auto& r : kept) out << metrics_csv_row(r) << "\n";
  return kept;
}

}  // namespace

TrainResult train(SwiSENet<float>& model, const SampleSource& train_set, const SampleSource& val_set,
                  const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw ArgumentError("train and val sets must be non-empty");
  if (train_set.image_size() != model.config().input_size || val_set.image_size() != model.config().input_size) {
    throw ShapeError("sample size " + std::to_string(train_set.image_size()) + " does not match model input " +
                     std::to_string(model.config().input_size));
  }
  auto optimizer = make_optimizer<float>(cfg.optimizer_config());
  TrainResult result;

  std::optional<fs::path> metrics_file;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    metrics_file = *options.out_dir / "metrics.csv";
  }

  if (options.resume_from) {
    Checkpoint meta;
    model = load_checkpoint(*options.resume_from, &model.config(), &meta);
    if (!meta.optimizer) {
      throw CheckpointError(CheckpointErrorKind::Malformed, "checkpoint has no optimizer state to resume from");
    }
    optimizer->import_state(*meta.optimizer, model.params());
    result.first_epoch = static_cast<int>(meta.epoch) + 1;
    result.steps = optimizer->steps();
    if (metrics_file) {
      result.history = carry_over_metrics(*metrics_file, static_cast<int>(meta.epoch));
      for (const auto& r : result.history) {
        if (r.split == "val" && r.metrics.accuracy > result.best_val_accuracy) {
          result.best_val_accuracy = r.metrics.accuracy;
          result.best_epoch = r.epoch;
        }
      }
    }
  } else if (metrics_file) {
    std::ofstream out(*metrics_file, std::ios::trunc);
    out << metrics_csv_header() << "\n";
  }

  const ForwardContext training{true, true};
  const std::size_t n = train_set.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = result.first_epoch; epoch <= cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    const auto order = rng.permutation(n);
    int batch_no = 0;
    for (std::size_t start = 0; start < n; start += bs, ++batch_no) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, n - start));
      const Batch b = load_batch(train_set, idx);
      model.params().zero_grad();
      Tape<float> tape;
      const Var<float> loss = ops::softmax_cross_entropy(model.forward(tape.constant(b.images), training), b.labels);
      const double value = loss.value().item();
      const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no);
      if (!std::isfinite(value)) throw NumericError("non-finite loss at " + where);
      tape.backward(loss);
      try {
        optimizer->step(model.params());
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + where);
      }
      ++result.steps;
      if (options.on_step) options.on_step(epoch, batch_no, value);
    }

    const EvalResult tr = evaluate(model, train_set, cfg.batch_size, cfg.averaging);
    const EvalResult va = evaluate(model, val_set, cfg.batch_size, cfg.averaging);
    const EpochRecord rows[2] = {{epoch, "train", tr.metrics}, {epoch, "val", va.metrics}};
    for (const auto& r : rows) {
      result.history.push_back(r);
      if (options.on_epoch) options.on_epoch(r);
    }
    if (metrics_file) {
      std::ofstream out(*metrics_file, std::ios::app);
      for (const auto& r : rows) out << metrics_csv_row(r) << "\n";
    }
    const bool improved = va.metrics.accuracy > result.best_val_accuracy;
    if (improved) {
      result.best_val_accuracy = va.metrics.accuracy;
      result.best_epoch = epoch;
    }
    if (options.out_dir) {
      const OptimizerState state = optimizer->export_state();
      save_checkpoint(model, *options.out_dir / "last.ckpt", static_cast<std::uint32_t>(epoch), &state);
      if (improved) save_checkpoint(model, *options.out_dir / "best.ckpt", static_cast<std::uint32_t>(epoch), &state);
    }
    if (options.stop_after && options.stop_after(epoch)) break;
  }
  return result;
}

}  // namespace swisenet
