#include "swisenet/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>

#include <CLI11.hpp>

#include "swisenet/checkpoint.hpp"
#include "swisenet/gradient_suite.hpp"
#include "swisenet/image_io.hpp"
#include "swisenet/parallel.hpp"
#include "swisenet/plot.hpp"

namespace swisenet::cli {

namespace fs = std::filesystem;

namespace {

void apply_threads(const RunConfig& cfg) { set_num_threads(cfg.strict ? 1 : cfg.threads); }

fs::path require_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("no dataset path given (set 'dataset' or pass --dataset)");
  std::error_code ec;
  if (!fs::is_directory(cfg.dataset, ec)) throw ConfigError("dataset path '" + cfg.dataset + "' is not a directory");
  return cfg.dataset;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("short write to " + path.string());
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

void print_metrics(std::ostream& out, const MetricsRow& m, bool with_reference) {
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %10s %10s\n", "metric", "value", "reference");
  out << line;
  const struct {
    const char* name;
    double value;
    double ref;
  } rows[] = {{"accuracy", m.accuracy, ReferenceScores::accuracy},
              {"precision", m.precision, ReferenceScores::precision},
              {"recall", m.recall, ReferenceScores::recall},
              {"f1", m.f1, ReferenceScores::f1}};
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-10s %10s %10s\n", r.name, percent(r.value).c_str(),
                  with_reference ? percent(r.ref).c_str() : "");
    out << line;
  }
  std::snprintf(line, sizeof line, "%-10s %10.4f\n", "loss", m.loss);
  out << line;
}

void write_plots(const fs::path& dir, const std::vector<EpochRecord>& history) {
  const struct {
    const char* key;
    const char* title;
    double MetricsRow::*field;
  } metrics[] = {{"accuracy", "Accuracy", &MetricsRow::accuracy},
                 {"precision", "Precision", &MetricsRow::precision},
                 {"recall", "Recall", &MetricsRow::recall},
                 {"f1", "F1 score", &MetricsRow::f1},
                 {"loss", "Loss", &MetricsRow::loss}};
  for (const auto& m : metrics) {
    PlotSeries tr{"train", "#1f77b4", {}, {}}, va{"validation", "#d62728", {}, {}};
    double top = 1.0;
    for (const auto& r : history) {
      auto& s = r.split == "train" ? tr : va;
      s.x.push_back(r.epoch);
      s.y.push_back(r.metrics.*m.field);
      top = std::max(top, r.metrics.*m.field);
    }
    const bool is_loss = std::string(m.key) == "loss";
    write_text(dir / ("plot_" + std::string(m.key) + ".svg"),
               line_chart_svg(std::string(m.title) + " per epoch", "epoch", m.title, {tr, va}, 0.0,
                              is_loss ? std::ceil(top * 10) / 10 : 1.0));
  }
}

}  // namespace

int cmd_preprocess(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  apply_threads(cfg);
  const auto root = require_dataset(cfg);
  const auto index = index_dataset(root, cfg.class_names, VerifyImages::None);
  const auto pc = cfg.preprocess_config();
  const fs::path out_dir = cfg.out_dir;
  const fs::path cache = cfg.cache_path();
  fs::create_directories(out_dir);

  ImageFolderSource source(index, pc, cache, 0);
  std::vector<std::string> failures(index.size());
  const std::size_t per = static_cast<std::size_t>(cfg.image_size) * static_cast<std::size_t>(cfg.image_size) * 3;
  parallel_for(0, static_cast<std::int64_t>(index.size()), 1, [&](std::int64_t lo, std::int64_t hi) {
    std::vector<float> buffer(per);
    for (std::int64_t i = lo; i < hi; ++i) {
      try {
        source.load(static_cast<std::size_t>(i), buffer.data());
      } catch (const DataError& e) {
        failures[static_cast<std::size_t>(i)] = e.what();
      }
    }
  });

  // Stage images for the first k readable files.
  const fs::path stages = out_dir / "stages";
  int written = 0;
  for (std::size_t i = 0; i < index.size() && written < cfg.stage_images; ++i) {
    if (!failures[i].empty()) continue;
    const auto& s = index.samples[i];
    const auto st = preprocess_stages(decode_image(s.path), pc);
    fs::create_directories(stages);
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%02d", written);
    const std::string base = std::string(prefix) + "_" + cfg.class_names[static_cast<std::size_t>(s.label)] + "_" +
                             s.path.stem().string();
    write_png(stages / (base + "_1_resized.png"), st.resized);
    write_png(stages / (base + "_2_equalized.png"), st.equalized);
    write_png(stages / (base + "_3_smoothed.png"), to_raw(st.smoothed));
    write_png(stages / (base + "_4_normalized.png"), to_raw(st.normalized.image, 255.0));
    ++written;
  }

  std::size_t failed = 0;
  for (const auto& f : failures) failed += f.empty() ? 0 : 1;
  out << "indexed " << index.size() << " images (";
  const auto counts = index.counts();
  for (std::size_t c = 0; c < counts.size(); ++c) out << (c ? ", " : "") << cfg.class_names[c] << " " << counts[c];
  out << ")\n";
  out << "cache " << cache.string() << ": " << source.cache_hits() << " reused, " << source.cache_misses()
      << " computed, " << failed << " failed\n";
  out << "stage images: " << written << " sets in " << stages.string() << "\n";
  if (failed) {
    err << failed << (failed == 1 ? " file" : " files") << " could not be processed:\n";
    for (std::size_t i = 0; i < failures.size(); ++i) {
      if (!failures[i].empty()) err << "  " << failures[i] << "\n";
    }
    return kExitData;
  }
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  cfg.validate();
  apply_threads(cfg);
  const auto root = require_dataset(cfg);
  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);
  write_text(out_dir / "config.effective", cfg.render());

  const auto index = index_dataset(root, cfg.class_names);
  const auto parts = split(index, cfg.split_config());
  out << "dataset: " << index.size() << " images, train " << parts.train.size() << ", val " << parts.val.size()
      << "\n";
  const auto pc = cfg.preprocess_config();
  ImageFolderSource train_set(parts.train, pc, cfg.cache_path());
  ImageFolderSource val_set(parts.val, pc, cfg.cache_path());

  SwiSENet<float> model(cfg.model_config());
  const TrainConfig tc = cfg.train_config();
  TrainOptions options;
  options.out_dir = out_dir;
  if (!cfg.checkpoint.empty()) options.resume_from = fs::path(cfg.checkpoint);
  options.on_epoch = [&](const EpochRecord& r) {
    char line[200];
    std::snprintf(line, sizeof line, "epoch %3d/%d %-5s loss %.4f  acc %.4f  prec %.4f  rec %.4f  f1 %.4f\n",
                  r.epoch, tc.epochs, r.split.c_str(), r.metrics.loss, r.metrics.accuracy, r.metrics.precision,
                  r.metrics.recall, r.metrics.f1);
    out << line << std::flush;
  };
  const auto result = train(model, train_set, val_set, tc, options);
  if (result.first_epoch > 1) out << "resumed at epoch " << result.first_epoch << "\n";
  if (cfg.plots) write_plots(out_dir, result.history);
  out << "best val accuracy " << percent(result.best_val_accuracy) << " at epoch " << result.best_epoch << "\n";
  out << "wrote " << (out_dir / "metrics.csv").string() << ", " << (out_dir / "last.ckpt").string() << ", "
      << (out_dir / "best.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  cfg.validate();
  apply_threads(cfg);
  const auto root = require_dataset(cfg);
  const fs::path out_dir = cfg.out_dir;
  const fs::path ckpt = cfg.checkpoint.empty() ? out_dir / "best.ckpt" : fs::path(cfg.checkpoint);
  Checkpoint meta;
  SwiSENet<float> model = load_checkpoint(ckpt, nullptr, &meta);
  const auto& mc = model.config();
  if (mc.class_names.size() != cfg.class_names.size()) {
    throw DataError("class mapping mismatch: checkpoint has " + std::to_string(mc.class_names.size()) +
                    " classes, config lists " + std::to_string(cfg.class_names.size()));
  }
  for (std::size_t c = 0; c < mc.class_names.size(); ++c) {
    if (normalize_class_name(mc.class_names[c]) != normalize_class_name(cfg.class_names[c])) {
      throw DataError("class mapping mismatch at index " + std::to_string(c) + ": checkpoint '" + mc.class_names[c] +
                      "', config '" + cfg.class_names[c] + "'");
    }
  }

  const auto index = index_dataset(root, mc.class_names);
  DatasetIndex chosen = index;
  if (cfg.eval_split != "all") {
    auto parts = split(index, cfg.split_config());
    chosen = cfg.eval_split == "train" ? std::move(parts.train) : std::move(parts.val);
  }
  auto pc = cfg.preprocess_config();
  pc.target_height = pc.target_width = mc.input_size;
  ImageFolderSource source(chosen, pc, cfg.cache_path());
  const TrainConfig tc = cfg.train_config();
  const auto r = evaluate(model, source, tc.batch_size, tc.averaging);

  out << "checkpoint " << ckpt.string() << " (epoch " << meta.epoch << "), split " << cfg.eval_split << ", "
      << chosen.size() << " images, " << to_string(tc.averaging) << " averaging\n";
  print_metrics(out, r.metrics, true);
  out << "normalized confusion matrix (rows: true class, columns: predicted)\n" << r.confusion.render(mc.class_names);

  fs::create_directories(out_dir);
  const std::string tag = "eval_" + cfg.eval_split;
  write_text(out_dir / (tag + "_metrics.csv"),
             metrics_csv_header() + "\n" + metrics_csv_row({static_cast<int>(meta.epoch), cfg.eval_split, r.metrics}) +
                 "\n");
  write_text(out_dir / (tag + "_confusion_counts.csv"), r.confusion.counts_csv(mc.class_names));
  write_text(out_dir / (tag + "_confusion_normalized.csv"), r.confusion.normalized_csv(mc.class_names));
  return kExitOk;
}

int cmd_summary(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  cfg.validate();
  const SwiSENet<float> model(cfg.model_config());
  out << "input (None," << cfg.image_size << "," << cfg.image_size << ",3)" << (cfg.reduced ? ", reduced widths" : "")
      << "\n";
  out << model.summarize().render();
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out, std::ostream& err) {
  GradSuiteOptions opts;
  if (seed != 0) opts.seed = seed;
  const auto result = run_gradient_suite(opts);
  out << result.render();
  if (result.passed()) return kExitOk;
  std::string failing;
  for (const auto& c : result.cases) {
    if (!c.passed) failing += (failing.empty() ? "" : ", ") + c.name;
  }
  err << "gradient check failed: " << failing << "\n";
  return kExitVerification;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SwiSENet paddy leaf disease classifier"};
  app.name("swisenet");
  app.require_subcommand(1);

  struct Overrides {
    std::string config, dataset, out_dir, checkpoint, split, fault;
    std::uint64_t seed = 0;
    int epochs = 0;
    bool reduced = false, strict = false;
  } o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value run configuration (schema_version = 1)");
    sub->add_option("--seed", o.seed, "override the seed");
    sub->add_flag("--strict", o.strict, "single-threaded, bit-reproducible execution");
    sub->add_flag("--reduced", o.reduced, "desk-scale model: narrow channels, 64x64 input");
    sub->add_option("--out", o.out_dir, "output directory");
  };
  auto* pre = app.add_subcommand("preprocess", "cache preprocessed tensors and write stage images");
  auto* tr = app.add_subcommand("train", "train and write checkpoints, metrics and plots");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint: metrics and confusion matrix");
  auto* su = app.add_subcommand("summary", "print the layer summary");
  auto* gc = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  for (auto* sub : {pre, tr, ev, su}) common(sub);
  for (auto* sub : {pre, tr, ev}) sub->add_option("--dataset", o.dataset, "dataset root, one folder per class");
  tr->add_option("--epochs", o.epochs, "override the epoch count");
  tr->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate (default <out>/best.ckpt)");
  ev->add_option("--split", o.split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}));
  gc->add_option("--seed", o.seed, "seed for the random test points");
  gc->add_option("--inject-fault", o.fault)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (gc->parsed()) {
      if (!o.fault.empty()) {
        std::string name = o.fault;
        for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        const auto kind = op_from_name(name);
        if (!kind) throw ConfigError("unknown op '" + o.fault + "' for --inject-fault");
        set_backward_fault(kind);
      }
      const int code = cmd_gradcheck(o.seed, out, err);
      set_backward_fault(std::nullopt);
      return code;
    }
    RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
    if (!o.dataset.empty()) cfg.dataset = o.dataset;
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (!o.checkpoint.empty()) cfg.checkpoint = o.checkpoint;
    if (!o.split.empty()) cfg.eval_split = o.split;
    if (o.seed != 0) cfg.seed = o.seed;
    if (o.epochs != 0) cfg.epochs = o.epochs;
    if (o.strict) cfg.strict = true;
    if (o.reduced) {
      cfg.reduced = true;
      cfg.image_size = 64;
    }
    if (pre->parsed()) return cmd_preprocess(cfg, out, err);
    if (tr->parsed()) return cmd_train(cfg, out, err);
    if (ev->parsed()) return cmd_eval(cfg, out, err);
    return cmd_summary(cfg, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ArgumentError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace swisenet::cli
