#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "train_oracles.hpp"
#include "swisenet/checkpoint.hpp"
#include "swisenet/dataset.hpp"
#include "swisenet/metrics.hpp"
#include "swisenet/optim.hpp"
#include "swisenet/parallel.hpp"
#include "swisenet/trainer.hpp"

using namespace swisenet;
namespace fs = std::filesystem;

namespace {

std::vector<int> labels_with_counts(const std::vector<std::size_t>& counts) {
  std::vector<int> out;
  for (std::size_t c = 0; c < counts.size(); ++c) out.insert(out.end(), counts[c], static_cast<int>(c));
  return out;
}

// Rice leaf per-class sample counts, in class-index order
// (bacterialblight, blast, brownspot, tungro).
const std::vector<std::size_t> kRiceCounts{1584, 1440, 1600, 1308};

ModelConfig tiny_model(int input) {
  ModelConfig mc = ModelConfig::reduced();
  mc.input_size = input;
  return mc;
}

}  // namespace

TEST_CASE("metrics: worked two-class example") {
  const std::vector<int> t{0, 0, 1, 1}, p{0, 1, 1, 1};
  const auto cm = confusion_from(t, p, 2);
  const auto m = compute_metrics(cm);
  CHECK(m.accuracy == 0.75);
  CHECK(m.precision == doctest::Approx((1.0 + 2.0 / 3.0) / 2).epsilon(1e-15));
  CHECK(m.recall == 0.75);
  CHECK(m.f1 == doctest::Approx((2.0 / 3.0 + 0.8) / 2).epsilon(1e-15));
  CHECK(std::abs(m.precision - 0.8333) < 1e-4);
  CHECK(std::abs(m.f1 - 0.7333) < 1e-4);
}

TEST_CASE("metrics: perfect predictions and the absent-class convention") {
  const std::vector<int> y{0, 1, 2, 3, 3, 2, 1, 0};
  const auto cm = confusion_from(y, y, 4);
  const auto m = compute_metrics(cm);
  CHECK(m.accuracy == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p) CHECK(cm.normalized(t, p) == (t == p ? 1.0 : 0.0));

  // Only class 2 present, all correct: its scores are 1, the others 0/0 -> 0.
  const std::vector<int> only(10, 2);
  const auto single = confusion_from(only, only, 4);
  const auto scores = class_scores(single);
  CHECK(scores[2].precision == 1.0);
  CHECK(scores[2].recall == 1.0);
  CHECK(scores[2].f1 == 1.0);
  CHECK(scores[0].f1 == 0.0);
  const auto sm = compute_metrics(single);
  CHECK(sm.accuracy == 1.0);
  CHECK(sm.precision == 0.25);
  CHECK(sm.f1 == 0.25);
  for (int p = 0; p < 4; ++p) CHECK(single.normalized(0, p) == 0.0);
}

TEST_CASE("metrics: evaluate agrees with the recount oracle on random vectors") {
  Rng rng(2024);
  int cases = 0;
  for (; cases < 1200; ++cases) {
    const int k = 2 + static_cast<int>(rng.below(5));
    const std::size_t n = 1 + rng.below(120);
    const bool macro = rng.below(4) != 0;
    // Skewed class draws so some classes are often absent.
    std::vector<int> t(n), p(n);
    const int absent = static_cast<int>(rng.below(static_cast<std::uint64_t>(k + 1)));
    for (std::size_t i = 0; i < n; ++i) {
      int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      if (c == absent) c = (c + 1) % k;
      t[i] = c;
      p[i] = rng.below(3) == 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(k))) : c;
    }
    const auto cm = confusion_from(t, p, k);
    const auto got = compute_metrics(cm, macro ? Averaging::Macro : Averaging::Micro);
    const auto want = oracle::recount(t, p, k, macro);
    REQUIRE(std::abs(got.accuracy - want.accuracy) <= 1e-12);
    REQUIRE(std::abs(got.precision - want.precision) <= 1e-12);
    REQUIRE(std::abs(got.recall - want.recall) <= 1e-12);
    REQUIRE(std::abs(got.f1 - want.f1) <= 1e-12);
    REQUIRE(cm.total() == static_cast<std::int64_t>(n));
    REQUIRE(got.accuracy == static_cast<double>(cm.trace()) / static_cast<double>(cm.total()));
    const auto norm = cm.normalized();
    for (int r = 0; r < k; ++r) {
      double row = 0.0;
      for (int c = 0; c < k; ++c) {
        REQUIRE(std::abs(norm[static_cast<std::size_t>(r * k + c)] - want.normalized[static_cast<std::size_t>(r * k + c)]) <= 1e-15);
        row += norm[static_cast<std::size_t>(r * k + c)];
      }
      if (cm.row_total(r) > 0) REQUIRE(std::abs(row - 1.0) <= 1e-9);
    }
    for (double v : {got.accuracy, got.precision, got.recall, got.f1}) REQUIRE((v >= 0.0 && v <= 1.0));
  }
  CHECK(cases >= 1000);
}

TEST_CASE("confusion matrix rendering") {
  ConfusionMatrix cm(4);
  for (int i = 0; i < 99; ++i) cm.add(3, 3);
  cm.add(3, 0);
  for (int c = 0; c < 3; ++c) cm.add(c, c);
  const auto text = cm.render(fixture::class_names());
  CHECK(text.find("tungro           0.01, 0, 0, 0.99") != std::string::npos);
  CHECK(text.find("bacterialblight  1, 0, 0, 0") != std::string::npos);

  const auto counts = cm.counts_csv(fixture::class_names());
  CHECK(counts.starts_with("true\\predicted,bacterialblight,blast,brownspot,tungro\n"));
  CHECK(counts.find("tungro,1,0,0,99\n") != std::string::npos);
  const auto norm = cm.normalized_csv(fixture::class_names());
  CHECK(norm.find("tungro,0.01,0,0,0.99\n") != std::string::npos);
  CHECK_THROWS_AS(cm.add(4, 0), ArgumentError);
  CHECK(averaging_from_string("micro") == Averaging::Micro);
  CHECK_THROWS_AS(averaging_from_string("weighted"), ArgumentError);
}

TEST_CASE("split arithmetic on the rice leaf class counts") {
  const auto labels = labels_with_counts(kRiceCounts);
  REQUIRE(labels.size() == 5932);

  SplitConfig cfg;
  auto s = split_indices(labels, 4, cfg);
  CHECK(s.train.size() == 4449);
  CHECK(s.val.size() == 1483);

  cfg.train_fraction = 0.70;
  s = split_indices(labels, 4, cfg);
  CHECK(s.train.size() == 4153);
  CHECK(s.val.size() == 1779);
  std::vector<std::size_t> per(4, 0);
  for (auto i : s.train) ++per[static_cast<std::size_t>(labels[i])];
  CHECK(per == std::vector<std::size_t>{1109, 1008, 1120, 916});

  for (double f : {0.1, 0.33, 0.5, 0.75, 0.9}) {
    cfg.train_fraction = f;
    const auto sp = split_indices(labels, 4, cfg);
    std::set<std::size_t> all(sp.train.begin(), sp.train.end());
    for (auto i : sp.val) CHECK(all.insert(i).second);
    CHECK(all.size() == labels.size());
    std::vector<std::size_t> tr(4, 0);
    for (auto i : sp.train) ++tr[static_cast<std::size_t>(labels[i])];
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(std::abs(static_cast<double>(tr[c]) - f * static_cast<double>(kRiceCounts[c])) <= 1.0);
      CHECK(tr[c] >= 1);
      CHECK(tr[c] < kRiceCounts[c]);
    }
  }
}

TEST_CASE("split: determinism, seeds, degenerate inputs") {
  const auto labels = labels_with_counts({30, 20, 25, 11});
  SplitConfig cfg;
  cfg.seed = 9;
  const auto a = split_indices(labels, 4, cfg);
  const auto b = split_indices(labels, 4, cfg);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  cfg.seed = 10;
  CHECK(split_indices(labels, 4, cfg).train != a.train);

  for (double f : {0.0, 1.0, -0.2, 1.5, std::nan("")}) {
    cfg.train_fraction = f;
    CHECK_THROWS_AS(split_indices(labels, 4, cfg), ArgumentError);
  }
  cfg.train_fraction = 0.99;
  const auto tiny = split_indices(labels_with_counts({2, 3, 2, 2}), 4, cfg);
  CHECK(tiny.val.size() == 4);  // every class keeps one validation sample
  CHECK_THROWS_AS(split_indices(labels_with_counts({1, 3}), 2, cfg), ArgumentError);

  cfg.stratified = false;
  cfg.train_fraction = 0.75;
  const auto flat = split_indices(labels, 4, cfg);
  CHECK(flat.train.size() == 65);  // round(86 * 0.75) = 64.5 -> 65
  CHECK(flat.train.size() + flat.val.size() == labels.size());
}

TEST_CASE("index_dataset: class folders, ordering, errors") {
  const auto root = fixture::scratch_dir("index");
  fixture::write_image_tree(root, {"Bacterial Blight", "blast", "Brown_Spot", "TUNGRO"}, 3, 1);
  fs::create_directories(root / "blast" / "nested");
  fs::copy_file(root / "blast" / "img_0.png", root / "blast" / "nested" / "a.png");
  { std::ofstream(root / "blast" / "notes.txt") << "not an image"; }

  const auto idx = index_dataset(root, fixture::class_names());
  CHECK(idx.class_names == fixture::class_names());
  CHECK(idx.counts() == std::vector<std::size_t>{3, 4, 3, 3});
  CHECK(idx.size() == 13);
  CHECK(idx.samples[3].path.filename() == "img_0.png");
  CHECK(idx.samples[6].path.parent_path().filename() == "nested");
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (idx.samples[i].label == idx.samples[i - 1].label) CHECK(idx.samples[i - 1].path < idx.samples[i].path);
  }
  CHECK(normalize_class_name("Brown_Spot") == "brownspot");

  // Corrupt file: named, and every other file still indexed in the message list.
  { std::ofstream(root / "TUNGRO" / "broken.jpg") << "garbage"; }
  try {
    index_dataset(root, fixture::class_names());
    FAIL("expected a dataset error");
  } catch (const DatasetError& e) {
    REQUIRE(e.issues().size() == 1);
    CHECK(e.issues()[0].path.filename() == "broken.jpg");
  }
  fs::remove(root / "TUNGRO" / "broken.jpg");

  fs::remove_all(root / "Brown_Spot");
  try {
    index_dataset(root, fixture::class_names());
    FAIL("expected a dataset error");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("missing class 'brownspot'") != std::string::npos);
  }
  fs::create_directories(root / "brownspot");
  CHECK_THROWS_WITH_AS(index_dataset(root, fixture::class_names()), doctest::Contains("has no images"), DataError);
  CHECK_THROWS_AS(index_dataset(root / "nope", fixture::class_names()), DataError);
}

TEST_CASE("adam: closed-form first step, zero gradient, frozen parameters") {
  for (int pass = 0; pass < 2; ++pass) {
    ParameterStore<float> fs;
    auto& p = fs.add("p", Tensor<float>::scalar(1.0f));
    auto& frozen = fs.add("frozen", Tensor<float>::scalar(3.0f), false);
    p.grad = Tensor<float>::scalar(2.0f);
    frozen.grad = Tensor<float>::scalar(5.0f);
    OptimizerConfig cfg;
    Adam<float> adam(cfg);
    adam.step(fs);
    CHECK(std::abs(static_cast<double>(p.value.item()) - 0.99995) <= 1e-7);
    CHECK(frozen.value.item() == 3.0f);
    CHECK(adam.first_moment("frozen") == nullptr);
  }
  ParameterStore<double> ds;
  auto& q = ds.add("q", Tensor<double>::filled(Shape{3}, 0.5));
  q.grad = Tensor<double>(Shape{3});
  Adam<double> adam(OptimizerConfig{});
  adam.step(ds);
  for (double v : q.value.vec()) CHECK(v == 0.5);
  for (double v : adam.first_moment("q")->vec()) CHECK(v == 0.0);
  for (double v : adam.second_moment("q")->vec()) CHECK(v == 0.0);
}

TEST_CASE("adam: matches the scalar recurrence over many steps") {
  Rng rng(5);
  OptimizerConfig cfg;
  cfg.learning_rate = 1e-2;
  ParameterStore<double> ds;
  auto& w = ds.add("w", Tensor<double>(Shape{4}));
  std::vector<oracle::ScalarAdam> ref(4, {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon});
  std::vector<double> expect(4);
  for (std::size_t i = 0; i < 4; ++i) expect[i] = w.value[i] = rng.uniform(-1, 1);
  Adam<double> adam(cfg);
  for (int step = 0; step < 50; ++step) {
    w.grad = Tensor<double>(Shape{4});
    for (std::size_t i = 0; i < 4; ++i) {
      w.grad[i] = step % 7 == 3 ? 0.0 : rng.uniform(-3, 3);
      expect[i] = ref[i].step(expect[i], w.grad[i]);
    }
    adam.step(ds);
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(w.value[i] - expect[i]) <= 1e-12);
  CHECK(adam.steps() == 50);
}

TEST_CASE("optimizer: non-finite gradient, state round trip, sgd") {
  ParameterStore<float> ps;
  auto& a = ps.add("layer.a", Tensor<float>::filled(Shape{2, 2}, 1.0f));
  auto& b = ps.add("layer.b", Tensor<float>::filled(Shape{2}, 1.0f));
  a.grad = Tensor<float>::filled(Shape{2, 2}, 0.5f);
  b.grad = Tensor<float>::filled(Shape{2}, 0.5f);
  b.grad[1] = std::nanf("");
  Adam<float> adam(OptimizerConfig{});
  CHECK_THROWS_WITH_AS(adam.step(ps), doctest::Contains("'layer.b'"), NumericError);
  CHECK(a.value[0] == 1.0f);
  CHECK(adam.steps() == 0);

  b.grad[1] = -0.25f;
  adam.step(ps);
  adam.step(ps);
  const auto state = adam.export_state();
  CHECK(state.kind == "adam");
  CHECK(state.step == 2);
  REQUIRE(state.slots.size() == 4);
  CHECK(state.slots[0].name == "m/layer.a");
  CHECK(state.slots[3].name == "v/layer.b");

  Adam<float> restored(OptimizerConfig{});
  restored.import_state(state, ps);
  CHECK(restored.export_state().slots == state.slots);
  auto snapshot = a.value;
  adam.step(ps);
  const auto after_original = a.value;
  a.value = snapshot;
  restored.step(ps);
  CHECK(a.value.vec() == after_original.vec());

  Sgd<float> sgd(0.1);
  CHECK_THROWS_AS(sgd.import_state(state, ps), CheckpointError);
  a.value = Tensor<float>::filled(Shape{2, 2}, 1.0f);
  sgd.step(ps);
  CHECK(a.value[0] == doctest::Approx(0.95f));

  OptimizerConfig bad;
  bad.kind = "rmsprop";
  CHECK_THROWS_AS(make_optimizer<float>(bad), ArgumentError);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  CHECK(tc.learning_rate == 5e-5);
  CHECK(tc.epochs == 100);
  CHECK(tc.batch_size == 32);
  CHECK(tc.image_size == 300);
  CHECK(tc.alpha == 0.5);
  tc.epochs = 0;
  CHECK_THROWS_AS(tc.validate(), ArgumentError);
  tc.epochs = 1;
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), ArgumentError);
}

TEST_CASE("image folder source: preprocessing, content-hash cache") {
  const auto root = fixture::scratch_dir("source");
  fixture::write_image_tree(root, fixture::class_names(), 2, 3, 40);
  const auto idx = index_dataset(root, fixture::class_names());
  PreprocessConfig pc;
  pc.target_height = pc.target_width = 32;
  const auto cache = root / "cache";

  ImageFolderSource first(idx, pc, cache);
  std::vector<std::size_t> all(idx.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto b1 = load_batch(first, all);
  CHECK(b1.images.shape() == Shape{8, 32, 32, 3});
  CHECK(first.cache_misses() == 8);
  const auto direct = preprocess_pipeline(decode_image(idx.samples[5].path), pc).to_tensor();
  for (std::size_t i = 0; i < direct.size(); ++i) REQUIRE(b1.images.vec()[5 * direct.size() + i] == direct.vec()[i]);

  ImageFolderSource second(idx, pc, cache);
  const auto b2 = load_batch(second, all);
  CHECK(second.cache_hits() == 8);
  CHECK(second.cache_misses() == 0);
  CHECK(b2.images.vec() == b1.images.vec());
  CHECK(b2.labels == std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3});

  pc.sigma = 1.5;  // a different pipeline must not reuse those entries
  ImageFolderSource third(idx, pc, cache);
  load_batch(third, all);
  CHECK(third.cache_hits() == 0);
}

TEST_CASE("training: overfits a tiny synthetic set") {
  std::vector<Tensor<float>> imgs;
  std::vector<int> labels;
  fixture::solid_color_set(64, 4, 42, imgs, labels);
  InMemorySource data(imgs, labels);
  ModelConfig mc = ModelConfig::reduced();
  mc.bn_momentum = 0.9;
  SwiSENet<float> model(mc);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 4;
  tc.epochs = 60;
  tc.image_size = 64;
  int first_perfect = 0;
  std::size_t steps = 0;
  bool finite = true;
  TrainOptions opts;
  opts.on_epoch = [&](const EpochRecord& r) {
    if (r.split == "train" && r.metrics.accuracy == 1.0 && first_perfect == 0) first_perfect = r.epoch;
  };
  opts.on_step = [&](int, int, double loss) {
    ++steps;
    finite = finite && std::isfinite(loss);
  };
  const auto result = train(model, data, data, tc, opts);
  CHECK(steps == 60 * 4);
  CHECK(finite);
  CHECK(result.history.size() == 120);
  MESSAGE("first epoch at 100% train accuracy: " << first_perfect);
  CHECK(first_perfect >= 1);
  CHECK(first_perfect <= 200);
  const auto eval = evaluate(model, data, 16);
  CHECK(eval.metrics.accuracy == 1.0);
  for (int t = 0; t < 4; ++t) CHECK(eval.confusion.normalized(t, t) == 1.0);
}

TEST_CASE("training: strict-mode determinism, resume, checkpoints") {
  set_num_threads(1);
  std::vector<Tensor<float>> imgs;
  std::vector<int> labels;
  fixture::solid_color_set(32, 3, 7, imgs, labels, 0.3f);
  InMemorySource train_set(std::vector<Tensor<float>>(imgs.begin(), imgs.begin() + 10),
                           std::vector<int>(labels.begin(), labels.begin() + 10));
  InMemorySource val_set(std::vector<Tensor<float>>(imgs.begin() + 10, imgs.end()),
                         std::vector<int>(labels.begin() + 10, labels.end()));
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 4;  // 10 samples: batches of 4, 4, 2
  tc.epochs = 3;
  tc.image_size = 32;
  tc.seed = 11;

  auto run = [&](const fs::path& dir) {
    SwiSENet<float> model(tiny_model(32));
    TrainOptions o;
    o.out_dir = dir;
    return train(model, train_set, val_set, tc, o);
  };
  const auto a = fixture::scratch_dir("det_a");
  const auto b = fixture::scratch_dir("det_b");
  const auto ra = run(a);
  run(b);
  CHECK(ra.steps == 9);
  CHECK(fixture::slurp(a / "last.ckpt") == fixture::slurp(b / "last.ckpt"));
  CHECK(fixture::slurp(a / "metrics.csv") == fixture::slurp(b / "metrics.csv"));
  CHECK(fs::exists(a / "best.ckpt"));
  const auto csv = fixture::slurp(a / "metrics.csv");
  CHECK(csv.starts_with("epoch,split,loss,accuracy,precision,recall,f1\n1,train,"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  Checkpoint meta;
  load_checkpoint(a / "best.ckpt", nullptr, &meta);
  CHECK(static_cast<int>(meta.epoch) == ra.best_epoch);

  // Two epochs, then resume for the third: identical to the straight run.
  const auto c = fixture::scratch_dir("det_c");
  {
    SwiSENet<float> model(tiny_model(32));
    TrainOptions o;
    o.out_dir = c;
    auto two = tc;
    two.epochs = 2;
    train(model, train_set, val_set, two, o);
  }
  fs::copy_file(c / "last.ckpt", c / "epoch2.ckpt");
  Checkpoint e2;
  load_checkpoint(c / "epoch2.ckpt", nullptr, &e2);
  SwiSENet<float> model(tiny_model(32));
  TrainOptions o;
  o.out_dir = c;
  o.resume_from = c / "epoch2.ckpt";
  const auto rc = train(model, train_set, val_set, tc, o);
  CHECK(rc.first_epoch == 3);
  CHECK(rc.steps == 9);
  CHECK(fixture::slurp(c / "last.ckpt") == fixture::slurp(a / "last.ckpt"));
  CHECK(fixture::slurp(c / "metrics.csv") == fixture::slurp(a / "metrics.csv"));
  Checkpoint e3;
  load_checkpoint(c / "last.ckpt", nullptr, &e3);
  CHECK(e3.optimizer->step == 9);
  CHECK(e2.optimizer->step == 6);
  set_num_threads(0);
}

TEST_CASE("training: non-finite values are reported with their location") {
  std::vector<Tensor<float>> imgs;
  std::vector<int> labels;
  fixture::solid_color_set(32, 1, 3, imgs, labels);
  InMemorySource data(imgs, labels);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.image_size = 32;
  SwiSENet<float> model(tiny_model(32));
  model.params().get("dense.bias").value[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_WITH_AS(train(model, data, data, tc), doctest::Contains("epoch 1, batch 0"), NumericError);

  SwiSENet<float> wrong(tiny_model(64));
  CHECK_THROWS_AS(train(wrong, data, data, tc), ShapeError);
}
