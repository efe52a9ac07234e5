#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "swisenet/gradcheck.hpp"
#include "swisenet/ops.hpp"

using namespace swisenet;

namespace {

Tensor<double> run_conv(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b, int stride,
                        Padding pad) {
  Tape<double> tape(false);
  return ops::conv2d(tape.constant(x), tape.constant(k), tape.constant(b), stride, pad).value();
}

template <typename F>
Tensor<double> unary(const Tensor<double>& x, F&& f) {
  Tape<double> tape(false);
  return f(tape.constant(x)).value();
}

}  // namespace

TEST_CASE("shape and tensor invariants") {
  CHECK(Shape{2, 3, 4, 5}.numel() == 120);
  CHECK(Shape{2, 150, 150, 64}.str() == "(2,150,150,64)");
  CHECK_THROWS_AS(Shape({0, 3}), ShapeError);
  CHECK_THROWS_AS(Shape({1, 2, 3, 4, 5}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, {1.f, 2.f, 3.f}), ShapeError);
  Tensor<float> t(Shape{2, 2}, {1.f, 2.f, 3.f, 4.f});
  CHECK(t.at(1, 0) == 3.f);
  CHECK_THROWS_AS(t.reshaped(Shape{3}), ShapeError);
  CHECK(t.reshaped(Shape{4})[3] == 4.f);
}

TEST_CASE("conv2d: 1x1 scaling kernel") {
  Tensor<double> x(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  Tensor<double> k(Shape{1, 1, 1, 1}, {2});
  auto y = run_conv(x, k, Tensor<double>(Shape{1}), 1, Padding::Same);
  CHECK(y.shape() == Shape{1, 2, 2, 1});
  CHECK(y.vec() == std::vector<double>{2, 4, 6, 8});
}

TEST_CASE("conv2d: centered delta kernel is the identity") {
  Rng rng(3);
  auto x = oracle::random_tensor<double>(rng, Shape{2, 6, 7, 3});
  Tensor<double> k(Shape{3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) k.at(1, 1, c, c) = 1.0;
  auto y = run_conv(x, k, Tensor<double>(Shape{3}), 1, Padding::Same);
  CHECK(y.vec() == x.vec());
}

TEST_CASE("conv2d: strided same-padded instance against nested-loop oracle") {
  Rng rng(11);
  auto x = oracle::random_tensor<double>(rng, Shape{1, 5, 5, 2});
  auto k = oracle::random_tensor<double>(rng, Shape{3, 3, 2, 3});
  auto b = oracle::random_tensor<double>(rng, Shape{3});
  auto y = run_conv(x, k, b, 2, Padding::Same);
  auto ref = oracle::conv2d(x, k, b.vec(), 2, true);
  REQUIRE(y.shape() == Shape{1, 3, 3, 3});
  CHECK(oracle::max_abs_diff(y, ref) <= 1e-6);
}

TEST_CASE("conv2d: random small instances match the oracle") {
  Rng rng(12345);
  for (int trial = 0; trial < 100; ++trial) {
    const auto h = static_cast<std::int64_t>(1 + rng.below(8));
    const auto w = static_cast<std::int64_t>(1 + rng.below(8));
    const auto c = static_cast<std::int64_t>(1 + rng.below(4));
    const auto oc = static_cast<std::int64_t>(1 + rng.below(4));
    const std::int64_t kk = rng.below(2) ? 3 : 1;
    const int stride = static_cast<int>(1 + rng.below(2));
    const bool same = rng.below(2) == 0 || kk > h || kk > w;
    const Padding pad = same ? Padding::Same : Padding::Valid;
    // Float-representable inputs, so both paths see the same numbers.
    auto x = oracle::random_tensor<double>(rng, Shape{1 + static_cast<std::int64_t>(rng.below(2)), h, w, c})
                 .cast<float>()
                 .cast<double>();
    auto k = oracle::random_tensor<double>(rng, Shape{kk, kk, c, oc}).cast<float>().cast<double>();
    auto b = oracle::random_tensor<double>(rng, Shape{oc}).cast<float>().cast<double>();
    auto ref = oracle::conv2d(x, k, b.vec(), stride, same);
    auto y64 = run_conv(x, k, b, stride, pad);
    REQUIRE(y64.shape() == ref.shape());
    CHECK(oracle::max_abs_diff(y64, ref) <= 1e-6);

    // float32 carries ~6e-8 relative rounding per operation, so its bound
    // scales with the output magnitude.
    Tape<float> tape(false);
    auto y = ops::conv2d(tape.constant(x.cast<float>()), tape.constant(k.cast<float>()),
                         tape.constant(b.cast<float>()), stride, pad);
    REQUIRE(y.shape() == ref.shape());
    const auto y32 = y.value().cast<double>();
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y32[i] - ref[i]) <= 1e-6 * std::max(1.0, std::abs(ref[i])));
  }
}

TEST_CASE("conv2d: linear in the input for zero bias") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = oracle::random_tensor<double>(rng, Shape{1, 6, 6, 3});
    auto y = oracle::random_tensor<double>(rng, Shape{1, 6, 6, 3});
    auto k = oracle::random_tensor<double>(rng, Shape{3, 3, 3, 2});
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    Tensor<double> combo(x.shape());
    for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a * x[i] + b * y[i];
    Tensor<double> zero(Shape{2});
    auto lhs = run_conv(combo, k, zero, 1, Padding::Same);
    auto cx = run_conv(x, k, zero, 1, Padding::Same);
    auto cy = run_conv(y, k, zero, 1, Padding::Same);
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (a * cx[i] + b * cy[i])) <= 1e-6);
  }
}

TEST_CASE("conv2d: output size rules and errors") {
  CHECK(conv_output_size(300, 7, 2, Padding::Same) == 150);
  CHECK(conv_output_size(5, 3, 2, Padding::Same) == 3);
  CHECK(conv_output_size(7, 3, 2, Padding::Valid) == 3);
  Tensor<double> x(Shape{1, 4, 4, 2});
  Tensor<double> b(Shape{1});
  CHECK_THROWS_AS(run_conv(x, Tensor<double>(Shape{3, 3, 3, 1}), b, 1, Padding::Same), ShapeError);
  CHECK_THROWS_AS(run_conv(x, Tensor<double>(Shape{2, 2, 2, 1}), b, 1, Padding::Same), ShapeError);
  CHECK_THROWS_AS(run_conv(x, Tensor<double>(Shape{3, 3, 2, 1}), b, 0, Padding::Same), ArgumentError);
  CHECK_THROWS_AS(run_conv(x, Tensor<double>(Shape{3, 3, 2, 1}), Tensor<double>(Shape{2}), 1, Padding::Same),
                  ShapeError);
}

TEST_CASE("maxpool2d") {
  Tensor<double> x(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  auto y = unary(x, [](Var<double> v) { return ops::maxpool2d(v, 2, 2); });
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 4);

  auto c = Tensor<double>::filled(Shape{1, 5, 5, 2}, 0.7);
  auto yc = unary(c, [](Var<double> v) { return ops::maxpool2d(v, 3, 2); });
  for (double v : yc.data()) CHECK(v == 0.7);

  CHECK(pool_output_size(150, 3, 2) == 74);
  CHECK_THROWS_AS(pool_output_size(2, 3, 2), ArgumentError);
  CHECK_THROWS_AS(unary(x, [](Var<double> v) { return ops::maxpool2d(v, 3, 1); }), ArgumentError);
}

TEST_CASE("global_avg_pool") {
  Tensor<double> x(Shape{1, 2, 2, 2}, {1, 5, 2, 5, 3, 5, 4, 5});
  auto y = unary(x, [](Var<double> v) { return ops::global_avg_pool(v); });
  CHECK(y.shape() == Shape{1, 2});
  CHECK(y[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(y[1] == 5.0);

  Tape<float> tape(false);
  auto big = ops::global_avg_pool(tape.constant(Tensor<float>(Shape{1, 74, 74, 256})));
  CHECK(big.shape() == Shape{1, 256});
}

TEST_CASE("dense") {
  CHECK(256 * 4 + 4 == 1028);
  Rng rng(7);
  auto x = oracle::random_tensor<double>(rng, Shape{2, 3});
  auto w = oracle::random_tensor<double>(rng, Shape{3, 2});
  auto b = oracle::random_tensor<double>(rng, Shape{2});
  Tape<double> tape(false);
  auto y = ops::dense(tape.constant(x), tape.constant(w), tape.constant(b)).value();
  auto ref = oracle::matmul(x.vec(), w.vec(), 2, 3, 2);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) CHECK(std::abs(y.at(r, c) - (ref[r * 2 + c] + b[c])) <= 1e-9);

  Tensor<double> eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  auto in = oracle::random_tensor<double>(rng, Shape{4, 3});
  auto same = ops::dense(tape.constant(in), tape.constant(eye), tape.constant(Tensor<double>(Shape{3})));
  CHECK(same.value().vec() == in.vec());

  CHECK_THROWS_AS(ops::dense(tape.constant(x), tape.constant(Tensor<double>(Shape{2, 2})), tape.constant(b)),
                  ShapeError);
}

TEST_CASE("activations: point values") {
  Tensor<double> pts(Shape{3}, {0.0, -3.5, 2.25});
  auto r = unary(pts, [](Var<double> v) { return ops::relu(v); });
  CHECK(r.vec() == std::vector<double>{0.0, 0.0, 2.25});

  Tensor<double> xs(Shape{3}, {0.0, 1.0, -1.0});
  Tape<double> tape(false);
  auto beta = tape.constant(Tensor<double>::scalar(1.0));
  auto sw = ops::swish(tape.constant(xs), beta).value();
  CHECK(sw[0] == 0.0);
  CHECK(std::abs(sw[1] - 0.7310585786) <= 1e-9);
  CHECK(std::abs(sw[2] + 0.2689414214) <= 1e-9);

  auto sr = ops::swish_relu(tape.constant(xs), 0.5, beta).value();
  CHECK(sr[0] == 0.0);
  CHECK(std::abs(sr[1] - 0.8655292893) <= 1e-9);
  CHECK(std::abs(sr[2] + 0.1344707107) <= 1e-9);
  CHECK_THROWS_AS(ops::swish_relu(tape.constant(xs), 1.5, beta), ArgumentError);
  CHECK_THROWS_AS(ops::swish_relu(tape.constant(xs), -0.1, beta), ArgumentError);

  auto sg = unary(xs, [](Var<double> v) { return ops::sigmoid(v); });
  CHECK(sg[0] == 0.5);
  CHECK(std::abs(sg[1] - 0.7310585786) <= 1e-9);
}

TEST_CASE("activations: properties") {
  Rng rng(99);
  auto x = oracle::random_tensor<double>(rng, Shape{64}, -6.0, 6.0);
  Tape<double> tape(false);
  auto xv = tape.constant(x);
  auto beta = tape.constant(Tensor<double>::scalar(rng.uniform(0.2, 3.0)));
  auto relu = ops::relu(xv).value();
  auto swish = ops::swish(xv, beta).value();
  auto a0 = ops::swish_relu(xv, 0.0, beta).value();
  auto a1 = ops::swish_relu(xv, 1.0, beta).value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(a0[i] - relu[i]) <= 1e-12);
    CHECK(std::abs(a1[i] - swish[i]) <= 1e-12);
  }

  auto sg = ops::sigmoid(xv).value();
  auto sgn = ops::sigmoid(tape.constant(Tensor<double>(x.shape(), [&] {
                            auto v = x.vec();
                            for (auto& e : v) e = -e;
                            return v;
                          }())))
                 .value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(sg[i] - (1.0 - sgn[i])) <= 1e-12);

  // Value at zero and continuity there.
  for (double alpha : {0.0, 0.3, 0.5, 1.0}) {
    Tensor<double> z(Shape{3}, {0.0, 1e-9, -1e-9});
    auto out = ops::swish_relu(tape.constant(z), alpha, beta).value();
    CHECK(out[0] == 0.0);
    CHECK(std::abs(out[1]) <= 1e-8);
    CHECK(std::abs(out[2]) <= 1e-8);
  }
}

TEST_CASE("activations stay finite for large inputs") {
  Tensor<float> big(Shape{4}, {1e4f, -1e4f, 88.f, -104.f});
  Tape<float> tape(false);
  auto beta = tape.constant(Tensor<float>::scalar(1.f));
  CHECK(ops::sigmoid(tape.constant(big)).value().all_finite());
  CHECK(ops::swish(tape.constant(big), beta).value().all_finite());
  CHECK(ops::swish_relu(tape.constant(big), 0.5, beta).value().all_finite());
  CHECK(stable_sigmoid(-1e4) == 0.0);
  CHECK(stable_sigmoid(1e4) == 1.0);
}

TEST_CASE("softmax_cross_entropy") {
  Tape<double> tape(false);
  std::vector<int> label0{0};
  auto flat = ops::softmax_cross_entropy(tape.constant(Tensor<double>(Shape{1, 4})), label0);
  CHECK(std::abs(flat.value().item() - 1.3862944) <= 1e-6);

  auto sat = ops::softmax_cross_entropy(tape.constant(Tensor<double>(Shape{1, 4}, {50, 0, 0, 0})), label0);
  CHECK(sat.value().item() <= 1e-9);
  CHECK(sat.value().item() >= 0.0);

  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto z = oracle::random_tensor<double>(rng, Shape{3, 4}, -3, 3);
    std::vector<int> labels{static_cast<int>(rng.below(4)), static_cast<int>(rng.below(4)),
                            static_cast<int>(rng.below(4))};
    auto loss = ops::softmax_cross_entropy(tape.constant(z), labels).value().item();
    CHECK(std::abs(loss - oracle::cross_entropy(z.vec(), labels, 4)) <= 1e-9);
  }

  std::vector<int> bad{4};
  CHECK_THROWS_AS(ops::softmax_cross_entropy(tape.constant(Tensor<double>(Shape{1, 4})), bad), ArgumentError);
  std::vector<int> neg{-1};
  CHECK_THROWS_AS(ops::softmax_cross_entropy(tape.constant(Tensor<double>(Shape{1, 4})), neg), ArgumentError);
}

TEST_CASE("backward: elementary graphs") {
  ParameterStore<double> store;
  auto& x = store.add("x", Tensor<double>(Shape{2}, {-1.0, 2.0}));
  auto& unused = store.add("unused", Tensor<double>(Shape{3}, {1.0, 2.0, 3.0}));
  store.zero_grad();
  {
    Tape<double> tape;
    auto loss = ops::sum(tape.parameter(x));
    tape.backward(loss);
    CHECK(x.grad.vec() == std::vector<double>{1.0, 1.0});
  }
  store.zero_grad();
  {
    Tape<double> tape;
    tape.parameter(unused);
    auto loss = ops::sum(ops::relu(tape.parameter(x)));
    tape.backward(loss);
    CHECK(x.grad.vec() == std::vector<double>{0.0, 1.0});
    CHECK(unused.grad.vec() == std::vector<double>{0.0, 0.0, 0.0});
  }
  {
    Tape<double> tape;
    auto v = ops::relu(tape.parameter(x));
    CHECK_THROWS_AS(tape.backward(v), ArgumentError);
  }
  {
    Tape<double> tape;
    auto a = tape.parameter(x);
    CHECK(tape.node(a.id()).kind == OpKind::Parameter);
    auto r = ops::relu(a);
    CHECK(tape.node(r.id()).inputs == std::vector<NodeId>{a.id()});
  }
}

TEST_CASE("backward: relu at exactly zero has zero gradient") {
  ParameterStore<double> store;
  auto& x = store.add("x", Tensor<double>(Shape{1}, {0.0}));
  Tape<double> tape;
  tape.backward(ops::sum(ops::relu(tape.parameter(x))));
  CHECK(x.grad[0] == 0.0);
}

TEST_CASE("grad_check: closed-form quadratic") {
  ParameterStore<double> store;
  auto& x = store.add("x", Tensor<double>(Shape{3}, {1.0, 2.0, 3.0}));
  std::vector<Parameter<double>*> params{&x};
  GradCheckOptions opts;
  opts.eps = 1e-5;
  auto report = grad_check(
      [&](Tape<double>& t) {
        auto v = t.parameter(x);
        return ops::sum(ops::mul(v, v));
      },
      params, opts);
  CHECK(x.grad.vec() == std::vector<double>{2.0, 4.0, 6.0});
  CHECK(report.max_rel_error() <= 1e-7);
  CHECK(x.value.vec() == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("grad_check: dense + sigmoid") {
  Rng rng(8);
  ParameterStore<double> store;
  auto& w = store.add("w", oracle::random_tensor<double>(rng, Shape{3, 2}));
  auto& b = store.add("b", oracle::random_tensor<double>(rng, Shape{2}));
  auto x = oracle::random_tensor<double>(rng, Shape{4, 3});
  std::vector<Parameter<double>*> params{&w, &b};
  auto report = grad_check(
      [&](Tape<double>& t) {
        return ops::sum(ops::sigmoid(ops::dense(t.constant(x), t.parameter(w), t.parameter(b))));
      },
      params);
  CHECK(report.max_rel_error() <= 1e-6);
}

TEST_CASE("grad_check: every primitive within 1e-4") {
  Rng rng(2024);
  ParameterStore<double> store;
  auto& x4 = store.add("x4", oracle::random_tensor<double>(rng, Shape{2, 5, 6, 3}));
  auto& k = store.add("k", oracle::random_tensor<double>(rng, Shape{3, 3, 3, 4}));
  auto& kb = store.add("kb", oracle::random_tensor<double>(rng, Shape{4}));
  auto& x2 = store.add("x2", oracle::random_tensor<double>(rng, Shape{3, 5}));
  auto& w = store.add("w", oracle::random_tensor<double>(rng, Shape{5, 4}));
  auto& wb = store.add("wb", oracle::random_tensor<double>(rng, Shape{4}));
  auto& beta = store.add("beta", Tensor<double>::scalar(1.3));
  auto& gamma = store.add("gamma", oracle::random_tensor<double>(rng, Shape{3}, 0.5, 1.5));
  auto& shift = store.add("shift", oracle::random_tensor<double>(rng, Shape{3}));
  auto& rm = store.add("rm", Tensor<double>(Shape{3}), false);
  auto& rv = store.add("rv", Tensor<double>::filled(Shape{3}, 1.0), false);
  auto& gates = store.add("gates", oracle::random_tensor<double>(rng, Shape{2, 3}));
  auto weights = oracle::random_tensor<double>(rng, Shape{2, 5, 6, 3});
  std::vector<int> labels{1, 3, 0};

  auto weighted = [&](Tape<double>& t, Var<double> v) {
    if (v.shape() == weights.shape()) return ops::sum(ops::mul(v, t.constant(weights)));
    return ops::sum(ops::mul(v, v));
  };

  struct Case {
    const char* name;
    LossProgram program;
    std::vector<Parameter<double>*> params;
  };
  std::vector<Case> cases{
      {"conv2d",
       [&](Tape<double>& t) {
         return ops::sum(ops::mul(ops::conv2d(t.parameter(x4), t.parameter(k), t.parameter(kb), 2, Padding::Same),
                                  ops::conv2d(t.parameter(x4), t.parameter(k), t.parameter(kb), 2, Padding::Same)));
       },
       {&x4, &k, &kb}},
      {"maxpool2d", [&](Tape<double>& t) { return weighted(t, ops::maxpool2d(t.parameter(x4), 3, 2)); }, {&x4}},
      {"global_avg_pool", [&](Tape<double>& t) { return weighted(t, ops::global_avg_pool(t.parameter(x4))); },
       {&x4}},
      {"global_max_pool", [&](Tape<double>& t) { return weighted(t, ops::global_max_pool(t.parameter(x4))); },
       {&x4}},
      {"dense",
       [&](Tape<double>& t) { return weighted(t, ops::dense(t.parameter(x2), t.parameter(w), t.parameter(wb))); },
       {&x2, &w, &wb}},
      {"swish", [&](Tape<double>& t) { return weighted(t, ops::swish(t.parameter(x4), t.parameter(beta))); },
       {&x4, &beta}},
      {"swish_relu",
       [&](Tape<double>& t) { return weighted(t, ops::swish_relu(t.parameter(x4), 0.5, t.parameter(beta))); },
       {&x4, &beta}},
      {"sigmoid", [&](Tape<double>& t) { return weighted(t, ops::sigmoid(t.parameter(x4))); }, {&x4}},
      {"batch_norm",
       [&](Tape<double>& t) {
         BatchNormOptions o;
         o.update_running_stats = false;
         return weighted(t, ops::batch_norm(t.parameter(x4), t.parameter(gamma), t.parameter(shift), rm, rv, o));
       },
       {&x4, &gamma, &shift}},
      {"scale_channels",
       [&](Tape<double>& t) { return weighted(t, ops::scale_channels(t.parameter(x4), t.parameter(gates))); },
       {&x4, &gates}},
      {"softmax_cross_entropy",
       [&](Tape<double>& t) {
         return ops::softmax_cross_entropy(ops::dense(t.parameter(x2), t.parameter(w), t.parameter(wb)), labels);
       },
       {&x2, &w, &wb}},
  };
  for (auto& c : cases) {
    auto report = grad_check(c.program, c.params);
    INFO(c.name);
    CHECK(report.max_rel_error() <= 1e-4);
  }
}

TEST_CASE("grad_check notices a corrupted backward rule") {
  Rng rng(4);
  ParameterStore<double> store;
  auto& w = store.add("w", oracle::random_tensor<double>(rng, Shape{3, 2}));
  auto& b = store.add("b", oracle::random_tensor<double>(rng, Shape{2}));
  auto x = oracle::random_tensor<double>(rng, Shape{2, 3});
  std::vector<Parameter<double>*> params{&w, &b};
  auto program = [&](Tape<double>& t) {
    return ops::sum(ops::sigmoid(ops::dense(t.constant(x), t.parameter(w), t.parameter(b))));
  };
  set_backward_fault(OpKind::Sigmoid);
  auto bad = grad_check(program, params);
  set_backward_fault(std::nullopt);
  auto good = grad_check(program, params);
  CHECK(bad.max_rel_error() > 0.1);
  CHECK(good.max_rel_error() <= 1e-6);
}

TEST_CASE("parameter store") {
  ParameterStore<float> store;
  store.add("a.weight", Tensor<float>(Shape{2, 3}));
  store.add("a.stat", Tensor<float>(Shape{3}), false);
  CHECK_THROWS_AS(store.add("a.weight", Tensor<float>(Shape{1})), ArgumentError);
  CHECK(store.count() == 9);
  CHECK(store.count(true) == 6);
  CHECK(store.find("missing") == nullptr);
  CHECK_THROWS_AS(store.get("missing"), ArgumentError);
}
