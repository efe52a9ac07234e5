#include "swisenet/gradient_suite.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "swisenet/model.hpp"

namespace swisenet {

namespace {

Tensor<double> uniform(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

// Moves every parameter off its initial value so biases, betas and running
// statistics all take generic values.
void scramble(ParameterStore<double>& store, Rng& rng) {
  for (auto* p : store.all()) {
    const std::string& n = p->name;
    if (n.ends_with("moving_variance")) {
      for (auto& v : p->value.vec()) v = rng.uniform(0.5, 2.0);
    } else if (n.ends_with("moving_mean")) {
      for (auto& v : p->value.vec()) v = rng.uniform(-0.3, 0.3);
    } else if (n.ends_with("bn.gamma") || n.ends_with("act.beta")) {
      for (auto& v : p->value.vec()) v = rng.uniform(0.5, 1.5);
    } else if (n.ends_with(".weight") || n.ends_with(".kernel")) {
      for (auto& v : p->value.vec()) v *= 1.0 + 0.2 * rng.uniform(-1.0, 1.0);
    } else {
      for (auto& v : p->value.vec()) v = rng.uniform(-0.5, 0.5);
    }
  }
}

std::vector<Parameter<double>*> trainable(ParameterStore<double>& store, bool skip_conv_bias = false) {
  std::vector<Parameter<double>*> out;
  for (auto* p : store.all()) {
    if (!p->trainable) continue;
    if (skip_conv_bias && p->name.ends_with("conv.bias")) continue;
    out.push_back(p);
  }
  return out;
}

class Runner {
 public:
  explicit Runner(const GradSuiteOptions& o) : opts_(o) {}

  void check(const std::string& name, const LossProgram& program, std::vector<Parameter<double>*> params,
             std::size_t samples = 0, double eps = 0.0) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckOptions g;
    g.eps = eps > 0.0 ? eps : opts_.eps;
    g.max_elements_per_param = samples;
    g.seed = opts_.seed;
    GradSuiteCase c;
    c.name = name;
    c.report = grad_check(program, params, g);
    c.passed = c.report.passed(opts_.tolerance);
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.cases.push_back(std::move(c));
  }

  GradSuiteResult result;

 private:
  GradSuiteOptions opts_;
};

}  // namespace

bool GradSuiteResult::passed() const {
  for (const auto& c : cases)
    if (!c.passed) return false;
  return !cases.empty();
}

double GradSuiteResult::max_rel_error() const {
  double m = 0.0;
  for (const auto& c : cases) m = std::max(m, c.report.max_rel_error());
  return m;
}

std::string GradSuiteResult::render() const {
  std::string out;
  char line[256];
  for (const auto& c : cases) {
    for (const auto& p : c.report.params) {
      std::snprintf(line, sizeof line, "  %-28s %-52s max rel err %.3e (%zu checked; worst %+.6e vs %+.6e)\n",
                    c.name.c_str(), p.name.c_str(), p.max_rel_error, p.checked, p.analytic, p.numeric);
      out += line;
    }
    std::snprintf(line, sizeof line, "%s %-28s max rel err %.3e  %.2fs%s%s\n", c.passed ? "PASS" : "FAIL",
                  c.name.c_str(), c.report.max_rel_error(), c.seconds, c.note.empty() ? "" : "  ",
                  c.note.c_str());
    out += line;
  }
  std::snprintf(line, sizeof line, "overall: %s, max rel err %.3e, %.2fs\n", passed() ? "PASS" : "FAIL",
                max_rel_error(), seconds);
  out += line;
  return out;
}

GradSuiteResult run_gradient_suite(const GradSuiteOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  Runner run(options);
  Rng rng(options.seed);

  // Primitives under a random linear read-out.
  ParameterStore<double> prims;
  auto& x4 = prims.add("input", uniform(rng, Shape{2, 6, 5, 3}));
  auto& kernel = prims.add("conv.kernel", uniform(rng, Shape{3, 3, 3, 4}));
  auto& kbias = prims.add("conv.bias", uniform(rng, Shape{4}));
  auto& x2 = prims.add("features", uniform(rng, Shape{3, 5}));
  auto& w = prims.add("dense.weight", uniform(rng, Shape{5, 4}));
  auto& b = prims.add("dense.bias", uniform(rng, Shape{4}));
  auto& beta = prims.add("act.beta", Tensor<double>::scalar(rng.uniform(0.5, 1.5)));
  auto& gamma = prims.add("bn.gamma", uniform(rng, Shape{3}, 0.5, 1.5));
  auto& shift = prims.add("bn.beta", uniform(rng, Shape{3}));
  auto& rmean = prims.add("bn.moving_mean", Tensor<double>(Shape{3}), false);
  auto& rvar = prims.add("bn.moving_variance", Tensor<double>::filled(Shape{3}, 1.0), false);
  const auto read4 = uniform(rng, Shape{2, 6, 5, 3});
  const auto read_conv = uniform(rng, Shape{2, 3, 3, 4});
  const auto read2 = uniform(rng, Shape{3, 4});

  run.check(
      "conv2d",
      [&](Tape<double>& t) {
        auto y = ops::conv2d(t.parameter(x4), t.parameter(kernel), t.parameter(kbias), 2, Padding::Same);
        return ops::sum(ops::mul(y, t.constant(read_conv)));
      },
      {&x4, &kernel, &kbias});
  run.check(
      "dense",
      [&](Tape<double>& t) {
        auto y = ops::dense(t.parameter(x2), t.parameter(w), t.parameter(b));
        return ops::sum(ops::mul(y, t.constant(read2)));
      },
      {&x2, &w, &b});
  run.check(
      "batch_norm",
      [&](Tape<double>& t) {
        BatchNormOptions o;
        o.update_running_stats = false;
        auto y = ops::batch_norm(t.parameter(x4), t.parameter(gamma), t.parameter(shift), rmean, rvar, o);
        return ops::sum(ops::mul(y, t.constant(read4)));
      },
      {&x4, &gamma, &shift});
  run.check(
      "swish",
      [&](Tape<double>& t) { return ops::sum(ops::mul(ops::swish(t.parameter(x4), t.parameter(beta)), t.constant(read4))); },
      {&x4, &beta});
  run.check(
      "swish_relu",
      [&](Tape<double>& t) {
        return ops::sum(ops::mul(ops::swish_relu(t.parameter(x4), 0.5, t.parameter(beta)), t.constant(read4)));
      },
      {&x4, &beta});

  // Blocks on 2x6x6x4 inputs.
  const auto bx = uniform(rng, Shape{2, 6, 6, 4});
  const auto bread = uniform(rng, Shape{2, 6, 6, 4});
  auto block_loss = [&](auto&& forward) {
    return [&, forward](Tape<double>& t) { return ops::sum(ops::mul(forward(t.constant(bx)), t.constant(bread))); };
  };
  ParameterStore<double> se_store;
  SEBlock<double> se("se_block", SEBlockConfig{4, 2}, se_store, rng);
  scramble(se_store, rng);
  run.check("se_block", block_loss([&](Var<double> v) { return se.forward(v); }), trainable(se_store));

  ParameterStore<double> ca_store;
  ChannelAttention<double> ca("channel_attention", ChannelAttentionConfig{4, 2}, ca_store, rng);
  scramble(ca_store, rng);
  run.check("channel_attention", block_loss([&](Var<double> v) { return ca.forward(v); }), trainable(ca_store));

  ConvSEBlockConfig cs;
  cs.conv.in_channels = 4;
  cs.conv.out_channels = 4;
  cs.se = SEBlockConfig{4, 2};
  cs.ca = ChannelAttentionConfig{4, 2};
  ParameterStore<double> cs_store;
  ConvSEBlock<double> conv_se("conv_se_block", cs, cs_store, rng);
  scramble(cs_store, rng);
  const ForwardContext infer;
  const ForwardContext batch_stats{true, false};
  run.check("conv_se_block", block_loss([&](Var<double> v) { return conv_se.forward(v, infer); }),
            trainable(cs_store));
  run.check("conv_se_block[batch stats]", block_loss([&](Var<double> v) { return conv_se.forward(v, batch_stats); }),
            trainable(cs_store, true));
  {
    // Under batch statistics the conv bias is cancelled by the batch mean:
    // its gradient must vanish rather than match to a relative tolerance.
    auto& bias = cs_store.get("conv_se_block.conv_block.conv.bias");
    std::vector<Parameter<double>*> one{&bias};
    GradCheckOptions g;
    g.eps = options.eps;
    const auto t1 = std::chrono::steady_clock::now();
    GradSuiteCase c;
    c.name = "conv_se_block[bias cancels]";
    c.report = grad_check(block_loss([&](Var<double> v) { return conv_se.forward(v, batch_stats); }), one, g);
    double worst = 0.0;
    for (double v : bias.grad.vec()) worst = std::max(worst, std::abs(v));
    const double numeric = std::abs(c.report.params.front().numeric);
    c.passed = worst <= 1e-12 && numeric <= 1e-9;
    char note[128];
    std::snprintf(note, sizeof note, "|analytic| %.1e, |numeric| %.1e (expected 0)", worst, numeric);
    c.note = note;
    c.report.params.front().max_rel_error = 0.0;
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    run.result.cases.push_back(std::move(c));
  }

  // Reduced end-to-end model: input 32, narrow channels.
  ModelConfig mc = ModelConfig::reduced();
  mc.input_size = 32;
  mc.seed = mix_seed(options.seed, 32);
  SwiSENet<double> model(mc);
  scramble(model.params(), rng);
  const auto images = uniform(rng, Shape{2, 32, 32, 3}, 0.0, 1.0);
  const std::vector<int> labels{1, 3};
  run.check(
      "end_to_end_reduced",
      [&](Tape<double>& t) { return ops::softmax_cross_entropy(model.forward(t.constant(images), infer), labels); },
      trainable(model.params()), options.end_to_end_samples, options.end_to_end_eps);

  run.result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return std::move(run.result);
}

}  // namespace swisenet
