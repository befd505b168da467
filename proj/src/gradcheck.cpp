#include "hdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hdet/rng.hpp"

namespace hdet::gradcheck {

namespace {

// Hash of the sign pattern of every leaky-ReLU input on the tape.
std::uint64_t kink_signature(const Tape& tape) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t id = 0; id < tape.size(); ++id) {
    if (tape.op_name(id) != "leaky_relu") continue;
    for (double v : tape.value_at(tape.inputs_of(id).front()).data()) {
      h ^= v >= 0.0 ? 0x9E3779B97F4A7C15ULL : 0x632BE59BD9B4E019ULL;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void fold(CheckReport& r, double analytic, double numeric, double tol) {
  const double e = relative_error(analytic, numeric);
  r.max_rel_err = std::max(r.max_rel_err, e);
  r.pass = r.pass && e <= tol;
  ++r.checked;
}

// Central difference of `eval` around slot `x`; nullopt across a kink.
template <typename Eval>
std::optional<double> central_difference(double& x, double step, Eval&& eval) {
  const double saved = x;
  std::uint64_t sig_plus = 0, sig_minus = 0;
  x = saved + step;
  const double fp = eval(sig_plus);
  x = saved - step;
  const double fm = eval(sig_minus);
  x = saved;
  if (sig_plus != sig_minus) return std::nullopt;
  return (fp - fm) / (2.0 * step);
}

Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Weighted sum of a tensor output with fixed random weights.
Var project(Tape& tape, Var out, const Tensor& weights) { return sum(mul(out, tape.constant(weights))); }

std::vector<GroundTruth> random_truths(Rng& rng, std::size_t classes, std::size_t max_count) {
  std::vector<GroundTruth> out(rng.below(max_count + 1));
  for (auto& g : out) {
    g.class_id = rng.below(classes);
    g.bbox = BBox{rng.uniform(0.02, 0.98), rng.uniform(0.02, 0.98), rng.uniform(0.05, 0.6), rng.uniform(0.05, 0.6)};
  }
  return out;
}

struct Case {
  ScalarFn f;
  std::vector<Tensor> inputs;
};

using CaseMaker = std::function<Case(Rng&)>;

Case make_conv(Rng& rng) {
  for (;;) {
    const std::size_t n = 1 + rng.below(2), cin = 1 + rng.below(3), cout = 1 + rng.below(3);
    const std::size_t h = 2 + rng.below(5), w = 2 + rng.below(5), k = 1 + rng.below(3);
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    const bool with_bias = rng.bernoulli(0.5);
    const Conv2dOptions opts{stride, pad};
    const Shape out = kernels::conv2d_output_shape({n, cin, h, w}, {cout, cin, k, k}, {stride, pad});
    Tensor weights = random_tensor(rng, out);
    Case c;
    c.inputs = {random_tensor(rng, {n, cin, h, w}), random_tensor(rng, {cout, cin, k, k})};
    if (with_bias) c.inputs.push_back(random_tensor(rng, {cout}));
    c.f = [opts, weights, with_bias](Tape& t, std::span<const Var> in) {
      const std::optional<Var> bias = with_bias ? std::optional<Var>(in[2]) : std::nullopt;
      return project(t, conv2d(in[0], in[1], bias, opts), weights);
    };
    return c;
  }
}

Shape random_bn_shape(Rng& rng) {
  for (;;) {
    Shape s{1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(4)};
    if (s[0] * s[2] * s[3] >= 2) return s;
  }
}

Case make_bn_train(Rng& rng) {
  const Shape s = random_bn_shape(rng);
  const BatchNormState base = BatchNormState::fresh(s[1]);
  Tensor weights = random_tensor(rng, s);
  Case c;
  c.inputs = {random_tensor(rng, s), random_tensor(rng, {s[1]}, 0.5, 1.5), random_tensor(rng, {s[1]})};
  c.f = [base, weights](Tape& t, std::span<const Var> in) {
    BatchNormState state = base;
    return project(t, batchnorm(in[0], in[1], in[2], state, Mode::train), weights);
  };
  return c;
}

Case make_bn_infer(Rng& rng) {
  const Shape s = random_bn_shape(rng);
  BatchNormState state = BatchNormState::fresh(s[1]);
  state.running_mean = random_tensor(rng, {s[1]}, -0.5, 0.5);
  state.running_var = random_tensor(rng, {s[1]}, 0.5, 1.5);
  Tensor weights = random_tensor(rng, s);
  Case c;
  c.inputs = {random_tensor(rng, s), random_tensor(rng, {s[1]}, 0.5, 1.5), random_tensor(rng, {s[1]})};
  c.f = [state, weights](Tape& t, std::span<const Var> in) {
    return project(t, batchnorm(in[0], in[1], in[2], state), weights);
  };
  return c;
}

Shape random_small_shape(Rng& rng) {
  Shape s(1 + rng.below(4));
  for (auto& d : s) d = 1 + rng.below(4);
  return s;
}

template <typename Op>
CaseMaker unary(Op op, double lo = -1.0, double hi = 1.0) {
  return [op, lo, hi](Rng& rng) {
    const Shape s = random_small_shape(rng);
    Tensor weights = random_tensor(rng, s);
    Case c;
    c.inputs = {random_tensor(rng, s, lo, hi)};
    c.f = [op, weights](Tape& t, std::span<const Var> in) { return project(t, op(in[0]), weights); };
    return c;
  };
}

template <typename Op>
CaseMaker binary(Op op) {
  return [op](Rng& rng) {
    const Shape s = random_small_shape(rng);
    Tensor weights = random_tensor(rng, s);
    Case c;
    c.inputs = {random_tensor(rng, s), random_tensor(rng, s)};
    c.f = [op, weights](Tape& t, std::span<const Var> in) { return project(t, op(in[0], in[1]), weights); };
    return c;
  };
}

Case make_leaky(Rng& rng) {
  const double slope = rng.uniform(0.01, 0.5);
  return unary([slope](Var x) { return leaky_relu(x, slope); })(rng);
}

Case make_scale(Rng& rng) {
  const double k = rng.uniform(-3.0, 3.0);
  return unary([k](Var x) { return scale(x, k); })(rng);
}

Case make_sum(Rng& rng) {
  Case c;
  c.inputs = {random_tensor(rng, random_small_shape(rng))};
  c.f = [](Tape&, std::span<const Var> in) { return sum(in[0]); };
  return c;
}

Case make_composite(Rng& rng) {
  for (;;) {
    const std::size_t n = 1 + rng.below(2), cin = 1 + rng.below(3), cout = 1 + rng.below(3);
    const std::size_t h = 3 + rng.below(4), w = 3 + rng.below(4);
    if (n * h * w < 2) continue;
    const BatchNormState base = BatchNormState::fresh(cout);
    Case c;
    c.inputs = {random_tensor(rng, {n, cin, h, w}), random_tensor(rng, {cout, cin, 3, 3}),
                random_tensor(rng, {cout}, 0.5, 1.5), random_tensor(rng, {cout})};
    c.f = [base](Tape&, std::span<const Var> in) {
      BatchNormState state = base;
      return sum(leaky_relu(batchnorm(conv2d(in[0], in[1], std::nullopt, {1, 1}), in[2], in[3], state, Mode::train)));
    };
    return c;
  }
}

Case make_detection_loss(Rng& rng) {
  GridLayout layout{2 + rng.below(2), 1 + rng.below(2), 1 + rng.below(3)};
  const std::size_t n = 1 + rng.below(2);
  std::vector<std::vector<GroundTruth>> targets(n);
  for (auto& t : targets) t = random_truths(rng, layout.num_classes, 3);
  LossWeights weights{rng.uniform(1.0, 5.0), rng.uniform(0.1, 1.0)};
  Case c;
  c.inputs = {random_tensor(rng, {n, layout.channels(), layout.grid_size, layout.grid_size}, -2.0, 2.0)};
  c.f = [layout, targets, weights](Tape&, std::span<const Var> in) {
    return detection_loss(in[0], targets, layout, weights);
  };
  return c;
}

DetectorConfig tiny_detector(bool with_hybrid) {
  DetectorConfig cfg;
  cfg.input_size = 16;
  cfg.grid_size = 4;
  cfg.boxes_per_cell = 1;
  cfg.num_classes = 2;
  cfg.with_hybrid = with_hybrid;
  cfg.stem = {{3, 2}, {4, 2}};
  return cfg;
}

HybridBlockConfig tiny_hybrid() {
  HybridBlockConfig h;
  h.layers = {{{3, 3, 1}, {3, 1, 0}, {3, 3, 1}}};
  return h;
}

}  // namespace

double relative_error(double a, double b) noexcept {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

CheckReport finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double step, double tol) {
  CheckReport report;
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  const Var out = f(tape, vars);
  tape.backward(out);

  std::vector<Tensor> work = inputs;
  auto eval = [&](std::uint64_t& sig) {
    Tape probe(false);
    std::vector<Var> pv;
    for (const Tensor& t : work) pv.push_back(probe.variable(t));
    const double v = f(probe, pv).value().item();
    sig = kink_signature(probe);
    return v;
  };

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor g = tape.grad(vars[i]);
    for (std::size_t j = 0; j < work[i].size(); ++j) {
      const auto numeric = central_difference(work[i][j], step, eval);
      if (!numeric) {
        ++report.skipped;
        continue;
      }
      fold(report, g[j], *numeric, tol);
    }
  }
  return report;
}

CheckReport model_loss_check(Model& model, const Tensor& batch, std::span<const std::vector<GroundTruth>> targets,
                             double step, double tol) {
  const auto saved_norms = model.norms();
  const GridLayout layout = GridLayout::of(model.config());
  std::map<std::string, Tensor> grads;
  {
    Tape tape;
    grads = tape.backward(detection_loss(model.forward_train(tape, batch), targets, layout));
  }
  model.norms() = saved_norms;

  auto eval = [&](std::uint64_t& sig) {
    Tape probe(false);
    const double v = detection_loss(model.forward_train(probe, batch), targets, layout).value().item();
    sig = kink_signature(probe);
    model.norms() = saved_norms;
    return v;
  };

  CheckReport report;
  for (auto& [name, param] : model.parameters()) {
    const Tensor& g = grads.at(name);
    for (std::size_t j = 0; j < param.size(); ++j) {
      const auto numeric = central_difference(param[j], step, eval);
      if (!numeric) {
        ++report.skipped;
        continue;
      }
      fold(report, g[j], *numeric, tol);
    }
  }
  return report;
}

std::vector<SuiteEntry> run_suite(const SuiteOptions& options) {
  const std::vector<std::pair<std::string, CaseMaker>> cases = {
      {"conv2d", make_conv},
      {"batchnorm/train", make_bn_train},
      {"batchnorm/infer", make_bn_infer},
      {"leaky_relu", make_leaky},
      {"sigmoid", unary([](Var x) { return sigmoid(x); }, -4.0, 4.0)},
      {"add", binary([](Var a, Var b) { return add(a, b); })},
      {"mul", binary([](Var a, Var b) { return mul(a, b); })},
      {"scale", make_scale},
      {"square", unary([](Var x) { return square(x); })},
      {"sum", make_sum},
      {"conv2d->batchnorm->leaky_relu", make_composite},
      {"detection_loss", make_detection_loss},
  };

  std::vector<SuiteEntry> out;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    SuiteEntry e;
    e.name = cases[k].first;
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
      Rng rng(derive_seed(derive_seed(options.seed, k), trial));
      const Case c = cases[k].second(rng);
      const CheckReport r = finite_diff_check(c.f, c.inputs, options.step, options.tol);
      e.checked += r.checked;
      e.skipped += r.skipped;
      e.max_rel_err = std::max(e.max_rel_err, r.max_rel_err);
      e.pass = e.pass && r.pass;
      ++e.trials;
    }
    out.push_back(e);
  }

  for (bool with_hybrid : {false, true}) {
    SuiteEntry e;
    e.name = with_hybrid ? "model loss (hybrid)" : "model loss (plain)";
    const DetectorConfig cfg = tiny_detector(with_hybrid);
    const auto hybrid = with_hybrid ? std::optional<HybridBlockConfig>(tiny_hybrid()) : std::nullopt;
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
      Rng rng(derive_seed(derive_seed(options.seed, 1000 + with_hybrid), trial));
      Model model = build_model(cfg, hybrid, rng.next());
      const std::size_t n = 1 + rng.below(2);
      const Tensor batch = random_tensor(rng, {n, 3, cfg.input_size, cfg.input_size}, 0.0, 1.0);
      std::vector<std::vector<GroundTruth>> targets(n);
      for (auto& t : targets) t = random_truths(rng, cfg.num_classes, 3);
      const CheckReport r = model_loss_check(model, batch, targets, options.step, options.tol);
      e.checked += r.checked;
      e.skipped += r.skipped;
      e.max_rel_err = std::max(e.max_rel_err, r.max_rel_err);
      e.pass = e.pass && r.pass;
      ++e.trials;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace hdet::gradcheck
