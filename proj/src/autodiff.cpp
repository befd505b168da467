#include "hdet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

namespace hdet {

const Tensor& Var::value() const {
  if (!tape_) throw DetachedError("value() on an empty Var");
  return tape_->value(*this);
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size())
    throw DetachedError("node does not belong to this tape");
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.op = "constant";
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = record_;
  node.op = "variable";
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(std::string name, Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = record_;
  node.param_name = std::move(name);
  node.op = "parameter";
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op) {
  Node node;
  node.value = std::move(value);
  node.op = std::string(op);
  bool any = false;
  for (const Var& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    any = any || nodes_[in.id()].requires_grad;
  }
  if (record_ && any && backward) {
    node.requires_grad = true;
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id()].value;
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& node = nodes_[v.id()];
  return node.grad ? *node.grad : Tensor(node.value.shape());
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id()].requires_grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  check_owned(v);
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (g.shape() != node.value.shape())
    throw ShapeError("gradient shape " + to_string(g.shape()) + " does not match node shape " +
                     to_string(node.value.shape()) + " (op " + node.op + ")");
  if (!node.grad) {
    node.grad = g;
    return;
  }
  auto dst = node.grad->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::accumulate(Var v, Tensor&& g) {
  check_owned(v);
  Node& node = nodes_[v.id()];
  if (node.requires_grad && !node.grad && g.shape() == node.value.shape()) {
    node.grad = std::move(g);
    return;
  }
  accumulate(v, static_cast<const Tensor&>(g));
}

std::map<std::string, Tensor> Tape::backward(Var loss) {
  check_owned(loss);
  const Node& root = nodes_[loss.id()];
  if (!root.value.is_scalar())
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(root.value.shape()));
  if (!record_) throw DetachedError("backward() on a tape that does not record gradients");
  if (!root.requires_grad) throw DetachedError("loss does not depend on any variable or parameter");

  for (Node& node : nodes_) node.grad.reset();
  nodes_[loss.id()].grad = Tensor(root.value.shape(), 1.0);
  last_visits_ = 0;

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.grad || !node.backward) continue;
    // The closure may append to other nodes' gradients but never to its own.
    const Tensor grad_output = *node.grad;
    node.backward(*this, grad_output);
    ++last_visits_;
  }

  std::map<std::string, Tensor> grads;
  for (const Node& node : nodes_) {
    if (!node.param_name) continue;
    grads[*node.param_name] = node.grad ? *node.grad : Tensor(node.value.shape());
  }
  return grads;
}

std::map<std::string, Tensor> backward(Tape& tape, Var loss) { return tape.backward(loss); }

BatchNormState BatchNormState::fresh(std::size_t channels, double eps, double momentum) {
  BatchNormState state;
  state.running_mean = Tensor({channels}, 0.0);
  state.running_var = Tensor({channels}, 1.0);
  state.eps = eps;
  state.momentum = momentum;
  state.validate(channels);
  return state;
}

void BatchNormState::validate(std::size_t channels) const {
  if (!(eps > 0.0)) throw std::invalid_argument("batchnorm eps must be positive");
  if (!(momentum > 0.0 && momentum < 1.0))
    throw std::invalid_argument("batchnorm momentum must lie in (0, 1)");
  if (running_mean.size() != channels || running_var.size() != channels)
    throw ShapeError("batchnorm running statistics have " + std::to_string(running_mean.size()) +
                     " entries, expected " + std::to_string(channels));
  for (double v : running_var.data())
    if (!(v >= 0.0)) throw std::invalid_argument("batchnorm running variance must be >= 0");
}

namespace {

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* tape = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw DetachedError("op input is an empty Var");
    if (tape && v.tape() != tape) throw DetachedError("op inputs live on different tapes");
    tape = v.tape();
  }
  return *tape;
}

template <typename F>
Tensor map_values(const Tensor& in, F f) {
  Tensor out(in.shape());
  const auto src = in.data();
  auto dst = out.data();
  const auto n = static_cast<std::ptrdiff_t>(src.size());
#pragma omp parallel for simd schedule(static) if (n > 65536)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = f(src[i]);
  return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + " shape mismatch: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}

}  // namespace

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var conv2d(Var input, Var kernel, std::optional<Var> bias, Conv2dOptions options) {
  Tape& tape = bias ? tape_of({input, kernel, *bias}) : tape_of({input, kernel});
  const kernels::ConvGeometry geom{options.stride, options.padding};
  const Tensor* bias_value = bias ? &bias->value() : nullptr;
  Tensor out = kernels::conv2d_forward(input.value(), kernel.value(), bias_value, geom);

  std::vector<Var> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return tape.record(
      std::move(out), inputs,
      [input, kernel, bias, geom](Tape& t, const Tensor& g) {
        Tensor dx, dk, db;
        const bool want_x = t.requires_grad(input);
        const bool want_k = t.requires_grad(kernel);
        const bool want_b = bias && t.requires_grad(*bias);
        kernels::conv2d_backward(input.value(), kernel.value(), g, geom, want_x ? &dx : nullptr,
                                 want_k ? &dk : nullptr, want_b ? &db : nullptr);
        if (want_x) t.accumulate(input, std::move(dx));
        if (want_k) t.accumulate(kernel, std::move(dk));
        if (want_b) t.accumulate(*bias, std::move(db));
      },
      "conv2d");
}

Var batchnorm(Var input, Var gamma, Var beta, BatchNormState& state, Mode mode) {
  if (mode == Mode::infer) return batchnorm(input, gamma, beta, static_cast<const BatchNormState&>(state));
  Tape& tape = tape_of({input, gamma, beta});
  const std::size_t channels = input.value().rank() == 4 ? input.value().dim(1) : 0;
  state.validate(channels);

  auto stats = std::make_shared<kernels::BatchStats>();
  auto normalized = std::make_shared<Tensor>();
  Tensor out = kernels::batchnorm_train_forward(input.value(), gamma.value(), beta.value(),
                                                state.eps, *stats, *normalized);
  for (std::size_t c = 0; c < channels; ++c) {
    state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * stats->mean[c];
    state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * stats->var[c];
  }
  return tape.record(
      std::move(out), {input, gamma, beta},
      [input, gamma, beta, stats, normalized](Tape& t, const Tensor& g) {
        Tensor dx, dg, db;
        const bool want_x = t.requires_grad(input);
        const bool want_g = t.requires_grad(gamma);
        const bool want_b = t.requires_grad(beta);
        kernels::batchnorm_train_backward(g, *normalized, gamma.value(), *stats,
                                          want_x ? &dx : nullptr, want_g ? &dg : nullptr,
                                          want_b ? &db : nullptr);
        if (want_x) t.accumulate(input, std::move(dx));
        if (want_g) t.accumulate(gamma, dg.reshaped(gamma.shape()));
        if (want_b) t.accumulate(beta, db.reshaped(beta.shape()));
      },
      "batchnorm_train");
}

Var batchnorm(Var input, Var gamma, Var beta, const BatchNormState& state) {
  Tape& tape = tape_of({input, gamma, beta});
  const Tensor& x = input.value();
  if (x.rank() != 4) throw ShapeError("batchnorm expects N x C x H x W input, got " + to_string(x.shape()));
  state.validate(x.dim(1));
  Tensor out = kernels::batchnorm_infer_forward(x, gamma.value(), beta.value(), state.running_mean,
                                                state.running_var, state.eps);
  const Tensor mean = state.running_mean;
  const Tensor var = state.running_var;
  const double eps = state.eps;
  return tape.record(
      std::move(out), {input, gamma, beta},
      [input, gamma, beta, mean, var, eps](Tape& t, const Tensor& g) {
        const Shape& s = input.value().shape();
        const std::size_t channels = s[1], plane = s[2] * s[3];
        Tensor dx(s), dg(gamma.shape()), db(beta.shape());
        for (std::size_t n = 0; n < s[0]; ++n)
          for (std::size_t c = 0; c < channels; ++c) {
            const double inv_std = 1.0 / std::sqrt(var[c] + eps);
            const std::size_t off = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double xhat = (input.value()[off + i] - mean[c]) * inv_std;
              dx[off + i] = g[off + i] * gamma.value()[c] * inv_std;
              dg[c] += g[off + i] * xhat;
              db[c] += g[off + i];
            }
          }
        t.accumulate(input, std::move(dx));
        t.accumulate(gamma, std::move(dg));
        t.accumulate(beta, std::move(db));
      },
      "batchnorm_infer");
}

Var leaky_relu(Var input, double slope) {
  Tape& tape = tape_of({input});
  Tensor out = map_values(input.value(), [slope](double x) { return x >= 0.0 ? x : slope * x; });
  return tape.record(
      std::move(out), {input},
      [input, slope](Tape& t, const Tensor& g) {
        const Tensor& x = input.value();
        Tensor dx(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] >= 0.0 ? g[i] : slope * g[i];
        t.accumulate(input, std::move(dx));
      },
      "leaky_relu");
}

Var sigmoid(Var input) {
  Tape& tape = tape_of({input});
  Tensor out = map_values(input.value(), [](double x) { return sigmoid(x); });
  auto saved = std::make_shared<Tensor>(out);
  return tape.record(
      std::move(out), {input},
      [input, saved](Tape& t, const Tensor& g) {
        Tensor dx(saved->shape());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * (*saved)[i] * (1.0 - (*saved)[i]);
        t.accumulate(input, std::move(dx));
      },
      "sigmoid");
}

Var add(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  check_same_shape(a.value(), b.value(), "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return tape.record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Tensor& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
      },
      "add");
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return tape.record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Tensor& g) {
        Tensor da(g.shape()), db(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] = g[i] * b.value()[i];
          db[i] = g[i] * a.value()[i];
        }
        t.accumulate(a, std::move(da));
        t.accumulate(b, std::move(db));
      },
      "mul");
}

Var scale(Var a, double factor) {
  Tape& tape = tape_of({a});
  Tensor out = map_values(a.value(), [factor](double x) { return factor * x; });
  return tape.record(
      std::move(out), {a},
      [a, factor](Tape& t, const Tensor& g) {
        t.accumulate(a, map_values(g, [factor](double x) { return factor * x; }));
      },
      "scale");
}

Var square(Var a) {
  Tape& tape = tape_of({a});
  Tensor out = map_values(a.value(), [](double x) { return x * x; });
  return tape.record(
      std::move(out), {a},
      [a](Tape& t, const Tensor& g) {
        Tensor da(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = 2.0 * a.value()[i] * g[i];
        t.accumulate(a, std::move(da));
      },
      "square");
}

Var sum(Var a) {
  Tape& tape = tape_of({a});
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return tape.record(
      Tensor::scalar(total), {a},
      [a](Tape& t, const Tensor& g) { t.accumulate(a, Tensor(a.shape(), g.item())); }, "sum");
}

}  // namespace hdet
