#pragma once

// Define-by-run reverse-mode differentiation.
//
// A Tape records every op as it executes. Each node stores its value, the ids
// of its inputs and a closure that maps the node's output gradient onto its
// inputs. Nodes are appended in execution order, so the record is always
// topologically sorted and backward() is a single reverse sweep.
//
// A tape is single-threaded. Distinct tapes share no state.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hdet/kernels.hpp"
#include "hdet/tensor.hpp"

namespace hdet {

class Tape;

/// Raised by backward() for a loss that is not on the tape or has no path to a variable.
class DetachedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the gradient of the node's output and pushes it into the inputs
  /// via Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_output)>;

  /// With record = false no closures or saved activations are kept; used for inference.
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  Var parameter(std::string name, Tensor value);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op);

  const Tensor& value(Var v) const;
  /// Gradient after backward(); zeros for nodes that the loss does not reach.
  Tensor grad(Var v) const;

  bool recording() const noexcept { return record_; }
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs_of(std::size_t id) const { return nodes_.at(id).inputs; }
  const Tensor& value_at(std::size_t id) const { return nodes_.at(id).value; }

  /// Adds `g` into the gradient of `v`. No-op when `v` does not require a gradient.
  void accumulate(Var v, const Tensor& g);
  /// Same, but moves `g` in when `v` has no gradient yet.
  void accumulate(Var v, Tensor&& g);

  /// Runs the reverse sweep from `loss` and returns parameter name -> gradient.
  std::map<std::string, Tensor> backward(Var loss);

  /// Number of nodes visited by the most recent backward() call.
  std::size_t last_backward_visits() const noexcept { return last_visits_; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::optional<std::string> param_name;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    std::string op;
  };

  void check_owned(Var v) const;

  bool record_;
  std::vector<Node> nodes_;
  std::size_t last_visits_ = 0;
};

/// Free-function spelling of Tape::backward.
std::map<std::string, Tensor> backward(Tape& tape, Var loss);

enum class Mode { train, infer };

/// Non-learned batch-norm state. Gamma and beta travel as tape variables.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  static BatchNormState fresh(std::size_t channels, double eps = 1e-5, double momentum = 0.1);
  void validate(std::size_t channels) const;
};

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

Var conv2d(Var input, Var kernel, std::optional<Var> bias, Conv2dOptions options = {});

/// Train mode normalizes with batch statistics and updates `state`'s running
/// averages; infer mode reads them only.
Var batchnorm(Var input, Var gamma, Var beta, BatchNormState& state, Mode mode);
/// Inference-only overload; never touches the running statistics.
Var batchnorm(Var input, Var gamma, Var beta, const BatchNormState& state);

inline constexpr double kDefaultLeakySlope = 0.1;

Var leaky_relu(Var input, double slope = kDefaultLeakySlope);
Var sigmoid(Var input);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var square(Var a);
Var sum(Var a);

/// Numerically stable logistic function for scalars.
double sigmoid(double x) noexcept;

}  // namespace hdet
