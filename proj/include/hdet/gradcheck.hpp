#pragma once

// Central finite-difference checks of tape gradients.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hdet/autodiff.hpp"
#include "hdet/detector.hpp"
#include "hdet/tensor.hpp"

namespace hdet::gradcheck {

struct CheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  std::size_t checked = 0;
  /// Coordinates whose +h and -h evaluations fall on different sides of a
  /// leaky-ReLU kink; the difference quotient says nothing there.
  std::size_t skipped = 0;
};

/// Builds a scalar from variables on `tape`.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b) noexcept;

/// Perturbs every scalar of every input by +-step and compares the central
/// difference against the tape gradient. Failures are reported, not thrown.
CheckReport finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double step = 1e-5,
                              double tol = 1e-4);

/// Same check against every parameter of `model` for detection_loss on a batch.
CheckReport model_loss_check(Model& model, const Tensor& batch,
                             std::span<const std::vector<GroundTruth>> targets, double step = 1e-5,
                             double tol = 1e-4);

struct SuiteEntry {
  std::string name;
  std::size_t trials = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct SuiteOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 20240601;
  double step = 1e-5;
  double tol = 1e-4;
};

/// Random small-tensor trials for every differentiable op, the composed
/// conv -> batchnorm -> leaky ReLU chain, the detection loss and a tiny
/// end-to-end model.
std::vector<SuiteEntry> run_suite(const SuiteOptions& options = {});

}  // namespace hdet::gradcheck
