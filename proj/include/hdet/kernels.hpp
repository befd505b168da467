#pragma once

// Numeric kernels behind the autodiff ops.
//
// hdet::kernels holds the production path: im2col + GEMM convolution and
// channel-parallel batch normalization, parallelized with OpenMP over images
// or channels. Every reduction that crosses the parallel axis is done into
// per-image partial buffers and summed in index order, so results do not
// depend on the thread count.
//
// hdet::kernels::reference holds direct serial loops. They are slow and kept
// as the oracle for tests and the kernel benchmark.

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "hdet/tensor.hpp"

namespace hdet::kernels {

/// Training-mode batch normalization needs at least two values per channel.
class DegenerateBatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Output spatial extent: floor((in + 2*pad - k) / stride) + 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

/// Validates shapes and returns the N x Cout x H' x W' output shape.
Shape conv2d_output_shape(const Shape& input, const Shape& kernel, const ConvGeometry& geom);

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                      const ConvGeometry& geom);

/// Any of grad_input / grad_kernel / grad_bias may be null; non-null outputs are
/// overwritten (not accumulated).
void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                     const ConvGeometry& geom, Tensor* grad_input, Tensor* grad_kernel,
                     Tensor* grad_bias);

/// Per-channel statistics computed by the training-mode forward pass.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;      // population (biased) variance
  std::vector<double> inv_std;  // 1 / sqrt(var + eps)
};

Tensor batchnorm_train_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                               double eps, BatchStats& stats, Tensor& normalized);
Tensor batchnorm_infer_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                               const Tensor& running_mean, const Tensor& running_var, double eps);
void batchnorm_train_backward(const Tensor& grad_output, const Tensor& normalized,
                              const Tensor& gamma, const BatchStats& stats, Tensor* grad_input,
                              Tensor* grad_gamma, Tensor* grad_beta);

/// Number of OpenMP threads the kernels will use (1 when built without OpenMP).
int max_threads();

namespace reference {

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                      const ConvGeometry& geom);
void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                     const ConvGeometry& geom, Tensor* grad_input, Tensor* grad_kernel,
                     Tensor* grad_bias);
Tensor batchnorm_train_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                               double eps, BatchStats& stats, Tensor& normalized);
void batchnorm_train_backward(const Tensor& grad_output, const Tensor& normalized,
                              const Tensor& gamma, const BatchStats& stats, Tensor* grad_input,
                              Tensor* grad_gamma, Tensor* grad_beta);

}  // namespace reference
}  // namespace hdet::kernels
