#include "hdet/kernels.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#ifdef HDET_HAVE_OPENMP
#include <omp.h>
#endif

namespace hdet::kernels {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvDims {
  std::size_t n, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t oh, ow;
  std::size_t stride, pad;

  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

ConvDims conv_dims(const Shape& input, const Shape& kernel, const ConvGeometry& geom) {
  const Shape out = conv2d_output_shape(input, kernel, geom);
  return ConvDims{input[0], input[1], input[2], input[3], kernel[0], kernel[2], kernel[3],
                  out[2],   out[3],   geom.stride, geom.padding};
}

// Output columns [lo, hi) whose input column ox * stride + k - pad lies in [0, w).
std::pair<std::size_t, std::size_t> valid_columns(const ConvDims& d, std::size_t k) {
  const auto pad = static_cast<std::ptrdiff_t>(d.pad), s = static_cast<std::ptrdiff_t>(d.stride);
  const auto kk = static_cast<std::ptrdiff_t>(k), w = static_cast<std::ptrdiff_t>(d.w);
  const std::ptrdiff_t first = pad - kk;  // ox * s >= first
  const std::ptrdiff_t lo = first <= 0 ? 0 : (first + s - 1) / s;
  const std::ptrdiff_t last = w - 1 + pad - kk;  // ox * s <= last
  const std::ptrdiff_t hi = last < 0 ? 0 : last / s + 1;
  const auto clamp = [&](std::ptrdiff_t v) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(d.ow)));
  };
  const std::size_t a = clamp(lo), b = clamp(hi);
  return {a, std::max(a, b)};
}

// Unfolds output rows [oy0, oy1) of one image (cin x h x w) into a patch-major
// matrix (cin*kh*kw) x ((oy1-oy0)*ow).
void im2col(const double* image, const ConvDims& d, std::size_t oy0, std::size_t oy1, double* col) {
  const std::size_t band = (oy1 - oy0) * d.ow;
  const auto pad = static_cast<std::ptrdiff_t>(d.pad);
  for (std::size_t kx = 0; kx < d.kw; ++kx) {
    const auto [lo, hi] = valid_columns(d, kx);
    for (std::size_t c = 0; c < d.cin; ++c) {
      const double* plane = image + c * d.h * d.w;
      for (std::size_t ky = 0; ky < d.kh; ++ky) {
        double* row = col + ((c * d.kh + ky) * d.kw + kx) * band;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * d.stride + ky) - pad;
          double* dst = row + (oy - oy0) * d.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) {
            std::fill(dst, dst + d.ow, 0.0);
            continue;
          }
          std::fill(dst, dst + lo, 0.0);
          std::fill(dst + hi, dst + d.ow, 0.0);
          // Input column of output column ox is ox * stride + kx - pad.
          const double* src = plane + static_cast<std::size_t>(iy) * d.w;
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - pad;
          if (d.stride == 1) {
            std::copy(src + (static_cast<std::ptrdiff_t>(lo) + shift), src + (static_cast<std::ptrdiff_t>(hi) + shift),
                      dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[static_cast<std::ptrdiff_t>(ox * d.stride) + shift];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch gradients back onto the image, accumulating.
void col2im(const double* col, const ConvDims& d, std::size_t oy0, std::size_t oy1, double* image) {
  const auto pad = static_cast<std::ptrdiff_t>(d.pad);
  const std::size_t band = (oy1 - oy0) * d.ow;
  for (std::size_t c = 0; c < d.cin; ++c) {
    double* plane = image + c * d.h * d.w;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const auto [lo, hi] = valid_columns(d, kx);
        const double* row = col + ((c * d.kh + ky) * d.kw + kx) * band;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * d.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * d.w;
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - pad;
          const double* src = row + (oy - oy0) * d.ow;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<std::ptrdiff_t>(ox * d.stride) + shift] += src[ox];
        }
      }
    }
  }
}

// Output rows per im2col band, sized so one band stays cache-resident.
std::size_t band_rows(const ConvDims& d) {
  constexpr std::size_t kBandDoubles = 1 << 16;
  return std::clamp<std::size_t>(kBandDoubles / std::max<std::size_t>(1, d.patch() * d.ow), 1, d.oh);
}

void check_bn_shapes(const Tensor& input, const Tensor& gamma, const Tensor& beta) {
  if (input.rank() != 4)
    throw ShapeError("batchnorm expects N x C x H x W input, got " + to_string(input.shape()));
  const std::size_t c = input.shape()[1];
  if (gamma.size() != c || beta.size() != c)
    throw ShapeError("batchnorm gamma/beta shapes " + to_string(gamma.shape()) + " / " +
                     to_string(beta.shape()) + " do not match " + std::to_string(c) +
                     " channels of input " + to_string(input.shape()));
}

std::size_t values_per_channel(const Tensor& input) {
  const Shape& s = input.shape();
  return s[0] * s[2] * s[3];
}

}  // namespace

int max_threads() {
#ifdef HDET_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw std::invalid_argument("conv2d stride must be positive");
  if (in + 2 * padding < kernel)
    throw ShapeError("conv2d kernel extent " + std::to_string(kernel) +
                     " exceeds padded input extent " + std::to_string(in + 2 * padding));
  return (in + 2 * padding - kernel) / stride + 1;
}

Shape conv2d_output_shape(const Shape& input, const Shape& kernel, const ConvGeometry& geom) {
  if (geom.stride == 0) throw std::invalid_argument("conv2d stride must be positive");
  if (input.size() != 4 || kernel.size() != 4 || input[1] != kernel[1])
    throw ShapeError("conv2d shape mismatch: input " + to_string(input) + ", kernel " +
                     to_string(kernel));
  if (input[2] + 2 * geom.padding < kernel[2] || input[3] + 2 * geom.padding < kernel[3])
    throw ShapeError("conv2d shape mismatch: kernel " + to_string(kernel) +
                     " larger than padded input " + to_string(input));
  return {input[0], kernel[0], conv_output_extent(input[2], kernel[2], geom.stride, geom.padding),
          conv_output_extent(input[3], kernel[3], geom.stride, geom.padding)};
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                      const ConvGeometry& geom) {
  const ConvDims d = conv_dims(input.shape(), kernel.shape(), geom);
  if (bias && bias->size() != d.cout)
    throw ShapeError("conv2d bias shape " + to_string(bias->shape()) + " does not match " +
                     std::to_string(d.cout) + " output channels");
  Tensor output({d.n, d.cout, d.oh, d.ow});
  // Every Eigen operand lives in Eigen-allocated (aligned) storage: products
  // peel to the first aligned element, so operands at arbitrary heap
  // addresses would round differently from run to run.
  const RowMatrix weights = ConstMatrixMap(kernel.data().data(), d.cout, d.patch());
  const auto images = static_cast<std::ptrdiff_t>(d.n);

  const std::size_t rows = band_rows(d);

#pragma omp parallel
  {
    RowMatrix col(d.patch(), rows * d.ow);
    RowMatrix product(d.cout, rows * d.ow);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < images; ++n) {
      const double* image = input.data().data() + n * d.cin * d.h * d.w;
      double* out = output.data().data() + n * d.cout * d.pixels();
      for (std::size_t oy0 = 0; oy0 < d.oh; oy0 += rows) {
        const std::size_t oy1 = std::min(d.oh, oy0 + rows), band = (oy1 - oy0) * d.ow;
        im2col(image, d, oy0, oy1, col.data());
        MatrixMap dst(product.data(), d.cout, band);
        dst.noalias() = weights * ConstMatrixMap(col.data(), d.patch(), band);
        for (std::size_t c = 0; c < d.cout; ++c)
          std::copy_n(dst.data() + c * band, band, out + c * d.pixels() + oy0 * d.ow);
      }
      if (bias) {
        for (std::size_t c = 0; c < d.cout; ++c)
          for (std::size_t p = 0; p < d.pixels(); ++p) out[c * d.pixels() + p] += (*bias)[c];
      }
    }
  }
  return output;
}

void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                     const ConvGeometry& geom, Tensor* grad_input, Tensor* grad_kernel,
                     Tensor* grad_bias) {
  const ConvDims d = conv_dims(input.shape(), kernel.shape(), geom);
  if (grad_output.shape() != Shape{d.n, d.cout, d.oh, d.ow})
    throw ShapeError("conv2d grad_output shape " + to_string(grad_output.shape()) +
                     " does not match forward output");
  if (grad_input) *grad_input = Tensor(input.shape());

  // Per-image partial kernel/bias gradients, reduced in image order below.
  // Aligned operands as in the forward pass.
  const std::size_t wsize = d.cout * d.patch();
  std::vector<RowMatrix> kernel_parts(grad_kernel ? d.n : 0);
  std::vector<double> bias_parts(grad_bias ? d.n * d.cout : 0);

  const RowMatrix weights_t = ConstMatrixMap(kernel.data().data(), d.cout, d.patch()).transpose();
  const auto images = static_cast<std::ptrdiff_t>(d.n);

  const std::size_t rows = band_rows(d);

#pragma omp parallel
  {
    RowMatrix col(grad_kernel ? d.patch() : 0, rows * d.ow);
    RowMatrix dcol(grad_input ? d.patch() : 0, rows * d.ow);
    RowMatrix dy(d.cout, rows * d.ow);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < images; ++n) {
      const double* grad = grad_output.data().data() + n * d.cout * d.pixels();
      const double* image = input.data().data() + n * d.cin * d.h * d.w;
      if (grad_kernel) kernel_parts[n] = RowMatrix::Zero(d.cout, d.patch());
      for (std::size_t oy0 = 0; oy0 < d.oh; oy0 += rows) {
        const std::size_t oy1 = std::min(d.oh, oy0 + rows), band = (oy1 - oy0) * d.ow;
        for (std::size_t c = 0; c < d.cout; ++c)
          std::copy_n(grad + c * d.pixels() + oy0 * d.ow, band, dy.data() + c * band);
        const ConstMatrixMap dy_band(dy.data(), d.cout, band);
        if (grad_kernel) {
          im2col(image, d, oy0, oy1, col.data());
          kernel_parts[n].noalias() += dy_band * ConstMatrixMap(col.data(), d.patch(), band).transpose();
        }
        if (grad_input) {
          MatrixMap dc(dcol.data(), d.patch(), band);
          dc.noalias() = weights_t * dy_band;
          col2im(dcol.data(), d, oy0, oy1, grad_input->data().data() + n * d.cin * d.h * d.w);
        }
      }
      if (grad_bias) {
        for (std::size_t c = 0; c < d.cout; ++c) {
          const double* row = grad + c * d.pixels();
          double acc = 0.0;
          for (std::size_t p = 0; p < d.pixels(); ++p) acc += row[p];
          bias_parts[n * d.cout + c] = acc;
        }
      }
    }
  }

  if (grad_kernel) {
    *grad_kernel = Tensor(kernel.shape());
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t i = 0; i < wsize; ++i) (*grad_kernel)[i] += kernel_parts[n].data()[i];
  }
  if (grad_bias) {
    *grad_bias = Tensor({d.cout});
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t c = 0; c < d.cout; ++c) (*grad_bias)[c] += bias_parts[n * d.cout + c];
  }
}

Tensor batchnorm_train_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                               double eps, BatchStats& stats, Tensor& normalized) {
  check_bn_shapes(input, gamma, beta);
  const Shape& s = input.shape();
  const std::size_t channels = s[1], plane = s[2] * s[3], count = values_per_channel(input);
  if (count < 2)
    throw DegenerateBatchError("batchnorm in train mode needs at least 2 values per channel, got " +
                               std::to_string(count) + " for input " + to_string(s));

  stats.mean.assign(channels, 0.0);
  stats.var.assign(channels, 0.0);
  stats.inv_std.assign(channels, 0.0);
  normalized = Tensor(s);
  Tensor output(s);
  const double* x = input.data().data();
  double* xhat = normalized.data().data();
  double* y = output.data().data();
  const auto nchan = static_cast<std::ptrdiff_t>(channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < nchan; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < s[0]; ++n) {
      const double* p = x + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < s[0]; ++n) {
      const double* p = x + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    const double var = sq / static_cast<double>(count);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    stats.mean[c] = mean;
    stats.var[c] = var;
    stats.inv_std[c] = inv_std;
    const double g = gamma[c], b = beta[c];
    for (std::size_t n = 0; n < s[0]; ++n) {
      const std::size_t off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = (x[off + i] - mean) * inv_std;
        xhat[off + i] = v;
        y[off + i] = g * v + b;
      }
    }
  }
  return output;
}

Tensor batchnorm_infer_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                               const Tensor& running_mean, const Tensor& running_var, double eps) {
  check_bn_shapes(input, gamma, beta);
  const Shape& s = input.shape();
  const std::size_t channels = s[1], plane = s[2] * s[3];
  if (running_mean.size() != channels || running_var.size() != channels)
    throw ShapeError("batchnorm running statistics do not match input channels");
  Tensor output(s);
  const auto blocks = static_cast<std::ptrdiff_t>(s[0] * channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t nc = 0; nc < blocks; ++nc) {
    const std::size_t c = static_cast<std::size_t>(nc) % channels;
    const double scale = gamma[c] / std::sqrt(running_var[c] + eps);
    const double mean = running_mean[c], b = beta[c];
    const double* p = input.data().data() + nc * plane;
    double* q = output.data().data() + nc * plane;
    for (std::size_t i = 0; i < plane; ++i) q[i] = (p[i] - mean) * scale + b;
  }
  return output;
}

void batchnorm_train_backward(const Tensor& grad_output, const Tensor& normalized,
                              const Tensor& gamma, const BatchStats& stats, Tensor* grad_input,
                              Tensor* grad_gamma, Tensor* grad_beta) {
  const Shape& s = normalized.shape();
  const std::size_t channels = s[1], plane = s[2] * s[3];
  const double count = static_cast<double>(values_per_channel(normalized));
  if (grad_input) *grad_input = Tensor(s);
  if (grad_gamma) *grad_gamma = Tensor({channels});
  if (grad_beta) *grad_beta = Tensor({channels});
  const double* dy = grad_output.data().data();
  const double* xhat = normalized.data().data();
  const auto nchan = static_cast<std::ptrdiff_t>(channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < nchan; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s[0]; ++n) {
      const std::size_t off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * xhat[off + i];
      }
    }
    if (grad_gamma) (*grad_gamma)[c] = sum_dy_xhat;
    if (grad_beta) (*grad_beta)[c] = sum_dy;
    if (grad_input) {
      const double k = gamma[c] * stats.inv_std[c] / count;
      double* dx = grad_input->data().data();
      for (std::size_t n = 0; n < s[0]; ++n) {
        const std::size_t off = (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i)
          dx[off + i] = k * (count * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
      }
    }
  }
}

namespace reference {

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                      const ConvGeometry& geom) {
  const ConvDims d = conv_dims(input.shape(), kernel.shape(), geom);
  if (bias && bias->size() != d.cout)
    throw ShapeError("conv2d bias shape " + to_string(bias->shape()) + " does not match " +
                     std::to_string(d.cout) + " output channels");
  Tensor output({d.n, d.cout, d.oh, d.ow});
  const auto pad = static_cast<std::ptrdiff_t>(d.pad);
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t co = 0; co < d.cout; ++co)
      for (std::size_t oy = 0; oy < d.oh; ++oy)
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < d.cin; ++ci)
            for (std::size_t ky = 0; ky < d.kh; ++ky)
              for (std::size_t kx = 0; kx < d.kw; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * d.stride + ky) - pad;
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * d.stride + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(d.h) ||
                    ix >= static_cast<std::ptrdiff_t>(d.w))
                  continue;
                acc += input.at(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                       kernel.at(co, ci, ky, kx);
              }
          output.at(n, co, oy, ox) = acc + (bias ? (*bias)[co] : 0.0);
        }
  return output;
}

void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                     const ConvGeometry& geom, Tensor* grad_input, Tensor* grad_kernel,
                     Tensor* grad_bias) {
  const ConvDims d = conv_dims(input.shape(), kernel.shape(), geom);
  if (grad_input) *grad_input = Tensor(input.shape());
  if (grad_kernel) *grad_kernel = Tensor(kernel.shape());
  if (grad_bias) *grad_bias = Tensor({d.cout});
  const auto pad = static_cast<std::ptrdiff_t>(d.pad);
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t co = 0; co < d.cout; ++co)
      for (std::size_t oy = 0; oy < d.oh; ++oy)
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
          const double g = grad_output.at(n, co, oy, ox);
          if (grad_bias) (*grad_bias)[co] += g;
          for (std::size_t ci = 0; ci < d.cin; ++ci)
            for (std::size_t ky = 0; ky < d.kh; ++ky)
              for (std::size_t kx = 0; kx < d.kw; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * d.stride + ky) - pad;
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * d.stride + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(d.h) ||
                    ix >= static_cast<std::ptrdiff_t>(d.w))
                  continue;
                const auto y = static_cast<std::size_t>(iy), x = static_cast<std::size_t>(ix);
                if (grad_kernel) grad_kernel->at(co, ci, ky, kx) += g * input.at(n, ci, y, x);
                if (grad_input) grad_input->at(n, ci, y, x) += g * kernel.at(co, ci, ky, kx);
              }
        }
}

Tensor batchnorm_train_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                               double eps, BatchStats& stats, Tensor& normalized) {
  check_bn_shapes(input, gamma, beta);
  const Shape& s = input.shape();
  const std::size_t count = values_per_channel(input);
  if (count < 2)
    throw DegenerateBatchError("batchnorm in train mode needs at least 2 values per channel");
  stats.mean.assign(s[1], 0.0);
  stats.var.assign(s[1], 0.0);
  stats.inv_std.assign(s[1], 0.0);
  normalized = Tensor(s);
  Tensor output(s);
  for (std::size_t c = 0; c < s[1]; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < s[0]; ++n)
      for (std::size_t h = 0; h < s[2]; ++h)
        for (std::size_t w = 0; w < s[3]; ++w) sum += input.at(n, c, h, w);
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < s[0]; ++n)
      for (std::size_t h = 0; h < s[2]; ++h)
        for (std::size_t w = 0; w < s[3]; ++w) {
          const double dv = input.at(n, c, h, w) - mean;
          sq += dv * dv;
        }
    stats.mean[c] = mean;
    stats.var[c] = sq / static_cast<double>(count);
    stats.inv_std[c] = 1.0 / std::sqrt(stats.var[c] + eps);
    for (std::size_t n = 0; n < s[0]; ++n)
      for (std::size_t h = 0; h < s[2]; ++h)
        for (std::size_t w = 0; w < s[3]; ++w) {
          const double v = (input.at(n, c, h, w) - mean) * stats.inv_std[c];
          normalized.at(n, c, h, w) = v;
          output.at(n, c, h, w) = gamma[c] * v + beta[c];
        }
  }
  return output;
}

void batchnorm_train_backward(const Tensor& grad_output, const Tensor& normalized,
                              const Tensor& gamma, const BatchStats& stats, Tensor* grad_input,
                              Tensor* grad_gamma, Tensor* grad_beta) {
  const Shape& s = normalized.shape();
  const double count = static_cast<double>(values_per_channel(normalized));
  if (grad_input) *grad_input = Tensor(s);
  if (grad_gamma) *grad_gamma = Tensor({s[1]});
  if (grad_beta) *grad_beta = Tensor({s[1]});
  for (std::size_t c = 0; c < s[1]; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s[0]; ++n)
      for (std::size_t h = 0; h < s[2]; ++h)
        for (std::size_t w = 0; w < s[3]; ++w) {
          sum_dy += grad_output.at(n, c, h, w);
          sum_dy_xhat += grad_output.at(n, c, h, w) * normalized.at(n, c, h, w);
        }
    if (grad_gamma) (*grad_gamma)[c] = sum_dy_xhat;
    if (grad_beta) (*grad_beta)[c] = sum_dy;
    if (!grad_input) continue;
    for (std::size_t n = 0; n < s[0]; ++n)
      for (std::size_t h = 0; h < s[2]; ++h)
        for (std::size_t w = 0; w < s[3]; ++w)
          grad_input->at(n, c, h, w) =
              gamma[c] * stats.inv_std[c] / count *
              (count * grad_output.at(n, c, h, w) - sum_dy - normalized.at(n, c, h, w) * sum_dy_xhat);
  }
}

}  // namespace reference
}  // namespace hdet::kernels
