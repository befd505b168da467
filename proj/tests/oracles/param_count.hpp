#pragma once

// Hand-summed parameter and FLOP counts from the layer shape formulas.

#include <cstddef>
#include <cstdint>
#include <optional>

#include "hdet/detector.hpp"

namespace oracle {

// Conv kernels carry no bias ahead of a batchnorm; each batchnorm adds gamma and beta.
inline std::size_t conv_bn_params(std::size_t cin, std::size_t cout, std::size_t k) { return cin * cout * k * k + 2 * cout; }

inline std::size_t parameter_count(const hdet::DetectorConfig& d, const std::optional<hdet::HybridBlockConfig>& h) {
  std::size_t total = 0, cin = 3;
  if (h)
    for (const auto& l : h->layers) total += conv_bn_params(cin, l.out_channels, l.kernel_size), cin = l.out_channels;
  for (const auto& s : d.stem) total += conv_bn_params(cin, s.out_channels, 3), cin = s.out_channels;
  const std::size_t out = d.boxes_per_cell * 5 + d.num_classes;
  return total + cin * out + out;  // 1x1 head with bias
}

inline std::uint64_t flops(const hdet::DetectorConfig& d, const std::optional<hdet::HybridBlockConfig>& h) {
  std::uint64_t total = 0;
  std::size_t cin = 3, size = d.input_size;
  auto layer = [&](std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad) {
    size = (size + 2 * pad - k) / stride + 1;
    const std::uint64_t elems = cout * size * size;
    total += elems * (2 * cin * k * k) + elems * 5 + elems;
    cin = cout;
  };
  if (h)
    for (const auto& l : h->layers) layer(l.out_channels, l.kernel_size, 1, l.padding);
  for (const auto& s : d.stem) layer(s.out_channels, 3, s.stride, 1);
  const std::uint64_t out = d.boxes_per_cell * 5 + d.num_classes;
  return total + out * size * size * (2 * cin + 1);
}

}  // namespace oracle
