#pragma once

#include <span>

#include "jmod2/tensor.hpp"

// Straightforward serial loops mirroring jmod2::kernels. Kept for testing and
// benchmarking only; the model never calls these.
namespace jmod2::reference {

void conv2d_forward(const Tensor& in, std::span<const double> weights,
                    std::span<const double> bias, int kernel, Tensor& out);
void conv2d_backward(const Tensor& in, std::span<const double> weights, int kernel,
                     const Tensor& grad_out, Tensor* grad_in,
                     std::span<double> grad_weights, std::span<double> grad_bias);
void avg_pool2_forward(const Tensor& in, Tensor& out);
void upsample_bilinear2_forward(const Tensor& in, Tensor& out);
void upsample_bilinear2_backward(const Tensor& grad_out, Tensor& grad_in);

}  // namespace jmod2::reference
