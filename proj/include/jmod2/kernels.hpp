#pragma once

#include <span>

#include "jmod2/tensor.hpp"

// Data-parallel building blocks of the network. Every kernel here has a
// plain serial counterpart in reference_kernels.hpp; tests and the benchmark
// compare the two. Work is partitioned so each output element is written by a
// single thread in a fixed order, which keeps results bit-identical for any
// thread count.
namespace jmod2::kernels {

// Weights are laid out [out_c][in_c][kernel][kernel]; padding is kernel/2 with
// zeros, stride 1, so spatial size is preserved.
void conv2d_forward(const Tensor& in, std::span<const double> weights,
                    std::span<const double> bias, int kernel, Tensor& out);

// Accumulates into grad_weights / grad_bias. grad_in is overwritten unless null.
void conv2d_backward(const Tensor& in, std::span<const double> weights, int kernel,
                     const Tensor& grad_out, Tensor* grad_in,
                     std::span<double> grad_weights, std::span<double> grad_bias);

void elu_forward(const Tensor& in, Tensor& out);
// Uses the forward output: d/dx elu(x) = 1 for x > 0, elu(x) + 1 otherwise.
void elu_backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in);

// 2x2 mean pooling, stride 2. Input dimensions must be even.
void avg_pool2_forward(const Tensor& in, Tensor& out);
void avg_pool2_backward(const Tensor& grad_out, Tensor& grad_in);

void upsample_nearest2_forward(const Tensor& in, Tensor& out);
void upsample_nearest2_backward(const Tensor& grad_out, Tensor& grad_in);

// Half-pixel-centred bilinear x2 upsampling with edge clamping.
void upsample_bilinear2_forward(const Tensor& in, Tensor& out);
void upsample_bilinear2_backward(const Tensor& grad_out, Tensor& grad_in);

}  // namespace jmod2::kernels
