#include "jmod2/reference_kernels.hpp"

#include <algorithm>
#include <cmath>

namespace jmod2::reference {
namespace {

// Weight that output coordinate `o` places on input coordinate `i` along one
// axis for half-pixel-centred x2 bilinear upsampling with edge clamping.
double bilinear_weight(int o, int i, int in_size) {
  const double src = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(in_size - 1));
  const double d = std::abs(src - i);
  return d < 1.0 ? 1.0 - d : 0.0;
}

}  // namespace

void conv2d_forward(const Tensor& in, std::span<const double> weights,
                    std::span<const double> bias, int kernel, Tensor& out) {
  const int in_c = in.channels();
  const int out_c = static_cast<int>(bias.size());
  const int h = in.height();
  const int w = in.width();
  const int r = kernel / 2;
  out = Tensor(out_c, h, w);
  for (int co = 0; co < out_c; ++co) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = bias[co];
        for (int ci = 0; ci < in_c; ++ci) {
          for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
              const int sy = y + ky - r;
              const int sx = x + kx - r;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              acc += weights[((co * in_c + ci) * kernel + ky) * kernel + kx] * in.at(ci, sy, sx);
            }
          }
        }
        out.at(co, y, x) = acc;
      }
    }
  }
}

void conv2d_backward(const Tensor& in, std::span<const double> weights, int kernel,
                     const Tensor& grad_out, Tensor* grad_in,
                     std::span<double> grad_weights, std::span<double> grad_bias) {
  const int in_c = in.channels();
  const int out_c = grad_out.channels();
  const int h = in.height();
  const int w = in.width();
  const int r = kernel / 2;
  if (grad_in != nullptr) *grad_in = Tensor(in_c, h, w);
  for (int co = 0; co < out_c; ++co) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double g = grad_out.at(co, y, x);
        grad_bias[co] += g;
        for (int ci = 0; ci < in_c; ++ci) {
          for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
              const int sy = y + ky - r;
              const int sx = x + kx - r;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              const std::size_t wi = ((co * in_c + ci) * kernel + ky) * kernel + kx;
              grad_weights[wi] += g * in.at(ci, sy, sx);
              if (grad_in != nullptr) grad_in->at(ci, sy, sx) += g * weights[wi];
            }
          }
        }
      }
    }
  }
}

void avg_pool2_forward(const Tensor& in, Tensor& out) {
  out = Tensor(in.channels(), in.height() / 2, in.width() / 2);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < in.height(); ++y) {
      for (int x = 0; x < in.width(); ++x) out.at(c, y / 2, x / 2) += 0.25 * in.at(c, y, x);
    }
  }
}

void upsample_bilinear2_forward(const Tensor& in, Tensor& out) {
  const int ih = in.height();
  const int iw = in.width();
  out = Tensor(in.channels(), ih * 2, iw * 2);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < ih * 2; ++y) {
      for (int x = 0; x < iw * 2; ++x) {
        double acc = 0.0;
        for (int sy = 0; sy < ih; ++sy) {
          const double wy = bilinear_weight(y, sy, ih);
          if (wy == 0.0) continue;
          for (int sx = 0; sx < iw; ++sx) acc += wy * bilinear_weight(x, sx, iw) * in.at(c, sy, sx);
        }
        out.at(c, y, x) = acc;
      }
    }
  }
}

void upsample_bilinear2_backward(const Tensor& grad_out, Tensor& grad_in) {
  const int ih = grad_out.height() / 2;
  const int iw = grad_out.width() / 2;
  grad_in = Tensor(grad_out.channels(), ih, iw);
  for (int c = 0; c < grad_out.channels(); ++c) {
    for (int sy = 0; sy < ih; ++sy) {
      for (int sx = 0; sx < iw; ++sx) {
        double acc = 0.0;
        for (int y = 0; y < ih * 2; ++y) {
          const double wy = bilinear_weight(y, sy, ih);
          if (wy == 0.0) continue;
          for (int x = 0; x < iw * 2; ++x) acc += wy * bilinear_weight(x, sx, iw) * grad_out.at(c, y, x);
        }
        grad_in.at(c, sy, sx) = acc;
      }
    }
  }
}

}  // namespace jmod2::reference
