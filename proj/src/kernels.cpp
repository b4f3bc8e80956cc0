#include "jmod2/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace jmod2::kernels {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

struct Tap {
  int lo;
  int hi;
  double w_lo;
  double w_hi;
};

// Sampling taps for half-pixel-centred x2 bilinear upsampling along one axis.
std::vector<Tap> bilinear_taps(int in_size) {
  std::vector<Tap> taps(static_cast<std::size_t>(in_size) * 2);
  for (int o = 0; o < in_size * 2; ++o) {
    const double src = (o + 0.5) / 2.0 - 0.5;
    const int base = static_cast<int>(std::floor(src));
    const double frac = src - base;
    taps[o] = {std::clamp(base, 0, in_size - 1), std::clamp(base + 1, 0, in_size - 1),
               1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

void conv2d_forward(const Tensor& in, std::span<const double> weights,
                    std::span<const double> bias, int kernel, Tensor& out) {
  const int in_c = in.channels();
  const int out_c = static_cast<int>(bias.size());
  const int h = in.height();
  const int w = in.width();
  require(kernel % 2 == 1, "conv kernel must be odd");
  require(weights.size() == static_cast<std::size_t>(out_c) * in_c * kernel * kernel,
          "conv weight size mismatch");
  if (out.channels() != out_c || out.height() != h || out.width() != w) {
    out = Tensor(out_c, h, w);
  }
  const int r = kernel / 2;
  const std::size_t ksq = static_cast<std::size_t>(kernel) * kernel;

#pragma omp parallel for schedule(static)
  for (int co = 0; co < out_c; ++co) {
    double* dst_plane = out.channel(co).data();
    std::fill(dst_plane, dst_plane + out.plane(), bias[co]);
    for (int ci = 0; ci < in_c; ++ci) {
      const double* src_plane = in.channel(ci).data();
      const double* wk = weights.data() + (static_cast<std::size_t>(co) * in_c + ci) * ksq;
      for (int ky = 0; ky < kernel; ++ky) {
        const int dy = ky - r;
        const int y_begin = std::max(0, -dy);
        const int y_end = std::min(h, h - dy);
        for (int kx = 0; kx < kernel; ++kx) {
          const int dx = kx - r;
          const int x_begin = std::max(0, -dx);
          const int x_end = std::min(w, w - dx);
          const double wv = wk[ky * kernel + kx];
          for (int y = y_begin; y < y_end; ++y) {
            double* dst = dst_plane + static_cast<std::size_t>(y) * w;
            const double* src = src_plane + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x_begin; x < x_end; ++x) dst[x] += wv * src[x];
          }
        }
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
  require(grad_out.height() == h && grad_out.width() == w, "conv grad shape mismatch");
  require(grad_weights.size() == weights.size(), "conv grad weight size mismatch");
  require(grad_bias.size() == static_cast<std::size_t>(out_c), "conv grad bias size mismatch");
  const int r = kernel / 2;
  const std::size_t ksq = static_cast<std::size_t>(kernel) * kernel;

  // Weight and bias gradients: one output channel per thread.
#pragma omp parallel for schedule(static)
  for (int co = 0; co < out_c; ++co) {
    const double* g_plane = grad_out.channel(co).data();
    double bsum = 0.0;
    for (std::size_t i = 0; i < grad_out.plane(); ++i) bsum += g_plane[i];
    grad_bias[co] += bsum;
    for (int ci = 0; ci < in_c; ++ci) {
      const double* src_plane = in.channel(ci).data();
      double* gw = grad_weights.data() + (static_cast<std::size_t>(co) * in_c + ci) * ksq;
      for (int ky = 0; ky < kernel; ++ky) {
        const int dy = ky - r;
        const int y_begin = std::max(0, -dy);
        const int y_end = std::min(h, h - dy);
        for (int kx = 0; kx < kernel; ++kx) {
          const int dx = kx - r;
          const int x_begin = std::max(0, -dx);
          const int x_end = std::min(w, w - dx);
          double acc = 0.0;
          for (int y = y_begin; y < y_end; ++y) {
            const double* g = g_plane + static_cast<std::size_t>(y) * w;
            const double* src = src_plane + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x_begin; x < x_end; ++x) acc += g[x] * src[x];
          }
          gw[ky * kernel + kx] += acc;
        }
      }
    }
  }

  if (grad_in == nullptr) return;
  if (!grad_in->same_shape(in)) *grad_in = Tensor(in_c, h, w);

  // Input gradient: one input channel per thread.
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < in_c; ++ci) {
    double* dst_plane = grad_in->channel(ci).data();
    std::fill(dst_plane, dst_plane + grad_in->plane(), 0.0);
    for (int co = 0; co < out_c; ++co) {
      const double* g_plane = grad_out.channel(co).data();
      const double* wk = weights.data() + (static_cast<std::size_t>(co) * in_c + ci) * ksq;
      for (int ky = 0; ky < kernel; ++ky) {
        const int dy = ky - r;
        const int y_begin = std::max(0, -dy);
        const int y_end = std::min(h, h - dy);
        for (int kx = 0; kx < kernel; ++kx) {
          const int dx = kx - r;
          const int x_begin = std::max(0, -dx);
          const int x_end = std::min(w, w - dx);
          const double wv = wk[ky * kernel + kx];
          for (int y = y_begin; y < y_end; ++y) {
            const double* g = g_plane + static_cast<std::size_t>(y) * w;
            double* dst = dst_plane + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x_begin; x < x_end; ++x) dst[x] += wv * g[x];
          }
        }
      }
    }
  }
}

void elu_forward(const Tensor& in, Tensor& out) {
  if (!out.same_shape(in)) out = Tensor(in.channels(), in.height(), in.width());
  const auto src = in.data();
  auto dst = out.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(src.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double v = src[i];
    dst[i] = v > 0.0 ? v : std::expm1(v);
  }
}

void elu_backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) {
  require(in.same_shape(grad_out) && out.same_shape(grad_out), "elu shape mismatch");
  if (!grad_in.same_shape(in)) grad_in = Tensor(in.channels(), in.height(), in.width());
  const auto x = in.data();
  const auto y = out.data();
  const auto g = grad_out.data();
  auto dst = grad_in.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    dst[i] = x[i] > 0.0 ? g[i] : g[i] * (y[i] + 1.0);
  }
}

void avg_pool2_forward(const Tensor& in, Tensor& out) {
  require(in.height() % 2 == 0 && in.width() % 2 == 0, "avg_pool2 needs even dimensions");
  const int c = in.channels();
  const int oh = in.height() / 2;
  const int ow = in.width() / 2;
  if (out.channels() != c || out.height() != oh || out.width() != ow) out = Tensor(c, oh, ow);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        out.at(ch, y, x) = 0.25 * (in.at(ch, 2 * y, 2 * x) + in.at(ch, 2 * y, 2 * x + 1) +
                                   in.at(ch, 2 * y + 1, 2 * x) + in.at(ch, 2 * y + 1, 2 * x + 1));
      }
    }
  }
}

void avg_pool2_backward(const Tensor& grad_out, Tensor& grad_in) {
  const int c = grad_out.channels();
  const int oh = grad_out.height();
  const int ow = grad_out.width();
  if (grad_in.channels() != c || grad_in.height() != 2 * oh || grad_in.width() != 2 * ow) {
    grad_in = Tensor(c, 2 * oh, 2 * ow);
  }
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < 2 * oh; ++y) {
      for (int x = 0; x < 2 * ow; ++x) {
        grad_in.at(ch, y, x) = 0.25 * grad_out.at(ch, y / 2, x / 2);
      }
    }
  }
}

void upsample_nearest2_forward(const Tensor& in, Tensor& out) {
  const int c = in.channels();
  const int oh = in.height() * 2;
  const int ow = in.width() * 2;
  if (out.channels() != c || out.height() != oh || out.width() != ow) out = Tensor(c, oh, ow);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) out.at(ch, y, x) = in.at(ch, y / 2, x / 2);
    }
  }
}

void upsample_nearest2_backward(const Tensor& grad_out, Tensor& grad_in) {
  require(grad_out.height() % 2 == 0 && grad_out.width() % 2 == 0, "upsample grad shape");
  const int c = grad_out.channels();
  const int ih = grad_out.height() / 2;
  const int iw = grad_out.width() / 2;
  if (grad_in.channels() != c || grad_in.height() != ih || grad_in.width() != iw) {
    grad_in = Tensor(c, ih, iw);
  }
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < ih; ++y) {
      for (int x = 0; x < iw; ++x) {
        grad_in.at(ch, y, x) = grad_out.at(ch, 2 * y, 2 * x) + grad_out.at(ch, 2 * y, 2 * x + 1) +
                               grad_out.at(ch, 2 * y + 1, 2 * x) +
                               grad_out.at(ch, 2 * y + 1, 2 * x + 1);
      }
    }
  }
}

void upsample_bilinear2_forward(const Tensor& in, Tensor& out) {
  const int c = in.channels();
  const int oh = in.height() * 2;
  const int ow = in.width() * 2;
  if (out.channels() != c || out.height() != oh || out.width() != ow) out = Tensor(c, oh, ow);
  const auto ty = bilinear_taps(in.height());
  const auto tx = bilinear_taps(in.width());
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < oh; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < ow; ++x) {
        const Tap& b = tx[x];
        out.at(ch, y, x) = a.w_lo * (b.w_lo * in.at(ch, a.lo, b.lo) + b.w_hi * in.at(ch, a.lo, b.hi)) +
                           a.w_hi * (b.w_lo * in.at(ch, a.hi, b.lo) + b.w_hi * in.at(ch, a.hi, b.hi));
      }
    }
  }
}

void upsample_bilinear2_backward(const Tensor& grad_out, Tensor& grad_in) {
  require(grad_out.height() % 2 == 0 && grad_out.width() % 2 == 0, "upsample grad shape");
  const int c = grad_out.channels();
  const int ih = grad_out.height() / 2;
  const int iw = grad_out.width() / 2;
  if (grad_in.channels() != c || grad_in.height() != ih || grad_in.width() != iw) {
    grad_in = Tensor(c, ih, iw);
  }
  const auto ty = bilinear_taps(ih);
  const auto tx = bilinear_taps(iw);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    auto plane = grad_in.channel(ch);
    std::fill(plane.begin(), plane.end(), 0.0);
    for (int y = 0; y < 2 * ih; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < 2 * iw; ++x) {
        const Tap& b = tx[x];
        const double g = grad_out.at(ch, y, x);
        grad_in.at(ch, a.lo, b.lo) += a.w_lo * b.w_lo * g;
        grad_in.at(ch, a.lo, b.hi) += a.w_lo * b.w_hi * g;
        grad_in.at(ch, a.hi, b.lo) += a.w_hi * b.w_lo * g;
        grad_in.at(ch, a.hi, b.hi) += a.w_hi * b.w_hi * g;
      }
    }
  }
}

}  // namespace jmod2::kernels
