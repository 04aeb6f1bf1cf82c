#include "s3pool/layers.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "s3pool/common.hpp"

namespace s3pool {

namespace {

void check_conv_args(const Tensor4& x, const Tensor4& kernel,
                     const Tensor4& bias, int64_t pad) {
  require(pad >= 0, "conv2d: pad must be >= 0");
  require(kernel.dims().h == kernel.dims().w, "conv2d: kernel must be square");
  require(kernel.dims().c == x.dims().c,
          "conv2d: kernel in_channels must match input channels");
  require(bias.dims() == Dims4{1, kernel.dims().n, 1, 1},
          "conv2d: bias dims must be (1, out_channels, 1, 1)");
  require(x.dims().h + 2 * pad >= kernel.dims().h &&
              x.dims().w + 2 * pad >= kernel.dims().w,
          "conv2d: kernel larger than padded input");
}

// Copies one input example into a zero-padded (c, h+2p, w+2p) buffer.
void fill_padded(const Tensor4& x, int64_t n, int64_t pad,
                 std::vector<double>& buf, int64_t hp, int64_t wp) {
  const Dims4 d = x.dims();
  std::memset(buf.data(), 0, buf.size() * sizeof(double));
  for (int64_t c = 0; c < d.c; ++c) {
    const double* src = x.data() + x.plane_offset(n, c);
    double* dst = buf.data() + c * hp * wp + pad * wp + pad;
    for (int64_t y = 0; y < d.h; ++y) {
      std::memcpy(dst + y * wp, src + y * d.w, size_t(d.w) * sizeof(double));
    }
  }
}

}  // namespace

Tensor4 conv2d_forward(const Tensor4& x, const Tensor4& kernel,
                       const Tensor4& bias, int64_t pad) {
  check_conv_args(x, kernel, bias, pad);
  const Dims4 xd = x.dims();
  const int64_t co_n = kernel.dims().n;
  const int64_t d = kernel.dims().h;
  const int64_t hp = xd.h + 2 * pad;
  const int64_t wp = xd.w + 2 * pad;
  const int64_t oh = hp - d + 1;
  const int64_t ow = wp - d + 1;

  Tensor4 y({xd.n, co_n, oh, ow});
  std::vector<double> xpad(size_t(xd.c) * hp * wp);
  for (int64_t n = 0; n < xd.n; ++n) {
    fill_padded(x, n, pad, xpad, hp, wp);
    for (int64_t co = 0; co < co_n; ++co) {
      double* out = y.data() + y.plane_offset(n, co);
      const double b = bias.at(0, co, 0, 0);
      for (int64_t i = 0; i < oh * ow; ++i) out[i] = b;
      for (int64_t ci = 0; ci < xd.c; ++ci) {
        const double* plane = xpad.data() + ci * hp * wp;
        for (int64_t dy = 0; dy < d; ++dy) {
          for (int64_t dx = 0; dx < d; ++dx) {
            const double kv = kernel.at(co, ci, dy, dx);
            if (kv == 0.0) continue;
            for (int64_t oy = 0; oy < oh; ++oy) {
              const double* row = plane + (oy + dy) * wp + dx;
              double* orow = out + oy * ow;
              for (int64_t ox = 0; ox < ow; ++ox) orow[ox] += kv * row[ox];
            }
          }
        }
      }
    }
  }
  return y;
}

ConvGrads conv2d_backward(const Tensor4& grad_y, const Tensor4& x,
                          const Tensor4& kernel, int64_t pad) {
  Tensor4 bias_shape({1, kernel.dims().n, 1, 1});
  check_conv_args(x, kernel, bias_shape, pad);
  const Dims4 xd = x.dims();
  const int64_t co_n = kernel.dims().n;
  const int64_t d = kernel.dims().h;
  const int64_t hp = xd.h + 2 * pad;
  const int64_t wp = xd.w + 2 * pad;
  const int64_t oh = hp - d + 1;
  const int64_t ow = wp - d + 1;
  require(grad_y.dims() == Dims4{xd.n, co_n, oh, ow},
          "conv2d_backward: grad_y dims mismatch");

  ConvGrads g{Tensor4(xd), Tensor4(kernel.dims()), Tensor4(bias_shape.dims())};
  std::vector<double> xpad(size_t(xd.c) * hp * wp);
  std::vector<double> gpad(size_t(xd.c) * hp * wp);

  for (int64_t n = 0; n < xd.n; ++n) {
    fill_padded(x, n, pad, xpad, hp, wp);
    std::memset(gpad.data(), 0, gpad.size() * sizeof(double));
    for (int64_t co = 0; co < co_n; ++co) {
      const double* gy = grad_y.data() + grad_y.plane_offset(n, co);
      double bsum = 0.0;
      for (int64_t i = 0; i < oh * ow; ++i) bsum += gy[i];
      g.bias.at(0, co, 0, 0) += bsum;
      for (int64_t ci = 0; ci < xd.c; ++ci) {
        const double* plane = xpad.data() + ci * hp * wp;
        double* gplane = gpad.data() + ci * hp * wp;
        for (int64_t dy = 0; dy < d; ++dy) {
          for (int64_t dx = 0; dx < d; ++dx) {
            const double kv = kernel.at(co, ci, dy, dx);
            double ksum = 0.0;
            for (int64_t oy = 0; oy < oh; ++oy) {
              const double* row = plane + (oy + dy) * wp + dx;
              double* grow = gplane + (oy + dy) * wp + dx;
              const double* gyrow = gy + oy * ow;
              for (int64_t ox = 0; ox < ow; ++ox) {
                ksum += gyrow[ox] * row[ox];
                grow[ox] += kv * gyrow[ox];
              }
            }
            g.kernel.at(co, ci, dy, dx) += ksum;
          }
        }
      }
    }
    for (int64_t ci = 0; ci < xd.c; ++ci) {
      const double* gplane = gpad.data() + ci * hp * wp + pad * wp + pad;
      double* dst = g.x.data() + g.x.plane_offset(n, ci);
      for (int64_t y = 0; y < xd.h; ++y) {
        std::memcpy(dst + y * xd.w, gplane + y * wp,
                    size_t(xd.w) * sizeof(double));
      }
    }
  }
  return g;
}

Tensor4 relu_forward(const Tensor4& x) {
  Tensor4 y(x.dims());
  const double* src = x.data();
  double* dst = y.data();
  const int64_t cnt = x.dims().count();
  for (int64_t i = 0; i < cnt; ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return y;
}

Tensor4 relu_backward(const Tensor4& grad_y, const Tensor4& x) {
  require(grad_y.dims() == x.dims(), "relu_backward: dims mismatch");
  Tensor4 g(x.dims());
  const double* gy = grad_y.data();
  const double* src = x.data();
  double* dst = g.data();
  const int64_t cnt = x.dims().count();
  for (int64_t i = 0; i < cnt; ++i) dst[i] = src[i] > 0.0 ? gy[i] : 0.0;
  return g;
}

std::pair<Tensor4, BatchNormTape> batchnorm_forward(
    const Tensor4& x, const Tensor4& gamma, const Tensor4& beta,
    Tensor4& running_mean, Tensor4& running_var, PoolMode mode,
    double momentum, double eps) {
  const Dims4 d = x.dims();
  const Dims4 stat{1, d.c, 1, 1};
  require(gamma.dims() == stat && beta.dims() == stat &&
              running_mean.dims() == stat && running_var.dims() == stat,
          "batchnorm: per-channel tensors must be (1, c, 1, 1)");
  require(momentum > 0.0 && momentum < 1.0, "batchnorm: momentum in (0, 1)");
  require(eps > 0.0, "batchnorm: eps must be positive");

  const int64_t m = d.n * d.h * d.w;
  Tensor4 y(d);
  BatchNormTape tape{Tensor4(d), std::vector<double>(size_t(d.c))};

  for (int64_t c = 0; c < d.c; ++c) {
    double mean, var;
    if (mode == PoolMode::Train) {
      double sum = 0.0;
      for (int64_t n = 0; n < d.n; ++n) {
        const double* p = x.data() + x.plane_offset(n, c);
        for (int64_t i = 0; i < d.h * d.w; ++i) sum += p[i];
      }
      mean = sum / double(m);
      double sq = 0.0;
      for (int64_t n = 0; n < d.n; ++n) {
        const double* p = x.data() + x.plane_offset(n, c);
        for (int64_t i = 0; i < d.h * d.w; ++i) {
          const double t = p[i] - mean;
          sq += t * t;
        }
      }
      var = sq / double(m);
      running_mean.at(0, c, 0, 0) =
          momentum * running_mean.at(0, c, 0, 0) + (1.0 - momentum) * mean;
      running_var.at(0, c, 0, 0) =
          momentum * running_var.at(0, c, 0, 0) + (1.0 - momentum) * var;
    } else {
      mean = running_mean.at(0, c, 0, 0);
      var = running_var.at(0, c, 0, 0);
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    tape.inv_std[size_t(c)] = inv;
    const double gsc = gamma.at(0, c, 0, 0);
    const double bsh = beta.at(0, c, 0, 0);
    for (int64_t n = 0; n < d.n; ++n) {
      const double* p = x.data() + x.plane_offset(n, c);
      double* xh = tape.x_hat.data() + tape.x_hat.plane_offset(n, c);
      double* out = y.data() + y.plane_offset(n, c);
      for (int64_t i = 0; i < d.h * d.w; ++i) {
        xh[i] = (p[i] - mean) * inv;
        out[i] = gsc * xh[i] + bsh;
      }
    }
  }
  return {std::move(y), std::move(tape)};
}

BatchNormGrads batchnorm_backward(const Tensor4& grad_y, const BatchNormTape& tape,
                                  const Tensor4& gamma) {
  const Dims4 d = grad_y.dims();
  require(tape.x_hat.dims() == d, "batchnorm_backward: tape dims mismatch");
  require(gamma.dims() == Dims4{1, d.c, 1, 1},
          "batchnorm_backward: gamma dims mismatch");

  const int64_t m = d.n * d.h * d.w;
  BatchNormGrads g{Tensor4(d), Tensor4({1, d.c, 1, 1}), Tensor4({1, d.c, 1, 1})};
  for (int64_t c = 0; c < d.c; ++c) {
    double sum_gy = 0.0;
    double sum_gy_xh = 0.0;
    for (int64_t n = 0; n < d.n; ++n) {
      const double* gy = grad_y.data() + grad_y.plane_offset(n, c);
      const double* xh = tape.x_hat.data() + tape.x_hat.plane_offset(n, c);
      for (int64_t i = 0; i < d.h * d.w; ++i) {
        sum_gy += gy[i];
        sum_gy_xh += gy[i] * xh[i];
      }
    }
    g.beta.at(0, c, 0, 0) = sum_gy;
    g.gamma.at(0, c, 0, 0) = sum_gy_xh;
    const double scale =
        gamma.at(0, c, 0, 0) * tape.inv_std[size_t(c)] / double(m);
    for (int64_t n = 0; n < d.n; ++n) {
      const double* gy = grad_y.data() + grad_y.plane_offset(n, c);
      const double* xh = tape.x_hat.data() + tape.x_hat.plane_offset(n, c);
      double* gx = g.x.data() + g.x.plane_offset(n, c);
      for (int64_t i = 0; i < d.h * d.w; ++i) {
        gx[i] = scale * (double(m) * gy[i] - sum_gy - xh[i] * sum_gy_xh);
      }
    }
  }
  return g;
}

Tensor4 global_avg_pool_forward(const Tensor4& x) {
  const Dims4 d = x.dims();
  Tensor4 y({d.n, d.c, 1, 1});
  const double inv = 1.0 / double(d.h * d.w);
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t c = 0; c < d.c; ++c) {
      const double* p = x.data() + x.plane_offset(n, c);
      double sum = 0.0;
      for (int64_t i = 0; i < d.h * d.w; ++i) sum += p[i];
      y.at(n, c, 0, 0) = sum * inv;
    }
  }
  return y;
}

Tensor4 global_avg_pool_backward(const Tensor4& grad_y, const Dims4& input_dims) {
  require(grad_y.dims() == Dims4{input_dims.n, input_dims.c, 1, 1},
          "global_avg_pool_backward: grad_y dims mismatch");
  Tensor4 g(input_dims);
  const double inv = 1.0 / double(input_dims.h * input_dims.w);
  for (int64_t n = 0; n < input_dims.n; ++n) {
    for (int64_t c = 0; c < input_dims.c; ++c) {
      const double v = grad_y.at(n, c, 0, 0) * inv;
      double* p = g.data() + g.plane_offset(n, c);
      for (int64_t i = 0; i < input_dims.h * input_dims.w; ++i) p[i] = v;
    }
  }
  return g;
}

std::pair<double, Tensor4> softmax_ce(const Tensor4& logits,
                                      const std::vector<int64_t>& labels) {
  const Dims4 d = logits.dims();
  require(d.h == 1 && d.w == 1, "softmax_ce: logits must be (n, K, 1, 1)");
  require(int64_t(labels.size()) == d.n,
          "softmax_ce: labels size must match batch");
  Tensor4 grad(d);
  double loss = 0.0;
  const double inv_n = 1.0 / double(d.n);
  for (int64_t n = 0; n < d.n; ++n) {
    require(labels[size_t(n)] >= 0 && labels[size_t(n)] < d.c,
            "softmax_ce: label out of range");
    double mx = logits.at(n, 0, 0, 0);
    for (int64_t c = 1; c < d.c; ++c) mx = std::max(mx, logits.at(n, c, 0, 0));
    double denom = 0.0;
    for (int64_t c = 0; c < d.c; ++c) {
      denom += std::exp(logits.at(n, c, 0, 0) - mx);
    }
    const double lse = mx + std::log(denom);
    loss += (lse - logits.at(n, labels[size_t(n)], 0, 0)) * inv_n;
    for (int64_t c = 0; c < d.c; ++c) {
      const double p = std::exp(logits.at(n, c, 0, 0) - lse);
      grad.at(n, c, 0, 0) =
          (p - (c == labels[size_t(n)] ? 1.0 : 0.0)) * inv_n;
    }
  }
  return {loss, std::move(grad)};
}

std::pair<Tensor4, Tensor4> dropout_forward(const Tensor4& x, double rate,
                                            const RngStream& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  Tensor4 y(x.dims());
  Tensor4 mask(x.dims());
  const double scale = 1.0 / (1.0 - rate);
  RngStream local = rng;
  const double* src = x.data();
  double* my = mask.data();
  double* out = y.data();
  const int64_t cnt = x.dims().count();
  for (int64_t i = 0; i < cnt; ++i) {
    const double keep = local.next_double() >= rate ? scale : 0.0;
    my[i] = keep;
    out[i] = src[i] * keep;
  }
  return {std::move(y), std::move(mask)};
}

Tensor4 dropout_backward(const Tensor4& grad_y, const Tensor4& mask) {
  require(grad_y.dims() == mask.dims(), "dropout_backward: dims mismatch");
  Tensor4 g(grad_y.dims());
  const double* gy = grad_y.data();
  const double* mk = mask.data();
  double* dst = g.data();
  const int64_t cnt = g.dims().count();
  for (int64_t i = 0; i < cnt; ++i) dst[i] = gy[i] * mk[i];
  return g;
}

void adadelta_step(std::vector<Tensor4>& params,
                   const std::vector<Tensor4>& grads,
                   std::vector<Tensor4>& acc_grad,
                   std::vector<Tensor4>& acc_delta, double lr,
                   const AdadeltaConfig& cfg) {
  require(params.size() == grads.size() && params.size() == acc_grad.size() &&
              params.size() == acc_delta.size(),
          "adadelta_step: tensor list sizes must match");
  require(lr > 0.0, "adadelta_step: lr must be positive");
  for (size_t p = 0; p < params.size(); ++p) {
    require(grads[p].dims() == params[p].dims() &&
                acc_grad[p].dims() == params[p].dims() &&
                acc_delta[p].dims() == params[p].dims(),
            "adadelta_step: dims mismatch");
    const int64_t cnt = params[p].dims().count();
    double* w = params[p].data();
    const double* g = grads[p].data();
    double* eg = acc_grad[p].data();
    double* ed = acc_delta[p].data();
    for (int64_t i = 0; i < cnt; ++i) {
      require(std::isfinite(g[i]), "adadelta_step: non-finite gradient");
      eg[i] = cfg.rho * eg[i] + (1.0 - cfg.rho) * g[i] * g[i];
      const double delta =
          -std::sqrt(ed[i] + cfg.eps) / std::sqrt(eg[i] + cfg.eps) * g[i];
      ed[i] = cfg.rho * ed[i] + (1.0 - cfg.rho) * delta * delta;
      w[i] += lr * delta;
    }
  }
}

}  // namespace s3pool
