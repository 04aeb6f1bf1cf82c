#include "s3pool/pooling.hpp"

#include <algorithm>
#include <string>

#include "s3pool/common.hpp"

namespace s3pool {

namespace {

void check_downsample_dims(const Dims4& d, int64_t stride) {
  require(stride >= 1, "stride must be >= 1");
  require(d.h % stride == 0 && d.w % stride == 0,
          "stride " + std::to_string(stride) + " must divide feature map dims " +
              std::to_string(d.h) + "x" + std::to_string(d.w));
}

}  // namespace

std::pair<Tensor4, PoolTape> max_pool_stride1(const Tensor4& x, int64_t window) {
  require(window >= 1, "pool window must be >= 1");
  const Dims4 d = x.dims();
  Tensor4 o(d);
  PoolTape tape;
  tape.input_dims = d;
  tape.window = window;
  tape.stride = 1;
  tape.argmax.resize(static_cast<size_t>(d.count()));

  int64_t slot = 0;
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t c = 0; c < d.c; ++c) {
      const double* plane = x.data() + x.plane_offset(n, c);
      double* out = o.data() + o.plane_offset(n, c);
      for (int64_t y = 0; y < d.h; ++y) {
        const int64_t y_end = std::min(y + window, d.h);
        for (int64_t x0 = 0; x0 < d.w; ++x0) {
          const int64_t x_end = std::min(x0 + window, d.w);
          double best = plane[y * d.w + x0];
          int64_t best_pos = y * d.w + x0;
          for (int64_t yy = y; yy < y_end; ++yy)
            for (int64_t xx = x0; xx < x_end; ++xx) {
              const double v = plane[yy * d.w + xx];
              if (v > best) {
                best = v;
                best_pos = yy * d.w + xx;
              }
            }
          out[y * d.w + x0] = best;
          tape.argmax[static_cast<size_t>(slot++)] = best_pos;
        }
      }
    }
  return {std::move(o), std::move(tape)};
}

Tensor4 max_pool_stride1_backward(const Tensor4& grad_o, const PoolTape& tape) {
  require(tape.mode == PoolMode::Train, "backward requires a train-mode tape");
  const Dims4 d = tape.input_dims;
  require(grad_o.dims() == d, "gradient dims must match the forward output");
  Tensor4 grad_x(d);
  int64_t slot = 0;
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t c = 0; c < d.c; ++c) {
      const double* g = grad_o.data() + grad_o.plane_offset(n, c);
      double* gx = grad_x.data() + grad_x.plane_offset(n, c);
      for (int64_t i = 0; i < d.h * d.w; ++i)
        gx[tape.argmax[static_cast<size_t>(slot++)]] += g[i];
    }
  return grad_x;
}

Tensor4 uniform_downsample(const Tensor4& o, int64_t stride) {
  const Dims4 d = o.dims();
  check_downsample_dims(d, stride);
  Tensor4 z(Dims4{d.n, d.c, d.h / stride, d.w / stride});
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t c = 0; c < d.c; ++c)
      for (int64_t i = 0; i < z.dims().h; ++i)
        for (int64_t j = 0; j < z.dims().w; ++j)
          z.at(n, c, i, j) = o.at(n, c, i * stride, j * stride);
  return z;
}

std::pair<Tensor4, SampleIndices> stochastic_downsample(const Tensor4& o,
                                                        const PoolGeom& geom,
                                                        const RngStream& rng) {
  const Dims4 d = o.dims();
  validate_against(geom, d.h, d.w);
  SampleIndices idx = sample_grid_indices(rng, d.h, d.w, geom);
  return {slice_rows_cols(o, idx.rows, idx.cols), std::move(idx)};
}

Tensor4 stochastic_downsample_with(const Tensor4& o, const SampleIndices& indices) {
  return slice_rows_cols(o, indices.rows, indices.cols);
}

std::pair<Tensor4, std::optional<PoolTape>> s3pool_forward(const Tensor4& x,
                                                           const PoolGeom& geom,
                                                           const RngStream& rng,
                                                           PoolMode mode) {
  validate_against(geom, x.dims().h, x.dims().w);
  auto [o, tape] = max_pool_stride1(x, geom.window);
  if (mode == PoolMode::Infer)
    return {avg_pool(o, geom.stride, geom.stride), std::nullopt};
  auto [z, idx] = stochastic_downsample(o, geom, rng);
  tape.stride = geom.stride;
  tape.indices = std::move(idx);
  return {std::move(z), std::move(tape)};
}

Tensor4 s3pool_backward(const Tensor4& grad_z, const PoolTape& tape) {
  require(tape.mode == PoolMode::Train, "backward requires a train-mode tape");
  require(!tape.indices.rows.empty() && !tape.indices.cols.empty(),
          "tape carries no sampled indices");
  const Dims4 d = tape.input_dims;
  require(grad_z.dims().n == d.n && grad_z.dims().c == d.c,
          "gradient batch/channel dims must match the forward input");
  require(grad_z.dims().h == static_cast<int64_t>(tape.indices.rows.size()) &&
              grad_z.dims().w == static_cast<int64_t>(tape.indices.cols.size()),
          "gradient spatial dims must match the sampled index counts");

  // Route through the sampled positions of o, then through the stride-1
  // argmaxes. argmax entries are laid out o-shaped (h x w per plane).
  Tensor4 grad_x(d);
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t c = 0; c < d.c; ++c) {
      const int64_t plane_base = (n * d.c + c) * d.h * d.w;
      double* gx = grad_x.data() + grad_x.plane_offset(n, c);
      for (int64_t i = 0; i < grad_z.dims().h; ++i)
        for (int64_t j = 0; j < grad_z.dims().w; ++j) {
          const int64_t o_pos = (tape.indices.rows[static_cast<size_t>(i)] - 1) * d.w +
                                (tape.indices.cols[static_cast<size_t>(j)] - 1);
          gx[tape.argmax[static_cast<size_t>(plane_base + o_pos)]] +=
              grad_z.at(n, c, i, j);
        }
    }
  return grad_x;
}

Tensor4 exact_expectation_infer(const Tensor4& x, const PoolGeom& geom) {
  const Dims4 d = x.dims();
  validate_against(geom, d.h, d.w);
  require(geom.grid <= 64, "grid size above exact-arithmetic bound 64");
  const int64_t g = geom.grid;
  const int64_t s = geom.stride;
  const int64_t per_grid = g / s;

  // Per-axis order-statistic weights for every within-grid position.
  std::vector<std::vector<double>> weight(static_cast<size_t>(per_grid));
  for (int64_t pos = 1; pos <= per_grid; ++pos) {
    const auto rat = expectation_weights(geom, pos);
    auto& w = weight[static_cast<size_t>(pos - 1)];
    w.resize(static_cast<size_t>(g));
    for (int64_t a = 0; a < g; ++a) w[static_cast<size_t>(a)] = rat[static_cast<size_t>(a)].value();
  }

  const Tensor4 o = max_pool_stride1(x, geom.window).first;
  Tensor4 z(Dims4{d.n, d.c, d.h / s, d.w / s});
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t c = 0; c < d.c; ++c)
      for (int64_t i = 0; i < z.dims().h; ++i) {
        const int64_t row_grid = s * i / g;            // vertical grid index
        const auto& wr = weight[static_cast<size_t>(i % per_grid)];
        for (int64_t j = 0; j < z.dims().w; ++j) {
          const int64_t col_grid = s * j / g;
          const auto& wc = weight[static_cast<size_t>(j % per_grid)];
          double acc = 0.0;
          for (int64_t a = 0; a < g; ++a) {
            if (wr[static_cast<size_t>(a)] == 0.0) continue;
            double inner = 0.0;
            for (int64_t b = 0; b < g; ++b)
              inner += wc[static_cast<size_t>(b)] *
                       o.at(n, c, row_grid * g + a, col_grid * g + b);
            acc += wr[static_cast<size_t>(a)] * inner;
          }
          z.at(n, c, i, j) = acc;
        }
      }
  return z;
}

Tensor4 avg_pool(const Tensor4& x, int64_t window, int64_t stride) {
  require(window >= 1, "pool window must be >= 1");
  const Dims4 d = x.dims();
  check_downsample_dims(d, stride);
  Tensor4 z(Dims4{d.n, d.c, d.h / stride, d.w / stride});
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t c = 0; c < d.c; ++c)
      for (int64_t i = 0; i < z.dims().h; ++i) {
        const int64_t y0 = i * stride;
        const int64_t y1 = std::min(y0 + window, d.h);
        for (int64_t j = 0; j < z.dims().w; ++j) {
          const int64_t x0 = j * stride;
          const int64_t x1 = std::min(x0 + window, d.w);
          double acc = 0.0;
          for (int64_t yy = y0; yy < y1; ++yy)
            for (int64_t xx = x0; xx < x1; ++xx) acc += x.at(n, c, yy, xx);
          z.at(n, c, i, j) = acc / static_cast<double>((y1 - y0) * (x1 - x0));
        }
      }
  return z;
}

Tensor4 avg_pool_backward(const Tensor4& grad_z, const Dims4& input_dims,
                          int64_t window, int64_t stride) {
  require(window >= 1, "pool window must be >= 1");
  check_downsample_dims(input_dims, stride);
  require(grad_z.dims().n == input_dims.n && grad_z.dims().c == input_dims.c &&
              grad_z.dims().h == input_dims.h / stride &&
              grad_z.dims().w == input_dims.w / stride,
          "gradient dims must match the pooled output");
  Tensor4 grad_x(input_dims);
  for (int64_t n = 0; n < input_dims.n; ++n)
    for (int64_t c = 0; c < input_dims.c; ++c)
      for (int64_t i = 0; i < grad_z.dims().h; ++i) {
        const int64_t y0 = i * stride;
        const int64_t y1 = std::min(y0 + window, input_dims.h);
        for (int64_t j = 0; j < grad_z.dims().w; ++j) {
          const int64_t x0 = j * stride;
          const int64_t x1 = std::min(x0 + window, input_dims.w);
          const double share =
              grad_z.at(n, c, i, j) / static_cast<double>((y1 - y0) * (x1 - x0));
          for (int64_t yy = y0; yy < y1; ++yy)
            for (int64_t xx = x0; xx < x1; ++xx) grad_x.at(n, c, yy, xx) += share;
        }
      }
  return grad_x;
}

std::pair<Tensor4, PoolTape> max_pool_standard(const Tensor4& x, int64_t window,
                                               int64_t stride) {
  require(window >= 1, "pool window must be >= 1");
  const Dims4 d = x.dims();
  check_downsample_dims(d, stride);
  Tensor4 z(Dims4{d.n, d.c, d.h / stride, d.w / stride});
  PoolTape tape;
  tape.input_dims = d;
  tape.window = window;
  tape.stride = stride;
  tape.argmax.resize(static_cast<size_t>(z.dims().count()));

  int64_t slot = 0;
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t c = 0; c < d.c; ++c) {
      const double* plane = x.data() + x.plane_offset(n, c);
      for (int64_t i = 0; i < z.dims().h; ++i) {
        const int64_t y0 = i * stride;
        const int64_t y1 = std::min(y0 + window, d.h);
        for (int64_t j = 0; j < z.dims().w; ++j) {
          const int64_t x0 = j * stride;
          const int64_t x1 = std::min(x0 + window, d.w);
          double best = plane[y0 * d.w + x0];
          int64_t best_pos = y0 * d.w + x0;
          for (int64_t yy = y0; yy < y1; ++yy)
            for (int64_t xx = x0; xx < x1; ++xx) {
              const double v = plane[yy * d.w + xx];
              if (v > best) {
                best = v;
                best_pos = yy * d.w + xx;
              }
            }
          z.at(n, c, i, j) = best;
          tape.argmax[static_cast<size_t>(slot++)] = best_pos;
        }
      }
    }
  return {std::move(z), std::move(tape)};
}

namespace {

// Shared by the fused max and Zeiler baselines: one recorded input position
// per output element.
Tensor4 route_window_grads(const Tensor4& grad_z, const PoolTape& tape) {
  require(tape.mode == PoolMode::Train, "backward requires a train-mode tape");
  const Dims4 d = tape.input_dims;
  require(grad_z.dims().n == d.n && grad_z.dims().c == d.c &&
              grad_z.dims().h == d.h / tape.stride &&
              grad_z.dims().w == d.w / tape.stride,
          "gradient dims must match the pooled output");
  Tensor4 grad_x(d);
  int64_t slot = 0;
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t c = 0; c < d.c; ++c) {
      const double* g = grad_z.data() + grad_z.plane_offset(n, c);
      double* gx = grad_x.data() + grad_x.plane_offset(n, c);
      const int64_t count = grad_z.dims().h * grad_z.dims().w;
      for (int64_t i = 0; i < count; ++i)
        gx[tape.argmax[static_cast<size_t>(slot++)]] += g[i];
    }
  return grad_x;
}

}  // namespace

Tensor4 max_pool_standard_backward(const Tensor4& grad_z, const PoolTape& tape) {
  return route_window_grads(grad_z, tape);
}

std::pair<Tensor4, std::optional<PoolTape>> zeiler_stochastic_pool(
    const Tensor4& x, int64_t window, int64_t stride, const RngStream& rng,
    PoolMode mode) {
  require(window >= 1, "pool window must be >= 1");
  const Dims4 d = x.dims();
  check_downsample_dims(d, stride);
  for (int64_t i = 0; i < x.size(); ++i)
    require(x.data()[i] >= 0.0, "zeiler pooling requires nonnegative activations");

  Tensor4 z(Dims4{d.n, d.c, d.h / stride, d.w / stride});
  PoolTape tape;
  tape.mode = mode;
  tape.input_dims = d;
  tape.window = window;
  tape.stride = stride;
  if (mode == PoolMode::Train)
    tape.argmax.resize(static_cast<size_t>(z.dims().count()));

  int64_t slot = 0;
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t c = 0; c < d.c; ++c) {
      // One substream per plane keeps draws independent of plane order.
      RngStream plane_rng = rng.derive(static_cast<uint64_t>(n * d.c + c));
      const double* plane = x.data() + x.plane_offset(n, c);
      for (int64_t i = 0; i < z.dims().h; ++i) {
        const int64_t y0 = i * stride;
        const int64_t y1 = std::min(y0 + window, d.h);
        for (int64_t j = 0; j < z.dims().w; ++j) {
          const int64_t x0 = j * stride;
          const int64_t x1 = std::min(x0 + window, d.w);
          double sum = 0.0;
          for (int64_t yy = y0; yy < y1; ++yy)
            for (int64_t xx = x0; xx < x1; ++xx) sum += plane[yy * d.w + xx];

          if (mode == PoolMode::Infer) {
            // Probability-weighted average sum(v_i^2) / sum(v_i); zero-sum
            // windows contribute zero.
            double acc = 0.0;
            if (sum > 0.0)
              for (int64_t yy = y0; yy < y1; ++yy)
                for (int64_t xx = x0; xx < x1; ++xx) {
                  const double v = plane[yy * d.w + xx];
                  acc += v * v / sum;
                }
            z.at(n, c, i, j) = acc;
            continue;
          }

          int64_t pick = y0 * d.w + x0;
          if (sum > 0.0) {
            const double target = plane_rng.next_double() * sum;
            double cum = 0.0;
            bool found = false;
            for (int64_t yy = y0; yy < y1 && !found; ++yy)
              for (int64_t xx = x0; xx < x1; ++xx) {
                cum += plane[yy * d.w + xx];
                if (target < cum) {
                  pick = yy * d.w + xx;
                  found = true;
                  break;
                }
              }
            if (!found) pick = (y1 - 1) * d.w + (x1 - 1);  // target == sum edge
          } else {
            // Zero-sum window: uniform fallback.
            const int64_t count = (y1 - y0) * (x1 - x0);
            const int64_t flat = static_cast<int64_t>(
                plane_rng.uniform_below(static_cast<uint64_t>(count)));
            pick = (y0 + flat / (x1 - x0)) * d.w + (x0 + flat % (x1 - x0));
          }
          z.at(n, c, i, j) = plane[pick];
          tape.argmax[static_cast<size_t>(slot++)] = pick;
        }
      }
    }
  if (mode == PoolMode::Infer) return {std::move(z), std::nullopt};
  return {std::move(z), std::move(tape)};
}

Tensor4 zeiler_stochastic_pool_backward(const Tensor4& grad_z, const PoolTape& tape) {
  return route_window_grads(grad_z, tape);
}

}  // namespace s3pool
