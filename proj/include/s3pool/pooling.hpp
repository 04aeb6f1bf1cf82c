#pragma once

#include <optional>
#include <utility>

#include "s3pool/rng.hpp"
#include "s3pool/sampling.hpp"
#include "s3pool/tensor.hpp"

namespace s3pool {

enum class PoolMode { Train, Infer };

// Reverse-mode bookkeeping for one pooling forward pass. Produced only by
// train-mode forwards; infer mode has nothing to route gradients through.
struct PoolTape {
  PoolMode mode = PoolMode::Train;
  Dims4 input_dims;
  int64_t window = 1;
  int64_t stride = 1;
  // Flat (y * w + x) position of the winning input pixel, one entry per
  // output element per (n, c) plane, laid out like the recording op's output.
  std::vector<int64_t> argmax;
  // Sampled rows/cols of the stochastic downsampling step, when one ran.
  SampleIndices indices;
};

// Windowed max with stride 1: output keeps the input's spatial dims, border
// windows are truncated at the bottom/right edges. The tape records the
// first argmax in row-major window order.
std::pair<Tensor4, PoolTape> max_pool_stride1(const Tensor4& x, int64_t window);

// Routes each output position's gradient to its recorded argmax; overlapping
// windows accumulate.
Tensor4 max_pool_stride1_backward(const Tensor4& grad_o, const PoolTape& tape);

// Top-left element of each disjoint stride x stride window.
Tensor4 uniform_downsample(const Tensor4& o, int64_t stride);

// Grid-wise random row/column selection: z = o gathered at sampled indices.
std::pair<Tensor4, SampleIndices> stochastic_downsample(const Tensor4& o,
                                                        const PoolGeom& geom,
                                                        const RngStream& rng);

// Deterministic variant applying already-drawn indices; used by the
// backward-pass checks and anywhere a draw must be replayed.
Tensor4 stochastic_downsample_with(const Tensor4& o, const SampleIndices& indices);

// Train: stride-1 max then stochastic downsampling (tape returned).
// Infer: stride-1 max then average pooling with window=stride=s, the
// deterministic approximation of the sampling expectation (no tape).
std::pair<Tensor4, std::optional<PoolTape>> s3pool_forward(const Tensor4& x,
                                                           const PoolGeom& geom,
                                                           const RngStream& rng,
                                                           PoolMode mode);

Tensor4 s3pool_backward(const Tensor4& grad_z, const PoolTape& tape);

// Closed-form mean of the stochastic downsampling of the stride-1 max
// output, using the exact order-statistic weights. Reduces to average
// pooling when grid == stride.
Tensor4 exact_expectation_infer(const Tensor4& x, const PoolGeom& geom);

Tensor4 avg_pool(const Tensor4& x, int64_t window, int64_t stride);
Tensor4 avg_pool_backward(const Tensor4& grad_z, const Dims4& input_dims,
                          int64_t window, int64_t stride);

// Fused max pooling; elementwise equal to
// uniform_downsample(max_pool_stride1(x, window), stride).
std::pair<Tensor4, PoolTape> max_pool_standard(const Tensor4& x, int64_t window,
                                               int64_t stride);
Tensor4 max_pool_standard_backward(const Tensor4& grad_z, const PoolTape& tape);

// Baseline drawing each window's response with probability proportional to
// its (nonnegative) activation; infer mode emits the probability-weighted
// average. Windows summing to zero fall back to a uniform draw (train) and
// zero (infer).
std::pair<Tensor4, std::optional<PoolTape>> zeiler_stochastic_pool(
    const Tensor4& x, int64_t window, int64_t stride, const RngStream& rng,
    PoolMode mode);

Tensor4 zeiler_stochastic_pool_backward(const Tensor4& grad_z, const PoolTape& tape);

}  // namespace s3pool
