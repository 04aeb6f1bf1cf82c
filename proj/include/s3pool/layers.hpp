#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "s3pool/pooling.hpp"
#include "s3pool/rng.hpp"
#include "s3pool/tensor.hpp"

namespace s3pool {

// Cross-correlation with zero padding. kernel dims are
// (out_channels, in_channels, d, d); bias dims are (1, out_channels, 1, 1).
// Output spatial dims are h + 2*pad - d + 1; the model stack uses
// pad = (d - 1) / 2 with odd d so pooling layers see unchanged dims.
Tensor4 conv2d_forward(const Tensor4& x, const Tensor4& kernel,
                       const Tensor4& bias, int64_t pad);

struct ConvGrads {
  Tensor4 x;
  Tensor4 kernel;
  Tensor4 bias;
};

ConvGrads conv2d_backward(const Tensor4& grad_y, const Tensor4& x,
                          const Tensor4& kernel, int64_t pad);

Tensor4 relu_forward(const Tensor4& x);
Tensor4 relu_backward(const Tensor4& grad_y, const Tensor4& x);

struct BatchNormTape {
  Tensor4 x_hat;                 // normalized input
  std::vector<double> inv_std;   // per channel
};

// Per-channel normalization over (n, h, w). Train mode uses batch statistics
// and folds them into the running averages (biased variance, momentum
// smoothing); infer mode uses the running averages only.
std::pair<Tensor4, BatchNormTape> batchnorm_forward(
    const Tensor4& x, const Tensor4& gamma, const Tensor4& beta,
    Tensor4& running_mean, Tensor4& running_var, PoolMode mode,
    double momentum, double eps);

struct BatchNormGrads {
  Tensor4 x;
  Tensor4 gamma;
  Tensor4 beta;
};

BatchNormGrads batchnorm_backward(const Tensor4& grad_y, const BatchNormTape& tape,
                                  const Tensor4& gamma);

Tensor4 global_avg_pool_forward(const Tensor4& x);
Tensor4 global_avg_pool_backward(const Tensor4& grad_y, const Dims4& input_dims);

// Mean cross-entropy over the batch; logits are (n, K, 1, 1).
// Returns the loss and its gradient with respect to the logits.
std::pair<double, Tensor4> softmax_ce(const Tensor4& logits,
                                      const std::vector<int64_t>& labels);

// Inverted dropout: kept units are scaled by 1/(1-rate) so infer mode is the
// identity. The mask (0 or the scale factor) doubles as the backward tape.
std::pair<Tensor4, Tensor4> dropout_forward(const Tensor4& x, double rate,
                                            const RngStream& rng);
Tensor4 dropout_backward(const Tensor4& grad_y, const Tensor4& mask);

struct AdadeltaConfig {
  double rho = 0.95;
  double eps = 1e-6;
};

// One accumulator-decay update per parameter tensor, scaled by lr.
// Rejects non-finite gradients.
void adadelta_step(std::vector<Tensor4>& params,
                   const std::vector<Tensor4>& grads,
                   std::vector<Tensor4>& acc_grad,
                   std::vector<Tensor4>& acc_delta, double lr,
                   const AdadeltaConfig& cfg);

}  // namespace s3pool
