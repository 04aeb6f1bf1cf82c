#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s3pool/layers.hpp"
#include "s3pool/pooling.hpp"
#include "s3pool/sampling.hpp"
#include "s3pool/tensor.hpp"

namespace s3pool {

enum class PoolVariant { Max, Avg, Zeiler, S3 };

std::string to_string(PoolVariant v);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

struct LayerSpec {
  enum class Kind {
    Conv,
    Relu,
    BatchNorm,
    Pool,
    Dropout,
    Residual,
    GlobalAvgPool,
    SoftmaxCe,
  };

  Kind kind = Kind::Relu;
  int64_t channels = 0;                    // conv / residual out channels
  int64_t filter = 0;                      // conv / residual kernel size (odd)
  PoolVariant variant = PoolVariant::Max;  // pool
  PoolGeom geom;                           // pool (grid meaningful for s3 only)
  double rate = 0.5;                       // dropout keep-out rate

  static LayerSpec conv(int64_t c_out, int64_t d);
  static LayerSpec relu();
  static LayerSpec batchnorm();
  static LayerSpec pool(PoolVariant v, int64_t k, int64_t s, int64_t g);
  static LayerSpec dropout(double rate);
  // Two conv-batchnorm stages with an identity shortcut; channels must match
  // the block input, so it preserves dims.
  static LayerSpec residual(int64_t c, int64_t d);
  static LayerSpec global_avg_pool();
  static LayerSpec softmax_ce_marker();
};

// Parameters, optimizer accumulators and batchnorm running statistics for
// one architecture. The flat tensor lists follow a fixed per-layer layout:
//   conv      -> params [kernel, bias]
//   batchnorm -> params [gamma, beta], running [mean, var]
//   residual  -> params [k1, b1, g1, be1, k2, b2, g2, be2],
//                running [mean1, var1, mean2, var2]
// acc_grad / acc_delta are congruent with params.
struct Model {
  std::vector<LayerSpec> arch;
  Dims4 input_dims;  // (1, c, h, w) template for a single example
  int64_t num_classes = 0;
  std::vector<Tensor4> params;
  std::vector<Tensor4> acc_grad;
  std::vector<Tensor4> acc_delta;
  std::vector<Tensor4> running;
  uint64_t step = 0;  // optimizer steps applied so far
};

// Per-layer backward bookkeeping for one forward pass.
struct LayerTape {
  Tensor4 input;  // layer input, kept where backward needs it
  PoolTape pool;
  std::vector<SampleIndices> samples;  // s3pool train: one draw per example
  BatchNormTape bn;
  Tensor4 mask;  // dropout
  // Residual block intermediates: conv1 out, bn1 out, relu1 out, conv2 out,
  // and the pre-activation sum feeding the final relu.
  Tensor4 r_conv1, r_bn1out, r_relu1, r_conv2, r_sum;
  BatchNormTape r_bn1, r_bn2;
};

struct ForwardResult {
  Tensor4 logits;
  std::vector<LayerTape> tapes;
};

// Validates the layer stack against the input dims (c, h, w of input_dims;
// n is ignored), traces shapes through every layer, and initializes
// parameters from seed-derived streams (kernels scaled-uniform by fan-in,
// biases zero, batchnorm scale 1 / shift 0, running mean 0 / var 1).
Model build_model(const std::vector<LayerSpec>& arch, const Dims4& input_dims,
                  uint64_t seed);

// Train mode draws all stochasticity from streams addressed by
// (seed, layer index, step), so the pass is a deterministic function of
// (model, x, seed, step); infer mode depends on (model, x) only. Train mode
// also folds batch statistics into the batchnorm running averages.
ForwardResult forward(Model& model, const Tensor4& x, PoolMode mode,
                      uint64_t seed, uint64_t step);

// Parameter gradients congruent with model.params. loss_grad is the
// gradient at the logits (the softmax_ce marker's input).
std::vector<Tensor4> backward(const Model& model,
                              const std::vector<LayerTape>& tapes,
                              const Tensor4& loss_grad);

// Versioned little-endian binary container: header with the layer specs,
// input dims, class count and step counter, then shape-tagged f64 blobs for
// params, optimizer accumulators and running statistics (layout documented
// in the README).
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace s3pool
