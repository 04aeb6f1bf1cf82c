#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "s3pool/layers.hpp"
#include "s3pool/pooling.hpp"
#include "s3pool/rng.hpp"
#include "s3pool/tensor.hpp"
#include "test_support.hpp"

using namespace s3pool;

TEST_CASE("conv2d: 1x1 kernel is a per-pixel linear map") {
  RngStream rng(40, 0, 0);
  const Tensor4 x = test::random_tensor({2, 1, 3, 3}, rng);
  Tensor4 k({1, 1, 1, 1});
  k.at(0, 0, 0, 0) = 2.0;
  const Tensor4 bias({1, 1, 1, 1});
  const Tensor4 y = conv2d_forward(x, k, bias, 0);
  CHECK(y.dims() == x.dims());
  CHECK(test::max_abs_diff(y, scale(x, 2.0)) == 0.0);
}

TEST_CASE("conv2d: centered delta kernel with same padding is the identity") {
  RngStream rng(41, 0, 0);
  const Tensor4 x = test::random_tensor({1, 2, 4, 5}, rng);
  Tensor4 k({2, 2, 3, 3});
  k.at(0, 0, 1, 1) = 1.0;
  k.at(1, 1, 1, 1) = 1.0;
  const Tensor4 bias({1, 2, 1, 1});
  const Tensor4 y = conv2d_forward(x, k, bias, 1);
  CHECK(y == x);
}

TEST_CASE("conv2d: bias broadcasts per output channel") {
  const Tensor4 x({1, 1, 2, 2});
  Tensor4 k({3, 1, 1, 1});
  Tensor4 bias({1, 3, 1, 1});
  bias.at(0, 1, 0, 0) = -2.5;
  const Tensor4 y = conv2d_forward(x, k, bias, 0);
  CHECK(y.at(0, 0, 0, 0) == 0.0);
  CHECK(y.at(0, 1, 1, 1) == -2.5);
}

TEST_CASE("conv2d gradient check") {
  RngStream rng(42, 0, 0);
  Tensor4 x = test::random_tensor({1, 2, 5, 5}, rng);
  Tensor4 k = test::random_tensor({3, 2, 3, 3}, rng);
  Tensor4 bias = test::random_tensor({1, 3, 1, 1}, rng);
  const int64_t pad = 1;
  const Tensor4 w = test::random_tensor({1, 3, 5, 5}, rng);

  auto loss = [&]() { return test::dot_all(conv2d_forward(x, k, bias, pad), w); };
  const ConvGrads g = conv2d_backward(w, x, k, pad);

  const double h = 1e-6;
  auto fd_check = [&](Tensor4& target, const Tensor4& analytic) {
    Tensor4 fd(target.dims());
    for (int64_t i = 0; i < target.size(); ++i) {
      const double keep = target.data()[i];
      target.data()[i] = keep + h;
      const double up = loss();
      target.data()[i] = keep - h;
      const double down = loss();
      target.data()[i] = keep;
      fd.data()[i] = (up - down) / (2.0 * h);
    }
    CHECK(test::l2_rel_err(analytic, fd) < 1e-4);
  };
  fd_check(x, g.x);
  fd_check(k, g.kernel);
  fd_check(bias, g.bias);
}

TEST_CASE("relu") {
  Tensor4 x({1, 1, 1, 3});
  x.at(0, 0, 0, 0) = -1.0;
  x.at(0, 0, 0, 1) = 0.0;
  x.at(0, 0, 0, 2) = 2.0;
  const Tensor4 y = relu_forward(x);
  CHECK(y.at(0, 0, 0, 0) == 0.0);
  CHECK(y.at(0, 0, 0, 1) == 0.0);
  CHECK(y.at(0, 0, 0, 2) == 2.0);
  const Tensor4 g = relu_backward(Tensor4::full(x.dims(), 1.0), x);
  CHECK(g.at(0, 0, 0, 0) == 0.0);
  CHECK(g.at(0, 0, 0, 2) == 1.0);
}

TEST_CASE("batchnorm: train normalizes with batch statistics") {
  RngStream rng(43, 0, 0);
  const Tensor4 x = test::random_tensor({4, 2, 3, 3}, rng);
  const Tensor4 gamma = Tensor4::full({1, 2, 1, 1}, 1.0);
  const Tensor4 beta({1, 2, 1, 1});
  Tensor4 rmean({1, 2, 1, 1});
  Tensor4 rvar = Tensor4::full({1, 2, 1, 1}, 1.0);

  const auto [y, tape] = batchnorm_forward(x, gamma, beta, rmean, rvar,
                                           PoolMode::Train, 0.9, 1e-5);
  for (int64_t c = 0; c < 2; ++c) {
    double sum = 0.0;
    double sq = 0.0;
    for (int64_t n = 0; n < 4; ++n) {
      for (int64_t i = 0; i < 9; ++i) {
        const double v = y.data()[y.plane_offset(n, c) + i];
        sum += v;
        sq += v * v;
      }
    }
    const double m = sum / 36.0;
    CHECK(std::abs(m) < 1e-12);
    CHECK(sq / 36.0 == doctest::Approx(1.0).epsilon(1e-3));  // eps-deflated
  }
  // Running stats moved toward the batch statistics.
  CHECK(rmean.at(0, 0, 0, 0) != 0.0);
  CHECK(rvar.at(0, 0, 0, 0) != 1.0);
}

TEST_CASE("batchnorm: zero-variance channel maps to the shift") {
  const Tensor4 x = Tensor4::full({2, 1, 2, 2}, 3.0);
  const Tensor4 gamma = Tensor4::full({1, 1, 1, 1}, 2.0);
  Tensor4 beta({1, 1, 1, 1});
  beta.at(0, 0, 0, 0) = 0.25;
  Tensor4 rmean({1, 1, 1, 1});
  Tensor4 rvar = Tensor4::full({1, 1, 1, 1}, 1.0);
  const auto [y, tape] = batchnorm_forward(x, gamma, beta, rmean, rvar,
                                           PoolMode::Train, 0.9, 1e-5);
  for (int64_t i = 0; i < y.size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("batchnorm: infer uses running statistics and stays frozen") {
  RngStream rng(44, 0, 0);
  const Tensor4 x = test::random_tensor({2, 1, 2, 2}, rng);
  const Tensor4 gamma = Tensor4::full({1, 1, 1, 1}, 1.0);
  const Tensor4 beta({1, 1, 1, 1});
  Tensor4 rmean = Tensor4::full({1, 1, 1, 1}, 0.5);
  Tensor4 rvar = Tensor4::full({1, 1, 1, 1}, 4.0);
  const auto [y, tape] = batchnorm_forward(x, gamma, beta, rmean, rvar,
                                           PoolMode::Infer, 0.9, 1e-5);
  CHECK(rmean.at(0, 0, 0, 0) == 0.5);  // unchanged in infer mode
  CHECK(rvar.at(0, 0, 0, 0) == 4.0);
  CHECK(y.at(0, 0, 0, 0) ==
        doctest::Approx((x.at(0, 0, 0, 0) - 0.5) / std::sqrt(4.0 + 1e-5)));
}

TEST_CASE("batchnorm gradient check") {
  RngStream rng(45, 0, 0);
  Tensor4 x = test::random_tensor({3, 2, 4, 4}, rng);
  Tensor4 gamma = test::random_tensor({1, 2, 1, 1}, rng);
  Tensor4 beta = test::random_tensor({1, 2, 1, 1}, rng);
  const Tensor4 w = test::random_tensor(x.dims(), rng);

  auto loss = [&]() {
    Tensor4 rmean({1, 2, 1, 1});
    Tensor4 rvar = Tensor4::full({1, 2, 1, 1}, 1.0);
    return test::dot_all(batchnorm_forward(x, gamma, beta, rmean, rvar,
                                           PoolMode::Train, 0.9, 1e-5)
                             .first,
                         w);
  };
  Tensor4 rmean({1, 2, 1, 1});
  Tensor4 rvar = Tensor4::full({1, 2, 1, 1}, 1.0);
  const auto [y, tape] = batchnorm_forward(x, gamma, beta, rmean, rvar,
                                           PoolMode::Train, 0.9, 1e-5);
  const BatchNormGrads g = batchnorm_backward(w, tape, gamma);

  const double h = 1e-6;
  auto fd_check = [&](Tensor4& target, const Tensor4& analytic) {
    Tensor4 fd(target.dims());
    for (int64_t i = 0; i < target.size(); ++i) {
      const double keep = target.data()[i];
      target.data()[i] = keep + h;
      const double up = loss();
      target.data()[i] = keep - h;
      const double down = loss();
      target.data()[i] = keep;
      fd.data()[i] = (up - down) / (2.0 * h);
    }
    CHECK(test::l2_rel_err(analytic, fd) < 1e-4);
  };
  fd_check(x, g.x);
  fd_check(gamma, g.gamma);
  fd_check(beta, g.beta);
}

TEST_CASE("global average pooling") {
  Tensor4 x({1, 2, 2, 2});
  for (int64_t i = 0; i < 8; ++i) x.data()[i] = double(i);
  const Tensor4 y = global_avg_pool_forward(x);
  CHECK(y.dims() == Dims4{1, 2, 1, 1});
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(1.5));
  CHECK(y.at(0, 1, 0, 0) == doctest::Approx(5.5));
  Tensor4 g({1, 2, 1, 1});
  g.at(0, 1, 0, 0) = 8.0;
  const Tensor4 gx = global_avg_pool_backward(g, x.dims());
  CHECK(gx.at(0, 0, 1, 1) == 0.0);
  CHECK(gx.at(0, 1, 0, 1) == 2.0);
}

TEST_CASE("softmax cross-entropy") {
  // Uniform logits over K classes give loss ln K.
  for (int64_t kk : {2, 5, 10}) {
    const Tensor4 logits({3, kk, 1, 1});
    const auto [loss, grad] = softmax_ce(logits, {0, kk - 1, kk / 2});
    CHECK(loss == doctest::Approx(std::log(double(kk))).epsilon(1e-12));
    // Per-example gradient rows sum to zero.
    for (int64_t n = 0; n < 3; ++n) {
      double sum = 0.0;
      for (int64_t c = 0; c < kk; ++c) sum += grad.at(n, c, 0, 0);
      CHECK(std::abs(sum) < 1e-15);
    }
  }
  const Tensor4 logits({2, 3, 1, 1});
  CHECK_THROWS_AS(softmax_ce(logits, {0}), std::invalid_argument);
  CHECK_THROWS_AS(softmax_ce(logits, {0, 3}), std::invalid_argument);
}

TEST_CASE("softmax cross-entropy gradient check") {
  RngStream rng(46, 0, 0);
  Tensor4 logits = test::random_tensor({4, 5, 1, 1}, rng);
  const std::vector<int64_t> labels = {1, 0, 4, 2};
  const auto [loss0, grad] = softmax_ce(logits, labels);

  const double h = 1e-6;
  Tensor4 fd(logits.dims());
  for (int64_t i = 0; i < logits.size(); ++i) {
    const double keep = logits.data()[i];
    logits.data()[i] = keep + h;
    const double up = softmax_ce(logits, labels).first;
    logits.data()[i] = keep - h;
    const double down = softmax_ce(logits, labels).first;
    logits.data()[i] = keep;
    fd.data()[i] = (up - down) / (2.0 * h);
  }
  CHECK(test::l2_rel_err(grad, fd) < 1e-6);
}

TEST_CASE("dropout") {
  RngStream rng(47, 0, 0);
  const Tensor4 x = test::random_tensor({2, 2, 4, 4}, rng);

  const auto [y0, m0] = dropout_forward(x, 0.0, RngStream(1, 0, 0));
  CHECK(y0 == x);  // rate 0 keeps everything at scale 1

  const double rate = 0.5;
  const auto [y, mask] = dropout_forward(x, rate, RngStream(2, 0, 0));
  int64_t kept = 0;
  for (int64_t i = 0; i < mask.size(); ++i) {
    const double m = mask.data()[i];
    CHECK((m == 0.0 || m == doctest::Approx(2.0)));
    if (m != 0.0) ++kept;
    CHECK(y.data()[i] == doctest::Approx(x.data()[i] * m));
  }
  CHECK(kept > 0);
  CHECK(kept < mask.size());

  const auto [y2, mask2] = dropout_forward(x, rate, RngStream(2, 0, 0));
  CHECK(y2 == y);  // replayable

  const Tensor4 g = dropout_backward(Tensor4::full(x.dims(), 1.0), mask);
  CHECK(g == mask);
  CHECK_THROWS_AS(dropout_forward(x, 1.0, RngStream(1, 0, 0)),
                  std::invalid_argument);
}

namespace {

// Independent scalar ADADELTA reference.
struct ScalarAdadelta {
  double eg = 0.0;
  double ed = 0.0;
  double apply(double& w, double g, double rho, double eps, double lr) {
    eg = rho * eg + (1.0 - rho) * g * g;
    const double delta = -std::sqrt(ed + eps) / std::sqrt(eg + eps) * g;
    ed = rho * ed + (1.0 - rho) * delta * delta;
    w += lr * delta;
    return delta;
  }
};

}  // namespace

TEST_CASE("adadelta matches a scalar reference") {
  std::vector<Tensor4> params{Tensor4::full({1, 1, 1, 1}, 0.3)};
  std::vector<Tensor4> acc_g{Tensor4({1, 1, 1, 1})};
  std::vector<Tensor4> acc_d{Tensor4({1, 1, 1, 1})};
  ScalarAdadelta ref;
  double w = 0.3;
  RngStream rng(48, 0, 0);
  const AdadeltaConfig cfg;

  // First step with grad 1: update magnitude is lr * RMS(d) / RMS(g).
  std::vector<Tensor4> grads{Tensor4::full({1, 1, 1, 1}, 1.0)};
  adadelta_step(params, grads, acc_g, acc_d, 1.0, cfg);
  const double expect =
      std::sqrt(cfg.eps) / std::sqrt(0.05 * 1.0 + cfg.eps);
  CHECK(params[0].at(0, 0, 0, 0) == doctest::Approx(0.3 - expect).epsilon(1e-12));
  ref.apply(w, 1.0, cfg.rho, cfg.eps, 1.0);
  CHECK(params[0].at(0, 0, 0, 0) == doctest::Approx(w).epsilon(1e-15));

  for (int step = 0; step < 20; ++step) {
    const double g = 2.0 * rng.next_double() - 1.0;
    grads[0].at(0, 0, 0, 0) = g;
    const double lr = step < 10 ? 1.0 : 0.1;
    adadelta_step(params, grads, acc_g, acc_d, lr, cfg);
    ref.apply(w, g, cfg.rho, cfg.eps, lr);
    CHECK(params[0].at(0, 0, 0, 0) == doctest::Approx(w).epsilon(1e-14));
    CHECK(acc_g[0].at(0, 0, 0, 0) == doctest::Approx(ref.eg).epsilon(1e-14));
    CHECK(acc_d[0].at(0, 0, 0, 0) == doctest::Approx(ref.ed).epsilon(1e-14));
  }
}

TEST_CASE("adadelta: zero gradients leave parameters unchanged") {
  std::vector<Tensor4> params{Tensor4::full({1, 2, 1, 1}, 1.5)};
  std::vector<Tensor4> grads{Tensor4({1, 2, 1, 1})};
  std::vector<Tensor4> acc_g{Tensor4({1, 2, 1, 1})};
  std::vector<Tensor4> acc_d{Tensor4({1, 2, 1, 1})};
  adadelta_step(params, grads, acc_g, acc_d, 1.0, {});
  CHECK(params[0] == Tensor4::full({1, 2, 1, 1}, 1.5));
}

TEST_CASE("adadelta rejects non-finite gradients") {
  std::vector<Tensor4> params{Tensor4::full({1, 1, 1, 1}, 1.0)};
  std::vector<Tensor4> grads{Tensor4::full({1, 1, 1, 1},
                                           std::numeric_limits<double>::quiet_NaN())};
  std::vector<Tensor4> acc_g{Tensor4({1, 1, 1, 1})};
  std::vector<Tensor4> acc_d{Tensor4({1, 1, 1, 1})};
  CHECK_THROWS_AS(adadelta_step(params, grads, acc_g, acc_d, 1.0, {}),
                  std::invalid_argument);
}
