#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "s3pool/harness.hpp"
#include "s3pool/layers.hpp"
#include "s3pool/pooling.hpp"
#include "s3pool/stats.hpp"

namespace s3pool {

std::function<std::vector<Rational>(const PoolGeom&, int64_t)>
    expectation_weights_hook = [](const PoolGeom& geom, int64_t pos) {
      return expectation_weights(geom, pos);
    };

bool VerifyReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const VerifyCheck& c) { return c.pass; });
}

namespace {

struct CheckOutcome {
  bool pass = false;
  std::string detail;
};

CheckOutcome ok(std::string detail) { return {true, std::move(detail)}; }
CheckOutcome fail(std::string detail) { return {false, std::move(detail)}; }

Tensor4 random_tensor(const Dims4& dims, RngStream& rng) {
  Tensor4 t(dims);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.next_double();
  return t;
}

// Per-plane shuffled permutations of (i + 0.5) / (h * w): every pair of
// values is at least 1/(h*w) apart, so small finite-difference steps cannot
// flip an argmax.
Tensor4 distinct_tensor(const Dims4& dims, RngStream& rng) {
  Tensor4 t(dims);
  const int64_t plane = dims.h * dims.w;
  std::vector<double> vals(static_cast<size_t>(plane));
  for (int64_t n = 0; n < dims.n; ++n) {
    for (int64_t c = 0; c < dims.c; ++c) {
      for (int64_t i = 0; i < plane; ++i) {
        vals[static_cast<size_t>(i)] =
            (static_cast<double>(i) + 0.5) / static_cast<double>(plane);
      }
      for (int64_t i = plane - 1; i > 0; --i) {
        const int64_t j = static_cast<int64_t>(
            rng.uniform_below(static_cast<uint64_t>(i + 1)));
        std::swap(vals[static_cast<size_t>(i)], vals[static_cast<size_t>(j)]);
      }
      std::copy(vals.begin(), vals.end(), t.data() + t.plane_offset(n, c));
    }
  }
  return t;
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
  double worst = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

double l2_rel_err(const Tensor4& a, const Tensor4& b) {
  double diff = 0.0, scale = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    diff += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    scale = std::max({scale, std::abs(a.data()[i]), std::abs(b.data()[i])});
  }
  return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

// All full index vectors one axis can produce: the cartesian product over
// grids of every per-grid subset, each shifted by its grid offset.
std::vector<std::vector<int64_t>> all_axis_draws(int64_t extent,
                                                 const PoolGeom& geom) {
  const auto subsets = enumerate_grid_subsets(geom.grid, geom.stride);
  const int64_t grids = extent / geom.grid;
  std::vector<std::vector<int64_t>> draws(1);
  for (int64_t gi = 0; gi < grids; ++gi) {
    std::vector<std::vector<int64_t>> next;
    for (const auto& prefix : draws) {
      for (const auto& subset : subsets) {
        std::vector<int64_t> draw = prefix;
        for (int64_t v : subset) draw.push_back(gi * geom.grid + v);
        next.push_back(std::move(draw));
      }
    }
    draws = std::move(next);
  }
  return draws;
}

std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

CheckOutcome check_expectation_weights_enumeration() {
  for (int64_t g : {2, 4, 6, 8}) {
    for (int64_t s = 1; s <= g; ++s) {
      if (g % s != 0) continue;
      const int64_t m = g / s;
      const auto subsets = enumerate_grid_subsets(g, s);
      const int64_t den = static_cast<int64_t>(subsets.size());
      for (int64_t pos = 1; pos <= m; ++pos) {
        const std::vector<Rational> weights =
            expectation_weights_hook({1, s, g}, pos);
        if (static_cast<int64_t>(weights.size()) != g) {
          return fail("g=" + std::to_string(g) + " s=" + std::to_string(s) +
                      ": weight vector has wrong length");
        }
        for (int64_t a = 1; a <= g; ++a) {
          int64_t count = 0;
          for (const auto& subset : subsets) {
            if (subset[static_cast<size_t>(pos - 1)] == a) ++count;
          }
          const Rational& w = weights[static_cast<size_t>(a - 1)];
          if (w.num != count || w.den != den) {
            return fail("g=" + std::to_string(g) + " s=" + std::to_string(s) +
                        " pos=" + std::to_string(pos) +
                        " a=" + std::to_string(a) + ": got " +
                        std::to_string(w.num) + "/" + std::to_string(w.den) +
                        ", enumeration says " + std::to_string(count) + "/" +
                        std::to_string(den));
          }
        }
      }
    }
  }
  return ok("g in {2,4,6,8}, every divisor stride and position match exactly");
}

CheckOutcome check_average_pool_reduction() {
  RngStream rng(21, 0, 0);
  double worst = 0.0;
  for (int64_t s : {2, 4}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor4 x = random_tensor({1, 1, 8, 8}, rng);
      const Tensor4 exact = exact_expectation_infer(x, {2, s, s});
      const Tensor4 approx =
          avg_pool(max_pool_stride1(x, 2).first, s, s);
      worst = std::max(worst, max_abs_diff(exact, approx));
    }
  }
  if (worst >= 1e-12) {
    return fail("grid == stride deviates from average pooling by " +
                format_double(worst));
  }
  return ok("grid == stride equals average pooling, max |diff| " +
            format_double(worst));
}

CheckOutcome check_expectation_vs_enumeration() {
  RngStream rng(22, 0, 0);
  struct Case {
    Dims4 dims;
    PoolGeom geom;
  };
  const Case cases[] = {{{1, 1, 4, 4}, {2, 2, 4}}, {{1, 2, 6, 6}, {2, 3, 3}}};
  double worst = 0.0;
  for (const Case& c : cases) {
    const Tensor4 x = random_tensor(c.dims, rng);
    const Tensor4 o = max_pool_stride1(x, c.geom.window).first;
    const auto row_draws = all_axis_draws(c.dims.h, c.geom);
    const auto col_draws = all_axis_draws(c.dims.w, c.geom);
    Tensor4 mean({c.dims.n, c.dims.c, c.dims.h / c.geom.stride,
                  c.dims.w / c.geom.stride});
    for (const auto& rows : row_draws) {
      for (const auto& cols : col_draws) {
        const Tensor4 z = stochastic_downsample_with(o, {rows, cols});
        for (int64_t i = 0; i < mean.size(); ++i) mean.data()[i] += z.data()[i];
      }
    }
    const double total =
        static_cast<double>(row_draws.size() * col_draws.size());
    for (int64_t i = 0; i < mean.size(); ++i) mean.data()[i] /= total;
    worst = std::max(worst,
                     max_abs_diff(mean, exact_expectation_infer(x, c.geom)));
  }
  if (worst >= 1e-12) {
    return fail("closed form deviates from the enumerated mean by " +
                format_double(worst));
  }
  return ok("closed form equals the enumerated sampling mean, max |diff| " +
            format_double(worst));
}

CheckOutcome check_two_step_composition() {
  RngStream rng(23, 0, 0);
  for (int64_t k : {2, 3}) {
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor4 x = random_tensor({1, 2, 8, 8}, rng);
      const Tensor4 fused = max_pool_standard(x, k, 2).first;
      const Tensor4 two_step =
          uniform_downsample(max_pool_stride1(x, k).first, 2);
      if (!(fused == two_step)) {
        return fail("window " + std::to_string(k) +
                    ": fused and two-step outputs differ");
      }
    }
  }
  return ok("fused max pooling equals downsample(stride-1 max) on 200 inputs");
}

CheckOutcome check_subset_sampling_uniformity() {
  double worst_p = 1.0;
  for (int64_t g : {4, 8}) {
    const auto subsets = enumerate_grid_subsets(g, 2);
    const int64_t m = g / 2;
    const int64_t draws = 100 * static_cast<int64_t>(subsets.size());
    std::vector<int64_t> counts(subsets.size(), 0);
    for (int64_t i = 0; i < draws; ++i) {
      RngStream rng(11, static_cast<uint64_t>(g), static_cast<uint64_t>(i));
      const std::vector<int64_t> draw =
          sample_sorted_without_replacement(rng, 1, g, m);
      const auto it =
          std::lower_bound(subsets.begin(), subsets.end(), draw);
      counts[static_cast<size_t>(it - subsets.begin())] += 1;
    }
    const ChiSquareResult r = chi_square_uniform(counts);
    worst_p = std::min(worst_p, r.pvalue);
    if (r.pvalue <= 0.001) {
      return fail("g=" + std::to_string(g) +
                  ": chi-square p=" + format_double(r.pvalue) + " <= 0.001");
    }
  }
  return ok("all C(g, g/s) subsets uniform at 0.001, worst p " +
            format_double(worst_p));
}

CheckOutcome check_shape_law_and_identity() {
  RngStream seeds(24, 0, 0);
  for (int trial = 0; trial < 40; ++trial) {
    const int64_t s = 1 + static_cast<int64_t>(seeds.uniform_below(3));
    const int64_t g = s * (1 + static_cast<int64_t>(seeds.uniform_below(2)));
    const int64_t h = g * (1 + static_cast<int64_t>(seeds.uniform_below(3)));
    const int64_t w = g * (1 + static_cast<int64_t>(seeds.uniform_below(3)));
    const int64_t k = 1 + static_cast<int64_t>(seeds.uniform_below(3));
    const PoolGeom geom{k, s, g};
    RngStream rng(25, 1, static_cast<uint64_t>(trial));
    const Tensor4 x = random_tensor({2, 2, h, w}, rng);
    const Dims4 want{2, 2, h / s, w / s};

    const auto check_dims = [&](const Tensor4& z, const char* name) {
      if (z.dims() == want) return std::string();
      return std::string(name) + " mapped " + to_string(x.dims()) + " to " +
             to_string(z.dims()) + ", want " + to_string(want);
    };
    std::string err;
    const Tensor4 o = max_pool_stride1(x, k).first;
    if (o.dims() != x.dims()) {
      return fail("stride-1 max changed the spatial dims");
    }
    err = check_dims(max_pool_standard(x, k, s).first, "max_pool_standard");
    if (err.empty()) err = check_dims(avg_pool(x, k, s), "avg_pool");
    if (err.empty()) {
      err = check_dims(uniform_downsample(o, s), "uniform_downsample");
    }
    if (err.empty()) {
      err = check_dims(exact_expectation_infer(x, geom),
                       "exact_expectation_infer");
    }
    if (err.empty()) {
      err = check_dims(
          s3pool_forward(x, geom, RngStream(26, 0, 0), PoolMode::Train).first,
          "s3pool train");
    }
    if (err.empty()) {
      err = check_dims(
          s3pool_forward(x, geom, RngStream(26, 0, 0), PoolMode::Infer).first,
          "s3pool infer");
    }
    if (err.empty()) {
      err = check_dims(
          zeiler_stochastic_pool(x, k, s, RngStream(27, 0, 0), PoolMode::Train)
              .first,
          "zeiler train");
    }
    if (!err.empty()) return fail(err);

    const auto [z, indices] =
        stochastic_downsample(o, geom, RngStream(28, 0, 0));
    if (z.dims() != want) return fail("stochastic_downsample shape law");
    if (s == 1) {
      if (!(z == o)) return fail("stride-1 stochastic downsample not identity");
      if (!(uniform_downsample(o, 1) == o)) {
        return fail("stride-1 uniform downsample not identity");
      }
    }
  }
  return ok("40 random geometries map (h, w) to (h/s, w/s); stride 1 is the "
            "identity");
}

CheckOutcome check_frozen_index_gradient() {
  RngStream rng(29, 0, 0);
  const Tensor4 x = distinct_tensor({1, 2, 8, 8}, rng);
  const PoolGeom geom{3, 2, 4};
  const auto [z, tape] =
      s3pool_forward(x, geom, RngStream(30, 0, 0), PoolMode::Train);
  Tensor4 upstream(z.dims());
  for (int64_t i = 0; i < upstream.size(); ++i) {
    upstream.data()[i] = rng.next_double() - 0.5;
  }
  const Tensor4 analytic = s3pool_backward(upstream, *tape);

  const auto loss = [&](const Tensor4& input) {
    const Tensor4 out = stochastic_downsample_with(
        max_pool_stride1(input, geom.window).first, tape->indices);
    double total = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) {
      total += out.data()[i] * upstream.data()[i];
    }
    return total;
  };
  Tensor4 fd(x.dims());
  Tensor4 probe = x;
  const double h = 1e-6;
  for (int64_t i = 0; i < x.size(); ++i) {
    probe.data()[i] = x.data()[i] + h;
    const double up = loss(probe);
    probe.data()[i] = x.data()[i] - h;
    const double down = loss(probe);
    probe.data()[i] = x.data()[i];
    fd.data()[i] = (up - down) / (2.0 * h);
  }
  const double err = l2_rel_err(analytic, fd);
  if (err >= 1e-4) {
    return fail("frozen-index gradient relative error " + format_double(err));
  }
  return ok("frozen-index gradient matches central differences, rel err " +
            format_double(err));
}

CheckOutcome check_model_gradient() {
  const std::vector<LayerSpec> arch = {
      LayerSpec::conv(3, 3),
      LayerSpec::batchnorm(),
      LayerSpec::relu(),
      LayerSpec::pool(PoolVariant::S3, 3, 2, 4),
      LayerSpec::conv(4, 3),
      LayerSpec::batchnorm(),
      LayerSpec::relu(),
      LayerSpec::pool(PoolVariant::S3, 2, 2, 2),
      LayerSpec::conv(3, 1),
      LayerSpec::global_avg_pool(),
      LayerSpec::softmax_ce_marker(),
  };
  Model model = build_model(arch, {1, 2, 8, 8}, 7);
  RngStream rng(31, 0, 0);
  const Tensor4 x = distinct_tensor({2, 2, 8, 8}, rng);
  const std::vector<int64_t> labels = {0, 1};
  const uint64_t seed = 13, step = 2;

  const ForwardResult r = forward(model, x, PoolMode::Train, seed, step);
  const auto [loss0, loss_grad] = softmax_ce(r.logits, labels);
  (void)loss0;
  const std::vector<Tensor4> analytic = backward(model, r.tapes, loss_grad);

  const auto loss_at = [&]() {
    const ForwardResult rr = forward(model, x, PoolMode::Train, seed, step);
    return softmax_ce(rr.logits, labels).first;
  };
  const double h = 1e-5;
  double worst = 0.0;
  for (size_t p = 0; p < model.params.size(); ++p) {
    Tensor4 fd(model.params[p].dims());
    for (int64_t i = 0; i < fd.size(); ++i) {
      const double keep = model.params[p].data()[i];
      model.params[p].data()[i] = keep + h;
      const double up = loss_at();
      model.params[p].data()[i] = keep - h;
      const double down = loss_at();
      model.params[p].data()[i] = keep;
      fd.data()[i] = (up - down) / (2.0 * h);
    }
    // Relative metric with an absolute floor: a conv bias feeding batchnorm
    // has an exactly-zero true gradient, where both sides are rounding noise.
    double diff = 0.0, scale = 0.0;
    for (int64_t i = 0; i < fd.size(); ++i) {
      const double a = analytic[p].data()[i], b = fd.data()[i];
      diff += (a - b) * (a - b);
      scale = std::max({scale, std::abs(a), std::abs(b)});
    }
    const double err = std::sqrt(diff);
    const double bound = std::max(1e-8, 1e-3 * scale);
    if (err > bound) {
      return fail("param " + std::to_string(p) + ": gradient error " +
                  format_double(err) + " at scale " + format_double(scale));
    }
    worst = std::max(worst, err / bound);
  }
  return ok("all parameter gradients within tolerance, worst at " +
            format_double(worst) + " of the bound");
}

CheckOutcome check_zeiler_proportional_draw() {
  Tensor4 x({1, 1, 2, 2});
  x.at(0, 0, 0, 0) = 1.0;
  x.at(0, 0, 0, 1) = 2.0;
  x.at(0, 0, 1, 0) = 3.0;
  x.at(0, 0, 1, 1) = 0.0;
  const int64_t draws = 6000;
  std::map<double, int64_t> counts;
  for (int64_t i = 0; i < draws; ++i) {
    RngStream rng(32, 0, static_cast<uint64_t>(i));
    const auto [z, tape] =
        zeiler_stochastic_pool(x, 2, 2, rng, PoolMode::Train);
    (void)tape;
    counts[z.at(0, 0, 0, 0)] += 1;
  }
  if (counts.count(0.0) != 0) {
    return fail("a zero-probability activation was drawn");
  }
  for (const auto& [value, count] : counts) {
    const double freq = static_cast<double>(count) / draws;
    const double want = value / 6.0;
    if (std::abs(freq - want) > 0.02) {
      return fail("activation " + format_double(value) + " drawn at " +
                  format_double(freq) + ", want " + format_double(want));
    }
  }
  return ok("draw frequencies proportional to activations within 0.02");
}

CheckOutcome check_forward_replay() {
  for (PoolVariant v : {PoolVariant::S3, PoolVariant::Zeiler}) {
    const std::vector<LayerSpec> arch = {
        LayerSpec::conv(4, 3),
        LayerSpec::batchnorm(),
        LayerSpec::relu(),
        LayerSpec::dropout(0.3),
        LayerSpec::pool(v, 2, 2, 4),
        LayerSpec::conv(3, 1),
        LayerSpec::global_avg_pool(),
        LayerSpec::softmax_ce_marker(),
    };
    Model model = build_model(arch, {1, 2, 8, 8}, 9);
    RngStream rng(33, 0, 0);
    const Tensor4 x = random_tensor({3, 2, 8, 8}, rng);
    const Tensor4 a = forward(model, x, PoolMode::Train, 5, 7).logits;
    const Tensor4 b = forward(model, x, PoolMode::Train, 5, 7).logits;
    if (!(a == b)) {
      return fail(to_string(v) + ": same (seed, step) not bit-identical");
    }
    const Tensor4 c = forward(model, x, PoolMode::Train, 5, 8).logits;
    if (a == c) {
      return fail(to_string(v) + ": a new step replayed the old draws");
    }
    const Tensor4 d = forward(model, x, PoolMode::Infer, 0, 0).logits;
    const Tensor4 e = forward(model, x, PoolMode::Infer, 1, 99).logits;
    if (!(d == e)) {
      return fail(to_string(v) + ": infer mode depends on (seed, step)");
    }
  }
  return ok("train draws are addressed by (seed, step); infer is "
            "deterministic");
}

CheckOutcome check_checkpoint_roundtrip() {
  const std::vector<LayerSpec> arch = {
      LayerSpec::conv(4, 3),
      LayerSpec::batchnorm(),
      LayerSpec::relu(),
      LayerSpec::pool(PoolVariant::S3, 2, 2, 4),
      LayerSpec::dropout(0.2),
      LayerSpec::conv(3, 1),
      LayerSpec::global_avg_pool(),
      LayerSpec::softmax_ce_marker(),
  };
  Model model = build_model(arch, {1, 2, 8, 8}, 11);
  RngStream rng(34, 0, 0);
  const Tensor4 x = random_tensor({4, 2, 8, 8}, rng);
  const std::vector<int64_t> labels = {0, 1, 2, 0};
  for (uint64_t step = 0; step < 2; ++step) {
    const ForwardResult r = forward(model, x, PoolMode::Train, 3, step);
    const auto [loss, grad] = softmax_ce(r.logits, labels);
    (void)loss;
    adadelta_step(model.params, backward(model, r.tapes, grad), model.acc_grad,
                  model.acc_delta, 1.0, {});
    model.step += 1;
  }

  const std::filesystem::path path =
      std::filesystem::temp_directory_path() /
      ("s3pool_verify_ckpt_" + std::to_string(::getpid()) + ".bin");
  save_checkpoint(model, path.string());
  Model copy = load_checkpoint(path.string());
  std::filesystem::remove(path);

  if (copy.step != model.step) return fail("step counter not preserved");
  for (size_t i = 0; i < model.params.size(); ++i) {
    if (!(copy.params[i] == model.params[i])) {
      return fail("params not bit-identical after the round trip");
    }
    if (!(copy.acc_grad[i] == model.acc_grad[i]) ||
        !(copy.acc_delta[i] == model.acc_delta[i])) {
      return fail("optimizer accumulators not bit-identical");
    }
  }
  for (size_t i = 0; i < model.running.size(); ++i) {
    if (!(copy.running[i] == model.running[i])) {
      return fail("running statistics not bit-identical");
    }
  }
  const Tensor4 a = forward(model, x, PoolMode::Infer, 0, 0).logits;
  const Tensor4 b = forward(copy, x, PoolMode::Infer, 0, 0).logits;
  if (!(a == b)) return fail("restored model infers different logits");
  return ok("params, accumulators, running stats and logits survive the "
            "round trip bit-identically");
}

CheckOutcome check_monte_carlo_expectation(int64_t passes, double se_bound) {
  RngStream rng(35, 0, 0);
  const Tensor4 x = random_tensor({1, 1, 8, 8}, rng);
  const PoolGeom geom{2, 2, 4};
  const Tensor4 exact = exact_expectation_infer(x, geom);

  Tensor4 mean(exact.dims());
  Tensor4 m2(exact.dims());
  for (int64_t i = 0; i < passes; ++i) {
    const Tensor4 z =
        s3pool_forward(x, geom, RngStream(36, 0, static_cast<uint64_t>(i)),
                       PoolMode::Train)
            .first;
    for (int64_t e = 0; e < z.size(); ++e) {
      const double delta = z.data()[e] - mean.data()[e];
      mean.data()[e] += delta / static_cast<double>(i + 1);
      m2.data()[e] += delta * (z.data()[e] - mean.data()[e]);
    }
  }
  double worst_z = 0.0;
  for (int64_t e = 0; e < mean.size(); ++e) {
    const double var = m2.data()[e] / static_cast<double>(passes - 1);
    const double se = std::sqrt(var / static_cast<double>(passes));
    const double diff = std::abs(mean.data()[e] - exact.data()[e]);
    if (diff > se_bound * se + 1e-12) {
      return fail("element " + std::to_string(e) + " off by " +
                  format_double(diff) + " with standard error " +
                  format_double(se));
    }
    if (se > 0.0) worst_z = std::max(worst_z, diff / se);
  }
  return ok(std::to_string(passes) + " passes within " +
            format_double(se_bound) + " standard errors, worst z " +
            format_double(worst_z));
}

CheckOutcome check_pnm_roundtrip() {
  const std::filesystem::path dir = std::filesystem::temp_directory_path();
  const std::string tag = std::to_string(::getpid());
  const std::filesystem::path gray_path = dir / ("s3pool_g_" + tag + ".pgm");
  const std::filesystem::path rgb_path = dir / ("s3pool_c_" + tag + ".ppm");
  const std::filesystem::path bad_path = dir / ("s3pool_b_" + tag + ".pnm");

  ImageGray gray{2, 2, {0, 85, 170, 255}};
  write_pnm(gray, gray_path.string());
  const PnmImage gray_back = read_pnm(gray_path.string());
  std::filesystem::remove(gray_path);
  if (!std::holds_alternative<ImageGray>(gray_back) ||
      std::get<ImageGray>(gray_back).samples != gray.samples) {
    return fail("gray round trip altered the samples");
  }

  ImageRGB rgb{2, 3, {}};
  for (int i = 0; i < 18; ++i) {
    rgb.samples.push_back(static_cast<uint8_t>(i * 13 + 7));
  }
  write_pnm(rgb, rgb_path.string());
  const PnmImage rgb_back = read_pnm(rgb_path.string());
  std::filesystem::remove(rgb_path);
  if (!std::holds_alternative<ImageRGB>(rgb_back) ||
      std::get<ImageRGB>(rgb_back).samples != rgb.samples) {
    return fail("rgb round trip altered the samples");
  }

  std::ofstream bad(bad_path, std::ios::binary);
  bad << "P3\n2 2\n255\n0 0 0 0 0 0 0 0 0 0 0 0\n";
  bad.close();
  bool rejected = false;
  try {
    read_pnm(bad_path.string());
  } catch (const std::runtime_error&) {
    rejected = true;
  }
  std::filesystem::remove(bad_path);
  if (!rejected) return fail("ASCII P3 input was not rejected");
  return ok("P5/P6 round trips are lossless; P3 is rejected");
}

CheckOutcome check_cifar_record_parsing() {
  const std::filesystem::path dir = std::filesystem::temp_directory_path();
  const std::string tag = std::to_string(::getpid());
  const std::filesystem::path path = dir / ("s3pool_cifar_" + tag + ".bin");

  std::vector<uint8_t> bytes;
  bytes.push_back(3);
  for (int j = 0; j < 3072; ++j) {
    bytes.push_back(static_cast<uint8_t>((j * 7 + 11) % 256));
  }
  bytes.push_back(9);
  for (int j = 0; j < 3072; ++j) {
    bytes.push_back(static_cast<uint8_t>((j * 13 + 5) % 256));
  }
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.close();

  const LabeledBatch batch = read_cifar10_binary(path.string());
  bool pass = batch.labels == std::vector<int64_t>{3, 9};
  if (pass) {
    for (int j = 0; j < 3072 && pass; ++j) {
      const double want = static_cast<double>((j * 7 + 11) % 256) / 255.0;
      pass = batch.images.data()[j] == want;
    }
  }
  bool truncated_rejected = false;
  std::ofstream cut(path, std::ios::binary | std::ios::trunc);
  cut.write(reinterpret_cast<const char*>(bytes.data()), 3072);
  cut.close();
  try {
    read_cifar10_binary(path.string());
  } catch (const std::runtime_error&) {
    truncated_rejected = true;
  }
  std::filesystem::remove(path);
  if (!pass) return fail("parsed records do not match the written bytes");
  if (!truncated_rejected) return fail("a truncated file was not rejected");
  return ok("records parse byte-exactly; truncated files are rejected");
}

CheckOutcome check_synth_fixture() {
  RngStream rng_a(37, 0, 0);
  RngStream rng_b(37, 0, 0);
  const LabeledBatch a = synth_translated_shapes(rng_a, 50, 10);
  const LabeledBatch b = synth_translated_shapes(rng_b, 50, 10);
  if (!(a.images == b.images) || a.labels != b.labels) {
    return fail("same seed produced different datasets");
  }
  std::vector<int64_t> per_class(10, 0);
  for (int64_t label : a.labels) per_class[static_cast<size_t>(label)] += 1;
  for (int64_t count : per_class) {
    if (count != 5) return fail("labels are not class-balanced");
  }
  for (int64_t i = 0; i < a.images.size(); ++i) {
    const double v = a.images.data()[i];
    if (v < 0.0 || v > 1.0) return fail("pixel outside [0, 1]");
  }
  return ok("deterministic, class-balanced, pixels in [0, 1]");
}

CheckOutcome check_chance_level_eval() {
  TrainConfig cfg;
  cfg.arch = "tiny";
  cfg.pooling = "max";
  cfg.dataset.source = "synth";
  cfg.dataset.classes = 10;
  cfg.dataset.train_size = 10;
  cfg.dataset.test_size = 400;
  cfg.batch = 100;
  cfg.seed = 19;
  const Dataset data = load_dataset(cfg);
  Model model = build_model(build_arch(cfg, 10), {1, 3, 32, 32}, cfg.seed);
  double wrong = 0.0;
  {
    const int64_t n = data.test.images.dims().n;
    Tensor4 x;
    std::vector<int64_t> labels;
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    int64_t misses = 0;
    for (int64_t start = 0; start < n; start += cfg.batch) {
      const int64_t count = std::min(cfg.batch, n - start);
      Tensor4 batch({count, 3, 32, 32});
      std::vector<int64_t> batch_labels(static_cast<size_t>(count));
      for (int64_t i = 0; i < count; ++i) {
        batch_labels[static_cast<size_t>(i)] =
            data.test.labels[static_cast<size_t>(start + i)];
        for (int64_t c = 0; c < 3; ++c) {
          std::copy_n(
              data.test.images.data() +
                  data.test.images.plane_offset(start + i, c),
              1024, batch.data() + batch.plane_offset(i, c));
        }
      }
      const ForwardResult r = forward(model, batch, PoolMode::Infer, 0, 0);
      for (int64_t i = 0; i < count; ++i) {
        int64_t best = 0;
        for (int64_t c = 1; c < 10; ++c) {
          if (r.logits.at(i, c, 0, 0) > r.logits.at(i, best, 0, 0)) best = c;
        }
        if (best != batch_labels[static_cast<size_t>(i)]) ++misses;
      }
    }
    wrong = 100.0 * static_cast<double>(misses) / static_cast<double>(n);
  }
  if (wrong < 85.0 || wrong > 95.0) {
    return fail("untrained model scores " + format_double(wrong) +
                "% error, expected chance level 90 +- 5");
  }
  return ok("untrained model sits at chance level, " + format_double(wrong) +
            "% error");
}

CheckOutcome check_loss_halving() {
  // Mean-brightness task: linearly separable through any pooling variant.
  const int64_t n = 24;
  RngStream noise(38, 0, 0);
  Tensor4 x({n, 1, 8, 8});
  std::vector<int64_t> labels(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int64_t label = i % 2;
    labels[static_cast<size_t>(i)] = label;
    const double base = label == 0 ? 0.1 : 0.8;
    for (int64_t p = 0; p < 64; ++p) {
      x.data()[i * 64 + p] = base + 0.05 * noise.next_double();
    }
  }
  for (PoolVariant v : {PoolVariant::Max, PoolVariant::S3}) {
    const std::vector<LayerSpec> arch = {
        LayerSpec::conv(4, 3),
        LayerSpec::batchnorm(),
        LayerSpec::relu(),
        LayerSpec::pool(v, 2, 2, 4),
        LayerSpec::conv(2, 1),
        LayerSpec::global_avg_pool(),
        LayerSpec::softmax_ce_marker(),
    };
    Model model = build_model(arch, {1, 1, 8, 8}, 17);
    double initial = 0.0, final = 0.0;
    for (uint64_t step = 0; step < 50; ++step) {
      const ForwardResult r = forward(model, x, PoolMode::Train, 23, step);
      const auto [loss, grad] = softmax_ce(r.logits, labels);
      if (step == 0) initial = loss;
      final = loss;
      adadelta_step(model.params, backward(model, r.tapes, grad),
                    model.acc_grad, model.acc_delta, 1.0, {});
    }
    if (!(final < 0.5 * initial)) {
      return fail(to_string(v) + ": loss went " + format_double(initial) +
                  " -> " + format_double(final) +
                  ", wanted at least a halving");
    }
  }
  return ok("50 optimizer steps at least halve the loss for max and s3pool");
}

}  // namespace

VerifyReport run_verify(VerifyLevel level) {
  struct Entry {
    const char* name;
    std::function<CheckOutcome()> fn;
  };
  std::vector<Entry> entries = {
      {"expectation-weights-enumeration", check_expectation_weights_enumeration},
      {"average-pool-reduction", check_average_pool_reduction},
      {"expectation-vs-enumeration", check_expectation_vs_enumeration},
      {"two-step-composition", check_two_step_composition},
      {"subset-sampling-uniformity", check_subset_sampling_uniformity},
      {"shape-law-and-identity", check_shape_law_and_identity},
      {"frozen-index-gradient", check_frozen_index_gradient},
      {"model-gradient", check_model_gradient},
      {"zeiler-proportional-draw", check_zeiler_proportional_draw},
      {"forward-replay", check_forward_replay},
      {"checkpoint-roundtrip", check_checkpoint_roundtrip},
      {"pnm-roundtrip", check_pnm_roundtrip},
      {"cifar-record-parsing", check_cifar_record_parsing},
      {"synth-fixture", check_synth_fixture},
  };
  if (level == VerifyLevel::Fast) {
    entries.push_back({"monte-carlo-expectation",
                       [] { return check_monte_carlo_expectation(20000, 4.0); }});
  } else {
    entries.push_back({"monte-carlo-expectation",
                       [] { return check_monte_carlo_expectation(200000, 3.0); }});
    entries.push_back({"chance-level-eval", check_chance_level_eval});
    entries.push_back({"loss-halving", check_loss_halving});
  }

  VerifyReport report;
  for (const Entry& entry : entries) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckOutcome outcome;
    try {
      outcome = entry.fn();
    } catch (const std::exception& e) {
      outcome = fail(std::string("exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    report.checks.push_back(
        {entry.name, outcome.pass, seconds, outcome.detail});
  }
  return report;
}

}  // namespace s3pool
