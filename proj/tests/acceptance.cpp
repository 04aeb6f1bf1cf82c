// Acceptance gate: ten checks, one PASS/FAIL line each, nonzero exit on any
// failure. Each check is self-contained and uses independent oracles
// (enumeration, finite differences, Monte Carlo, chi-square) rather than the
// code under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <unistd.h>

#include "s3pool/harness.hpp"
#include "s3pool/layers.hpp"
#include "s3pool/pooling.hpp"
#include "s3pool/stats.hpp"

using namespace s3pool;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome pass(std::string detail) { return {true, std::move(detail)}; }
Outcome fail(std::string detail) { return {false, std::move(detail)}; }

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

Tensor4 random_tensor(const Dims4& dims, RngStream& rng) {
  Tensor4 t(dims);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.next_double();
  return t;
}

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

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path temp_dir(const std::string& leaf) {
  return std::filesystem::temp_directory_path() /
         ("s3pool_accept_" + std::to_string(::getpid()) + "_" + leaf);
}

// --- criterion 1: expectation weights vs brute-forced marginals ------------

Outcome criterion_weights() {
  for (int64_t g : {2, 4, 6, 8}) {
    for (int64_t s = 1; s <= g; ++s) {
      if (g % s != 0) continue;
      const int64_t m = g / s;
      const auto subsets = enumerate_grid_subsets(g, s);
      const int64_t den = static_cast<int64_t>(subsets.size());
      for (int64_t pos = 1; pos <= m; ++pos) {
        const std::vector<Rational> weights =
            expectation_weights({1, s, g}, pos);
        for (int64_t a = 1; a <= g; ++a) {
          int64_t count = 0;
          for (const auto& subset : subsets) {
            if (subset[static_cast<size_t>(pos - 1)] == a) ++count;
          }
          const Rational& w = weights[static_cast<size_t>(a - 1)];
          if (w.num != count || w.den != den) {
            return fail("g=" + std::to_string(g) + " s=" + std::to_string(s) +
                        " pos=" + std::to_string(pos) + ": " +
                        std::to_string(w.num) + "/" + std::to_string(w.den) +
                        " but the enumeration counts " +
                        std::to_string(count) + "/" + std::to_string(den));
          }
        }
      }
    }
  }
  return pass("exact rational match with the enumerated marginals for every "
              "(g, s, position), g in {2,4,6,8}");
}

// --- criterion 2: grid == stride reduces to average pooling ----------------

Outcome criterion_avg_reduction() {
  RngStream rng(101, 0, 0);
  double worst = 0.0;
  for (int64_t s : {2, 4}) {
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor4 x = random_tensor({1, 1, 8, 8}, rng);
      const Tensor4 exact = exact_expectation_infer(x, {2, s, s});
      const Tensor4 approx = avg_pool(max_pool_stride1(x, 2).first, s, s);
      worst = std::max(worst, max_abs_diff(exact, approx));
    }
  }
  if (worst >= 1e-12) {
    return fail("max |difference| " + fmt(worst) + " >= 1e-12");
  }
  return pass("exact expectation equals average pooling for g = s in {2,4} "
              "on 200 inputs, max |difference| " +
              fmt(worst));
}

// --- criterion 3: Monte Carlo mean vs closed-form expectation --------------

Outcome criterion_monte_carlo() {
  RngStream rng(102, 0, 0);
  const Tensor4 x = random_tensor({1, 1, 8, 8}, rng);
  const PoolGeom geom{2, 2, 4};
  const Tensor4 exact = exact_expectation_infer(x, geom);

  const int64_t passes = 200000;
  Tensor4 mean(exact.dims());
  Tensor4 m2(exact.dims());
  for (int64_t i = 0; i < passes; ++i) {
    const Tensor4 z =
        s3pool_forward(x, geom, RngStream(103, 0, static_cast<uint64_t>(i)),
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
    if (diff > 3.0 * se + 1e-12) {
      return fail("element " + std::to_string(e) + ": |mean - exact| " +
                  fmt(diff) + " exceeds 3 standard errors (" + fmt(se) + ")");
    }
    if (se > 0.0) worst_z = std::max(worst_z, diff / se);
  }
  return pass("200000 training passes match the closed form within 3 "
              "standard errors elementwise, worst z " +
              fmt(worst_z));
}

// --- criterion 4: sampler uniformity over all subsets ----------------------

Outcome criterion_sampler_uniformity() {
  std::string detail;
  for (int64_t g : {4, 8}) {
    const auto subsets = enumerate_grid_subsets(g, 2);
    const int64_t m = g / 2;
    const int64_t draws = 100 * static_cast<int64_t>(subsets.size());
    std::vector<int64_t> counts(subsets.size(), 0);
    for (int64_t i = 0; i < draws; ++i) {
      RngStream rng(104, static_cast<uint64_t>(g), static_cast<uint64_t>(i));
      const std::vector<int64_t> draw =
          sample_sorted_without_replacement(rng, 1, g, m);
      const auto it = std::lower_bound(subsets.begin(), subsets.end(), draw);
      counts[static_cast<size_t>(it - subsets.begin())] += 1;
    }
    const ChiSquareResult r = chi_square_uniform(counts);
    if (r.pvalue <= 0.001) {
      return fail("g=" + std::to_string(g) + ": chi-square statistic " +
                  fmt(r.statistic) + ", p=" + fmt(r.pvalue) + " <= 0.001");
    }
    detail += (detail.empty() ? "" : "; ") + ("g=" + std::to_string(g)) +
              ": p=" + fmt(r.pvalue) + " over " + std::to_string(draws) +
              " draws";
  }
  return pass("all C(g, g/s) subsets uniform at significance 0.001 (" +
              detail + ")");
}

// --- criterion 5: fused max pooling equals the two-step composition --------

Outcome criterion_two_step() {
  RngStream rng(105, 0, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor4 x = random_tensor({1, 2, 8, 8}, rng);
    for (int64_t k : {2, 3}) {
      const Tensor4 fused = max_pool_standard(x, k, 2).first;
      const Tensor4 two_step =
          uniform_downsample(max_pool_stride1(x, k).first, 2);
      if (!(fused == two_step)) {
        return fail("input " + std::to_string(trial) + ", window " +
                    std::to_string(k) + ": outputs differ");
      }
    }
  }
  return pass("bit-identical to downsample(stride-1 max) on 1000 random "
              "inputs for k in {2,3}, s=2");
}

// --- criterion 6: gradient checks -------------------------------------------

Outcome criterion_gradients() {
  // Frozen-index layer check.
  RngStream rng(106, 0, 0);
  const Tensor4 x = distinct_tensor({1, 2, 8, 8}, rng);
  const PoolGeom geom{3, 2, 4};
  const auto [z, tape] =
      s3pool_forward(x, geom, RngStream(107, 0, 0), PoolMode::Train);
  Tensor4 upstream(z.dims());
  for (int64_t i = 0; i < upstream.size(); ++i) {
    upstream.data()[i] = rng.next_double() - 0.5;
  }
  const Tensor4 analytic = s3pool_backward(upstream, *tape);
  const auto layer_loss = [&](const Tensor4& input) {
    const Tensor4 out = stochastic_downsample_with(
        max_pool_stride1(input, geom.window).first, tape->indices);
    double total = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) {
      total += out.data()[i] * upstream.data()[i];
    }
    return total;
  };
  double layer_err;
  {
    Tensor4 probe = x;
    double diff = 0.0, scale = 0.0;
    const double h = 1e-6;
    for (int64_t i = 0; i < x.size(); ++i) {
      probe.data()[i] = x.data()[i] + h;
      const double up = layer_loss(probe);
      probe.data()[i] = x.data()[i] - h;
      const double down = layer_loss(probe);
      probe.data()[i] = x.data()[i];
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic.data()[i];
      diff += (a - fd) * (a - fd);
      scale = std::max({scale, std::abs(a), std::abs(fd)});
    }
    layer_err = scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
    if (layer_err >= 1e-4) {
      return fail("frozen-index layer relative error " + fmt(layer_err) +
                  " >= 1e-4");
    }
  }

  // Full two-pool model check.
  const std::vector<LayerSpec> arch = {
      LayerSpec::conv(4, 3),
      LayerSpec::batchnorm(),
      LayerSpec::relu(),
      LayerSpec::pool(PoolVariant::S3, 3, 2, 8),
      LayerSpec::conv(6, 3),
      LayerSpec::batchnorm(),
      LayerSpec::relu(),
      LayerSpec::pool(PoolVariant::S3, 3, 2, 4),
      LayerSpec::conv(3, 1),
      LayerSpec::global_avg_pool(),
      LayerSpec::softmax_ce_marker(),
  };
  Model model = build_model(arch, {1, 2, 16, 16}, 7);
  const Tensor4 mx = distinct_tensor({2, 2, 16, 16}, rng);
  const std::vector<int64_t> labels = {0, 2};
  const uint64_t seed = 13, step = 2;
  const ForwardResult r = forward(model, mx, PoolMode::Train, seed, step);
  const auto [loss0, loss_grad] = softmax_ce(r.logits, labels);
  (void)loss0;
  const std::vector<Tensor4> grads = backward(model, r.tapes, loss_grad);
  const auto model_loss = [&]() {
    return softmax_ce(forward(model, mx, PoolMode::Train, seed, step).logits,
                      labels)
        .first;
  };
  double worst_frac = 0.0;
  const double h = 1e-5;
  for (size_t p = 0; p < model.params.size(); ++p) {
    double diff = 0.0, scale = 0.0;
    for (int64_t i = 0; i < model.params[p].size(); ++i) {
      const double keep = model.params[p].data()[i];
      model.params[p].data()[i] = keep + h;
      const double up = model_loss();
      model.params[p].data()[i] = keep - h;
      const double down = model_loss();
      model.params[p].data()[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double a = grads[p].data()[i];
      diff += (a - fd) * (a - fd);
      scale = std::max({scale, std::abs(a), std::abs(fd)});
    }
    // Absolute floor covers parameters whose true gradient is exactly zero
    // (a conv bias feeding batchnorm), where both sides are rounding noise.
    const double err = std::sqrt(diff);
    const double bound = std::max(1e-8, 1e-3 * scale);
    if (err > bound) {
      return fail("model param " + std::to_string(p) + ": gradient error " +
                  fmt(err) + " at scale " + fmt(scale) + " exceeds 1e-3");
    }
    worst_frac = std::max(worst_frac, err / bound);
  }
  return pass("frozen-index layer rel err " + fmt(layer_err) +
              " < 1e-4; two-pool model within 1e-3 everywhere (worst at " +
              fmt(worst_frac) + " of the bound)");
}

// --- criterion 7: regularization direction and grid-size trend -------------

Outcome criterion_regularization() {
  const std::vector<uint64_t> seeds = {1, 2, 3};
  const std::vector<std::string> configs = {"max", "s3pool-2-2", "s3pool-8-8",
                                            "s3pool-16-8"};
  TrainConfig base;
  base.arch = "tiny";
  base.epochs = 20;
  base.batch = 50;
  base.lr = {1.0, 15, 0.1};
  base.dataset.source = "synth";
  base.dataset.classes = 10;
  base.dataset.train_size = 1000;
  base.dataset.test_size = 100;

  std::vector<double> means;
  for (const std::string& pooling : configs) {
    double total = 0.0;
    for (uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.pooling = pooling;
      cfg.seed = seed;
      std::printf("-- %s seed %llu\n", pooling.c_str(),
                  static_cast<unsigned long long>(seed));
      std::fflush(stdout);
      total += run_train(cfg, "").final_train_error;
    }
    means.push_back(total / static_cast<double>(seeds.size()));
  }

  std::string summary;
  for (size_t i = 0; i < configs.size(); ++i) {
    summary += (i ? ", " : "") + configs[i] + " " + fmt(means[i]) + "%";
  }
  if (!(means[3] > means[0])) {
    return fail("s3pool-16-8 mean final train error not above the max-pool "
                "baseline (" +
                summary + ")");
  }
  if (!(means[1] < means[2] && means[2] < means[3])) {
    return fail("train error not increasing over grids 2-2 < 8-8 < 16-8 (" +
                summary + ")");
  }
  return pass("seed-mean final train error: " + summary);
}

// --- criterion 8: runtime overhead bound ------------------------------------

// Runs the shipped bench command in a fresh process, the way it is actually
// used. Measuring in this process would measure the allocator state left
// behind by the twelve training runs of the regularization criterion rather
// than the pooling operators themselves.
Outcome criterion_overhead() {
  const auto dir = temp_dir("bench");
  std::filesystem::create_directories(dir);
  const auto cfg_path = dir / "cfg.json";
  {
    std::ofstream os(cfg_path);
    os << R"({"arch": "tiny", "pooling": "s3pool-16-8", "batch": 50,
              "seed": 4, "dataset": {"source": "synth", "classes": 10,
              "train_size": 1000, "test_size": 500}})";
  }
  const std::string command = std::string(CLI_BIN) + " bench --config " +
                              cfg_path.string() + " --warmup 1 --timed 5 " +
                              "--out " + dir.string() + " > " +
                              (dir / "log.txt").string() + " 2>&1";
  const int status = std::system(command.c_str());
  Outcome outcome = pass("");
  if (status != 0) {
    outcome = fail("bench command exited with status " +
                   std::to_string(status));
  } else {
    const nlohmann::json results =
        nlohmann::json::parse(slurp(dir / "results.json"));
    const double ratio = results.at("timing").at("ratio_to_max").at("s3pool");
    const double zeiler = results.at("timing").at("ratio_to_max").at("zeiler");
    if (!(ratio < 1.25)) {
      outcome =
          fail("seconds/epoch ratio s3pool/max " + fmt(ratio) + " >= 1.25");
    } else {
      outcome = pass("seconds/epoch ratio s3pool/max " + fmt(ratio) +
                     " < 1.25 (zeiler/max " + fmt(zeiler) +
                     "; median of 5 interleaved epochs per variant)");
    }
  }
  std::filesystem::remove_all(dir);
  return outcome;
}

// --- criterion 9: replay determinism ----------------------------------------

Outcome criterion_determinism() {
  TrainConfig cfg;
  cfg.arch = "tiny";
  cfg.pooling = "s3pool-16-8";
  cfg.epochs = 2;
  cfg.batch = 50;
  cfg.seed = 11;
  cfg.dataset.source = "synth";
  cfg.dataset.classes = 10;
  cfg.dataset.train_size = 200;
  cfg.dataset.test_size = 100;

  const auto dir1 = temp_dir("det1");
  const auto dir2 = temp_dir("det2");
  run_train(cfg, dir1.string());
  run_train(cfg, dir2.string());

  const auto strip_seconds = [](const std::string& text) {
    std::stringstream ss(text), out;
    std::string line;
    while (std::getline(ss, line)) {
      out << line.substr(0, line.rfind(',')) << '\n';
    }
    return out.str();
  };
  Outcome outcome = pass("");
  if (slurp(dir1 / "model.ckpt") != slurp(dir2 / "model.ckpt")) {
    outcome = fail("checkpoints differ between identical runs");
  } else if (strip_seconds(slurp(dir1 / "metrics.csv")) !=
             strip_seconds(slurp(dir2 / "metrics.csv"))) {
    outcome = fail("metrics differ between identical runs");
  } else {
    nlohmann::json r1 = nlohmann::json::parse(slurp(dir1 / "results.json"));
    nlohmann::json r2 = nlohmann::json::parse(slurp(dir2 / "results.json"));
    r1.erase("timing");
    r2.erase("timing");
    if (r1 != r2) outcome = fail("results differ between identical runs");
  }

  if (outcome.pass) {
    const double e1 = run_eval((dir1 / "model.ckpt").string(), cfg, "test");
    const double e2 = run_eval((dir2 / "model.ckpt").string(), cfg, "test");
    if (e1 != e2) outcome = fail("eval errors differ between identical runs");
  }

  if (outcome.pass) {
    ImageGray gray{8, 8, {}};
    for (int i = 0; i < 64; ++i) {
      gray.samples.push_back(static_cast<uint8_t>(i * 4 + 1));
    }
    const auto img = temp_dir("demo_in.pgm");
    const auto out1 = temp_dir("demo1.pgm");
    const auto out2 = temp_dir("demo2.pgm");
    write_pnm(gray, img.string());
    run_demo_downsample(img.string(), out1.string(), 2, 8, 21, "stochastic");
    run_demo_downsample(img.string(), out2.string(), 2, 8, 21, "stochastic");
    if (slurp(out1) != slurp(out2)) {
      outcome = fail("stochastic demo images differ for an identical seed");
    }
    std::filesystem::remove(img);
    std::filesystem::remove(out1);
    std::filesystem::remove(out2);
  }
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
  if (outcome.pass) {
    outcome.detail = "checkpoints, metrics (excluding wall-clock), eval "
                     "errors and demo images are bit-identical across "
                     "repeated runs";
  }
  return outcome;
}

// --- criterion 10: stride-1 identity and the shape law ----------------------

Outcome criterion_shape_law() {
  RngStream seeds(108, 0, 0);
  int64_t identity_cases = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int64_t s = 1 + static_cast<int64_t>(seeds.uniform_below(3));
    const int64_t g = s * (1 + static_cast<int64_t>(seeds.uniform_below(2)));
    const int64_t h = g * (1 + static_cast<int64_t>(seeds.uniform_below(3)));
    const int64_t w = g * (1 + static_cast<int64_t>(seeds.uniform_below(3)));
    const int64_t k = 1 + static_cast<int64_t>(seeds.uniform_below(3));
    const PoolGeom geom{k, s, g};
    RngStream rng(109, 1, static_cast<uint64_t>(trial));
    const Tensor4 x = random_tensor({2, 2, h, w}, rng);
    const Dims4 want{2, 2, h / s, w / s};

    const Tensor4 o = max_pool_stride1(x, k).first;
    const auto [z, indices] =
        stochastic_downsample(o, geom, RngStream(110, 0, 0));
    const struct {
      const char* name;
      Dims4 got;
    } shapes[] = {
        {"max_pool_standard", max_pool_standard(x, k, s).first.dims()},
        {"avg_pool", avg_pool(x, k, s).dims()},
        {"uniform_downsample", uniform_downsample(o, s).dims()},
        {"stochastic_downsample", z.dims()},
        {"exact_expectation_infer", exact_expectation_infer(x, geom).dims()},
        {"s3pool train",
         s3pool_forward(x, geom, RngStream(111, 0, 0), PoolMode::Train)
             .first.dims()},
        {"s3pool infer",
         s3pool_forward(x, geom, RngStream(111, 0, 0), PoolMode::Infer)
             .first.dims()},
        {"zeiler",
         zeiler_stochastic_pool(x, k, s, RngStream(112, 0, 0), PoolMode::Train)
             .first.dims()},
    };
    for (const auto& shape : shapes) {
      if (!(shape.got == want)) {
        return fail(std::string(shape.name) + " mapped " + to_string(x.dims()) +
                    " to " + to_string(shape.got) + ", want " +
                    to_string(want));
      }
    }
    if (s == 1) {
      ++identity_cases;
      if (!(z == o)) {
        return fail("stochastic downsampling with s=1 did not return its "
                    "input");
      }
      if (!(uniform_downsample(o, 1) == o)) {
        return fail("uniform downsampling with s=1 did not return its input");
      }
    }
  }
  return pass("every op maps (h, w) to (h/s, w/s) over 60 random geometries; "
              "s=1 is the identity in " +
              std::to_string(identity_cases) + " of them");
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* title;
    double budget_seconds;  // 0 = no stated budget
    std::function<Outcome()> fn;
  };
  // Optional arguments select a subset of criteria by id, e.g. "acceptance 8".
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::vector<Criterion> criteria = {
      {1, "expectation-weight exactness", 1.0, criterion_weights},
      {2, "average-pooling reduction", 5.0, criterion_avg_reduction},
      {3, "Monte Carlo consistency", 60.0, criterion_monte_carlo},
      {4, "sampler uniformity", 0.0, criterion_sampler_uniformity},
      {5, "two-step identity", 0.0, criterion_two_step},
      {6, "gradient correctness", 0.0, criterion_gradients},
      {7, "regularization direction", 900.0, criterion_regularization},
      {8, "overhead bound", 300.0, criterion_overhead},
      {9, "determinism", 0.0, criterion_determinism},
      {10, "stride-1 identity and shape law", 0.0, criterion_shape_law},
  };

  int64_t passed = 0, ran = 0;
  double total_seconds = 0.0;
  for (const Criterion& criterion : criteria) {
    if (!only.empty() &&
        std::find(only.begin(), only.end(), criterion.id) == only.end()) {
      continue;
    }
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criterion.fn();
    } catch (const std::exception& e) {
      outcome = fail(std::string("exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    total_seconds += seconds;
    if (outcome.pass && criterion.budget_seconds > 0.0 &&
        seconds >= criterion.budget_seconds) {
      outcome = fail("correct but took " + fmt(seconds) +
                     "s, over the budget of " + fmt(criterion.budget_seconds) +
                     "s");
    }
    std::printf("criterion %2d %s %-34s (%.2fs) %s\n", criterion.id,
                outcome.pass ? "PASS" : "FAIL", criterion.title, seconds,
                outcome.detail.c_str());
    std::fflush(stdout);
    passed += outcome.pass ? 1 : 0;
  }
  std::printf("acceptance: %lld/%lld passed in %.1fs\n",
              static_cast<long long>(passed), static_cast<long long>(ran),
              total_seconds);
  return ran > 0 && passed == ran ? 0 : 1;
}
