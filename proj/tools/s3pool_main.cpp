#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "s3pool/harness.hpp"

namespace {

using s3pool::TrainConfig;

TrainConfig config_with_overrides(const std::string& config_path,
                                  int64_t seed_override) {
  if (config_path.empty()) {
    throw s3pool::ConfigError("missing --config");
  }
  TrainConfig cfg = s3pool::load_train_config(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
  return cfg;
}

int print_verify_report(const s3pool::VerifyReport& report,
                        const std::string& level) {
  std::printf("name\tstatus\tseconds\tdetail\n");
  int64_t passed = 0;
  double total = 0.0;
  for (const auto& check : report.checks) {
    std::printf("%s\t%s\t%.3f\t%s\n", check.name.c_str(),
                check.pass ? "PASS" : "FAIL", check.seconds,
                check.detail.c_str());
    passed += check.pass ? 1 : 0;
    total += check.seconds;
  }
  std::printf("verify %s: %lld/%zu passed in %.1fs\n", level.c_str(),
              static_cast<long long>(passed), report.checks.size(), total);
  return report.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic spatial downsampling pooling toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  int64_t seed_override = -1;
  int64_t threads = 1;
  std::string out_dir;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_option("--threads", threads,
                 "worker cap (this build always runs one worker)");
  app.add_option("--out", out_dir, "output directory");

  auto* demo = app.add_subcommand(
      "demo-downsample", "downsample a PGM/PPM image spatially");
  std::string demo_in, demo_out, demo_mode = "uniform";
  int64_t demo_stride = 2, demo_grid = 0;
  demo->add_option("input", demo_in, "input .pgm/.ppm")->required();
  demo->add_option("output", demo_out, "output image path")->required();
  demo->add_option("--stride", demo_stride, "downsampling stride s");
  demo->add_option("--grid", demo_grid,
                   "grid size g (stochastic mode; must divide the dims; "
                   "defaults to the stride)");
  demo->add_option("--mode", demo_mode, "uniform | stochastic");

  auto* verify = app.add_subcommand("verify", "run the property suites");
  std::string verify_level = "fast";
  bool inject_off_by_one = false;
  verify->add_option("--level", verify_level, "fast | full");
  verify
      ->add_flag("--inject-off-by-one", inject_off_by_one,
                 "deliberately break the expectation weights to demonstrate "
                 "suite sensitivity")
      ->group("");

  auto* train = app.add_subcommand("train", "train a model per the config");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_checkpoint, eval_split = "test";
  eval->add_option("--checkpoint", eval_checkpoint, "model.ckpt path")
      ->required();
  eval->add_option("--split", eval_split, "train | test");

  auto* bench = app.add_subcommand(
      "bench", "time max / zeiler / s3pool epochs under one arch");
  int64_t bench_warmup = 1, bench_timed = 2;
  bench->add_option("--warmup", bench_warmup, "untimed warmup epochs");
  bench->add_option("--timed", bench_timed, "timed epochs");

  auto* sweep = app.add_subcommand(
      "sweep-grid", "train/eval once per grid configuration");
  std::string sweep_grids;
  sweep->add_option("--grids", sweep_grids,
                    "comma-separated grid descriptors, e.g. 2-2,8-8,16-8")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads != 1) {
      std::printf("note: this build runs one worker; --threads %lld capped\n",
                  static_cast<long long>(threads));
    }

    if (demo->parsed()) {
      const uint64_t seed =
          seed_override >= 0 ? static_cast<uint64_t>(seed_override) : 1;
      s3pool::run_demo_downsample(demo_in, demo_out, demo_stride,
                                  demo_grid > 0 ? demo_grid : demo_stride,
                                  seed, demo_mode);
      std::printf("wrote %s\n", demo_out.c_str());
      return 0;
    }

    if (verify->parsed()) {
      if (verify_level != "fast" && verify_level != "full") {
        throw s3pool::ConfigError("verify: level must be fast or full");
      }
      if (inject_off_by_one) {
        // Off-by-one: report the weight of position a at position a+1
        // (cyclically). Every distribution with a non-uniform profile moves.
        s3pool::expectation_weights_hook =
            [](const s3pool::PoolGeom& geom, int64_t pos) {
              std::vector<s3pool::Rational> w =
                  s3pool::expectation_weights(geom, pos);
              std::rotate(w.begin(), w.begin() + 1, w.end());
              return w;
            };
      }
      const s3pool::VerifyReport report = s3pool::run_verify(
          verify_level == "fast" ? s3pool::VerifyLevel::Fast
                                 : s3pool::VerifyLevel::Full);
      return print_verify_report(report, verify_level);
    }

    if (train->parsed()) {
      const TrainConfig cfg =
          config_with_overrides(config_path, seed_override);
      const std::string dir = out_dir.empty() ? "out" : out_dir;
      const s3pool::RunMetrics rm = s3pool::run_train(cfg, dir);
      std::printf(
          "final train %.2f%%  test %.2f%%  (%.2fs/epoch mean); wrote %s\n",
          rm.final_train_error, rm.final_test_error, rm.mean_epoch_seconds,
          dir.c_str());
      return 0;
    }

    if (eval->parsed()) {
      const TrainConfig cfg =
          config_with_overrides(config_path, seed_override);
      const double error =
          s3pool::run_eval(eval_checkpoint, cfg, eval_split);
      std::printf("%s error %.4f%%\n", eval_split.c_str(), error);
      return 0;
    }

    if (bench->parsed()) {
      const TrainConfig cfg =
          config_with_overrides(config_path, seed_override);
      const s3pool::BenchResult result =
          s3pool::run_bench(cfg, bench_warmup, bench_timed, out_dir);
      std::printf("ratio s3pool/max %.3f, zeiler/max %.3f\n",
                  result.ratio_to_max("s3pool"),
                  result.ratio_to_max("zeiler"));
      return 0;
    }

    if (sweep->parsed()) {
      const TrainConfig cfg =
          config_with_overrides(config_path, seed_override);
      std::vector<std::string> grids;
      std::stringstream ss(sweep_grids);
      std::string part;
      while (std::getline(ss, part, ',')) {
        if (!part.empty()) grids.push_back(part);
      }
      const auto rows = s3pool::run_sweep_grid(cfg, grids, out_dir);
      std::printf("config,train_error,test_error\n");
      for (const auto& row : rows) {
        std::printf("%s,%.6f,%.6f\n", row.config.c_str(), row.train_error,
                    row.test_error);
      }
      return 0;
    }
  } catch (const s3pool::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
