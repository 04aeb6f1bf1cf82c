#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "s3pool/data.hpp"
#include "s3pool/model.hpp"
#include "s3pool/sampling.hpp"

namespace s3pool {

// Malformed config files, bad descriptors, and grid/dimension mismatches.
// The CLI maps this (and usage errors) to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LrSchedule {
  double initial = 1.0;
  int64_t drop_epoch = 0;  // 1-based epoch the drop takes effect; 0 = never
  double drop_factor = 1.0;
};

struct DatasetConfig {
  std::string source;                 // "synth" | "cifar10"
  int64_t classes = 10;               // synth
  int64_t train_size = 1000;          // synth
  int64_t test_size = 500;            // synth
  std::string train_path, test_path;  // cifar10
};

struct TrainConfig {
  std::string arch = "tiny";
  std::string pooling = "max";
  int64_t epochs = 1;
  int64_t batch = 50;
  LrSchedule lr;
  uint64_t seed = 1;
  DatasetConfig dataset;
  int64_t train_cap = 0;  // cap on training records; 0 = all
};

// Strict JSON parsing: unknown keys anywhere are rejected, as are invariant
// violations (epochs >= 1, batch >= 1, drop_epoch <= epochs, ...).
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);
std::string train_config_to_json(const TrainConfig& cfg);

// Expands cfg.arch ("tiny" or an explicit comma-separated layer list) and
// cfg.pooling ("max" | "avg" | "zeiler" | "s3pool-g1-g2-...") into layer
// specs. Grid counts must match the number of pool layers. Throws
// ConfigError; grid-vs-dimension validation happens in build_model before
// any training.
std::vector<LayerSpec> build_arch(const TrainConfig& cfg, int64_t num_classes);

struct Dataset {
  LabeledBatch train;
  LabeledBatch test;
  int64_t classes = 0;
};

// Synth splits are generated from streams derived from cfg.seed; cifar10
// splits come from the configured files (train_cap caps records).
Dataset load_dataset(const TrainConfig& cfg);

struct EpochMetrics {
  int64_t epoch = 0;  // 1-based
  double train_error = 0.0;
  double test_error = 0.0;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;
  double final_train_error = 0.0;
  double final_test_error = 0.0;
  double mean_epoch_seconds = 0.0;
};

// Trains per the config, writing metrics.csv, results.json and model.ckpt
// under out_dir. Train error is the epoch mean over the stochastic training
// minibatches; test error is a deterministic infer pass each epoch.
RunMetrics run_train(const TrainConfig& cfg, const std::string& out_dir);

// Top-1 error percentage of a checkpointed model on the configured dataset
// split ("train" | "test"), infer mode.
double run_eval(const std::string& checkpoint_path, const TrainConfig& cfg,
                const std::string& split);

struct BenchResult {
  // (variant name, seconds per epoch); each timed epoch includes one full
  // training pass and one full test pass.
  std::vector<std::pair<std::string, double>> seconds_per_epoch;
  double ratio_to_max(const std::string& variant) const;
};

// Benchmarks max / zeiler / s3pool under the config's arch; writes
// results.json under out_dir when out_dir is non-empty.
BenchResult run_bench(const TrainConfig& cfg, int64_t warmup_epochs,
                      int64_t timed_epochs, const std::string& out_dir);

struct SweepRow {
  std::string config;  // e.g. "s3pool-16-8"
  double train_error = 0.0;
  double test_error = 0.0;
};

// One full train/eval run per grid descriptor (e.g. {"2-2", "8-8", "16-8"});
// writes sweep.csv under out_dir. Every descriptor is validated against the
// arch before any training starts.
std::vector<SweepRow> run_sweep_grid(const TrainConfig& cfg,
                                     const std::vector<std::string>& grids,
                                     const std::string& out_dir);

// Downsamples a PNM image spatially. mode "uniform" keeps the top-left
// element of each s x s window; mode "stochastic" samples rows/columns per
// vertical/horizontal grid (grid | dims required), replayable by seed.
void run_demo_downsample(const std::string& in_path,
                         const std::string& out_path, int64_t stride,
                         int64_t grid, uint64_t seed, const std::string& mode);

enum class VerifyLevel { Fast, Full };

struct VerifyCheck {
  std::string name;
  bool pass = false;
  double seconds = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool all_pass() const;
};

// Implementation used by the expectation-weight checks; replaceable so a
// deliberately broken variant can demonstrate the suite catches it.
extern std::function<std::vector<Rational>(const PoolGeom&, int64_t)>
    expectation_weights_hook;

// Property suites over all modules. Fast stays under a minute; Full adds
// the long Monte Carlo and training-behavior checks.
VerifyReport run_verify(VerifyLevel level);

}  // namespace s3pool
