#include "s3pool/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "s3pool/layers.hpp"
#include "s3pool/pooling.hpp"

namespace s3pool {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj,
                         std::initializer_list<const char*> allowed,
                         const char* where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("config: unknown key \"" + item.key() + "\" in " +
                        where);
    }
  }
}

int64_t get_int(const json& obj, const char* key, int64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError(std::string("config: \"") + key +
                      "\" must be an integer");
  }
  return v.get<int64_t>();
}

double get_double(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) {
    throw ConfigError(std::string("config: \"") + key + "\" must be a number");
  }
  return v.get<double>();
}

std::string get_string(const json& obj, const char* key,
                       const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) {
    throw ConfigError(std::string("config: \"") + key + "\" must be a string");
  }
  return v.get<std::string>();
}

struct PoolingDesc {
  PoolVariant variant = PoolVariant::Max;
  std::vector<int64_t> grids;  // one per pool layer, s3pool only
};

PoolingDesc parse_pooling(const std::string& descriptor) {
  if (descriptor == "max") return {PoolVariant::Max, {}};
  if (descriptor == "avg") return {PoolVariant::Avg, {}};
  if (descriptor == "zeiler") return {PoolVariant::Zeiler, {}};
  const std::string prefix = "s3pool-";
  if (descriptor.rfind(prefix, 0) == 0) {
    PoolingDesc desc{PoolVariant::S3, {}};
    std::stringstream ss(descriptor.substr(prefix.size()));
    std::string part;
    while (std::getline(ss, part, '-')) {
      int64_t g = 0;
      try {
        size_t used = 0;
        g = std::stoll(part, &used);
        if (used != part.size()) throw std::invalid_argument(part);
      } catch (const std::exception&) {
        throw ConfigError("config: bad grid size \"" + part + "\" in \"" +
                          descriptor + "\"");
      }
      if (g < 1) {
        throw ConfigError("config: grid sizes must be >= 1 in \"" +
                          descriptor + "\"");
      }
      desc.grids.push_back(g);
    }
    if (desc.grids.empty()) {
      throw ConfigError(
          "config: s3pool descriptor needs per-pool grid sizes, e.g. "
          "\"s3pool-16-8\"");
    }
    return desc;
  }
  throw ConfigError("config: pooling \"" + descriptor +
                    "\" not recognized (max | avg | zeiler | s3pool-g1-g2)");
}

std::vector<std::string> split_trimmed(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) {
    const auto begin = part.find_first_not_of(" \t");
    const auto end = part.find_last_not_of(" \t");
    parts.push_back(begin == std::string::npos
                        ? std::string()
                        : part.substr(begin, end - begin + 1));
  }
  return parts;
}

// "tiny" is the two-pool desk-scale stack for 32x32 inputs: grids 16 and 8
// are valid for the first (32x32) and second (16x16) pool layer.
std::string expand_preset(const std::string& arch, int64_t num_classes) {
  if (arch == "tiny") {
    return "conv-16-3,bn,relu,pool-3-2,conv-32-3,bn,relu,pool-3-2,conv-" +
           std::to_string(num_classes) + "-1,gap,softmax";
  }
  return arch;
}

int64_t parse_token_int(const std::string& field, const std::string& token) {
  try {
    size_t used = 0;
    const int64_t v = std::stoll(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number \"" + field + "\" in arch token \"" +
                      token + "\"");
  }
}

double parse_token_double(const std::string& field, const std::string& token) {
  try {
    size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number \"" + field + "\" in arch token \"" +
                      token + "\"");
  }
}

void append_csv_row(std::string& csv, int64_t epoch, const char* split,
                    double error, double seconds) {
  char line[128];
  std::snprintf(line, sizeof(line), "%lld,%s,%.6f,%.6f\n",
                static_cast<long long>(epoch), split, error, seconds);
  csv += line;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

LabeledBatch take_first(const LabeledBatch& batch, int64_t count) {
  const Dims4 d = batch.images.dims();
  LabeledBatch out;
  out.images = Tensor4({count, d.c, d.h, d.w});
  std::copy_n(batch.images.data(), out.images.size(), out.images.data());
  out.labels.assign(batch.labels.begin(), batch.labels.begin() + count);
  return out;
}

void gather_minibatch(const LabeledBatch& data,
                      const std::vector<int64_t>& order, int64_t start,
                      int64_t count, Tensor4& x,
                      std::vector<int64_t>& labels) {
  const Dims4 d = data.images.dims();
  x = Tensor4({count, d.c, d.h, d.w});
  labels.resize(static_cast<size_t>(count));
  const int64_t plane = d.h * d.w;
  for (int64_t i = 0; i < count; ++i) {
    const int64_t src = order[static_cast<size_t>(start + i)];
    labels[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(src)];
    for (int64_t c = 0; c < d.c; ++c) {
      std::copy_n(data.images.data() + data.images.plane_offset(src, c), plane,
                  x.data() + x.plane_offset(i, c));
    }
  }
}

int64_t count_top1_wrong(const Tensor4& logits,
                         const std::vector<int64_t>& labels) {
  const Dims4 d = logits.dims();
  int64_t wrong = 0;
  for (int64_t i = 0; i < d.n; ++i) {
    int64_t best = 0;
    for (int64_t c = 1; c < d.c; ++c) {
      if (logits.at(i, c, 0, 0) > logits.at(i, best, 0, 0)) best = c;
    }
    if (best != labels[static_cast<size_t>(i)]) ++wrong;
  }
  return wrong;
}

// One pass over the training set in shuffled minibatches; returns the top-1
// error (%) of the stochastic forward outputs actually used for the updates.
double train_one_epoch(Model& model, const LabeledBatch& train,
                       const TrainConfig& cfg, int64_t epoch, double lr) {
  const int64_t n = train.images.dims().n;
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  RngStream shuffle(cfg.seed, 9100, static_cast<uint64_t>(epoch));
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = static_cast<int64_t>(
        shuffle.uniform_below(static_cast<uint64_t>(i + 1)));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }

  Tensor4 x;
  std::vector<int64_t> labels;
  int64_t wrong = 0;
  for (int64_t start = 0; start < n; start += cfg.batch) {
    const int64_t count = std::min(cfg.batch, n - start);
    gather_minibatch(train, order, start, count, x, labels);
    const ForwardResult r =
        forward(model, x, PoolMode::Train, cfg.seed, model.step);
    wrong += count_top1_wrong(r.logits, labels);
    const auto [loss, loss_grad] = softmax_ce(r.logits, labels);
    (void)loss;
    adadelta_step(model.params, backward(model, r.tapes, loss_grad),
                  model.acc_grad, model.acc_delta, lr, {});
    model.step += 1;
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(n);
}

// Deterministic infer pass; top-1 error (%).
double evaluate(Model& model, const LabeledBatch& data, int64_t batch) {
  const int64_t n = data.images.dims().n;
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Tensor4 x;
  std::vector<int64_t> labels;
  int64_t wrong = 0;
  for (int64_t start = 0; start < n; start += batch) {
    const int64_t count = std::min(batch, n - start);
    gather_minibatch(data, order, start, count, x, labels);
    const ForwardResult r = forward(model, x, PoolMode::Infer, 0, 0);
    wrong += count_top1_wrong(r.logits, labels);
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(n);
}

Model build_model_checked(const TrainConfig& cfg, const Dataset& data) {
  const std::vector<LayerSpec> arch = build_arch(cfg, data.classes);
  const Dims4 d = data.train.images.dims();
  try {
    return build_model(arch, {1, d.c, d.h, d.w}, cfg.seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

json config_echo(const TrainConfig& cfg) {
  return json::parse(train_config_to_json(cfg));
}

double lr_for_epoch(const LrSchedule& lr, int64_t epoch) {
  const bool dropped = lr.drop_epoch > 0 && epoch >= lr.drop_epoch;
  return lr.initial * (dropped ? lr.drop_factor : 1.0);
}

}  // namespace

TrainConfig parse_train_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown_keys(j,
                      {"arch", "pooling", "epochs", "batch", "lr", "seed",
                       "dataset", "train_cap"},
                      "the top level");

  TrainConfig cfg;
  cfg.arch = get_string(j, "arch", cfg.arch);
  cfg.pooling = get_string(j, "pooling", cfg.pooling);
  cfg.epochs = get_int(j, "epochs", cfg.epochs);
  cfg.batch = get_int(j, "batch", cfg.batch);
  const int64_t seed = get_int(j, "seed", static_cast<int64_t>(cfg.seed));
  if (seed < 0) throw ConfigError("config: \"seed\" must be >= 0");
  cfg.seed = static_cast<uint64_t>(seed);
  cfg.train_cap = get_int(j, "train_cap", cfg.train_cap);

  if (j.contains("lr")) {
    const json& lr = j.at("lr");
    if (!lr.is_object()) throw ConfigError("config: \"lr\" must be an object");
    reject_unknown_keys(lr, {"initial", "drop_epoch", "drop_factor"}, "\"lr\"");
    cfg.lr.initial = get_double(lr, "initial", cfg.lr.initial);
    cfg.lr.drop_epoch = get_int(lr, "drop_epoch", cfg.lr.drop_epoch);
    cfg.lr.drop_factor = get_double(lr, "drop_factor", cfg.lr.drop_factor);
  }

  if (!j.contains("dataset")) {
    throw ConfigError("config: missing \"dataset\"");
  }
  const json& ds = j.at("dataset");
  if (!ds.is_object()) {
    throw ConfigError("config: \"dataset\" must be an object");
  }
  cfg.dataset.source = get_string(ds, "source", "");
  if (cfg.dataset.source == "synth") {
    reject_unknown_keys(ds, {"source", "classes", "train_size", "test_size"},
                        "\"dataset\"");
    cfg.dataset.classes = get_int(ds, "classes", cfg.dataset.classes);
    cfg.dataset.train_size = get_int(ds, "train_size", cfg.dataset.train_size);
    cfg.dataset.test_size = get_int(ds, "test_size", cfg.dataset.test_size);
  } else if (cfg.dataset.source == "cifar10") {
    reject_unknown_keys(ds, {"source", "train_path", "test_path"},
                        "\"dataset\"");
    cfg.dataset.train_path = get_string(ds, "train_path", "");
    cfg.dataset.test_path = get_string(ds, "test_path", "");
    if (cfg.dataset.train_path.empty() || cfg.dataset.test_path.empty()) {
      throw ConfigError(
          "config: cifar10 needs \"train_path\" and \"test_path\"");
    }
  } else {
    throw ConfigError("config: dataset source \"" + cfg.dataset.source +
                      "\" not recognized (synth | cifar10)");
  }

  if (cfg.epochs < 1) throw ConfigError("config: \"epochs\" must be >= 1");
  if (cfg.batch < 1) throw ConfigError("config: \"batch\" must be >= 1");
  if (cfg.train_cap < 0) {
    throw ConfigError("config: \"train_cap\" must be >= 0");
  }
  if (cfg.lr.initial <= 0 || cfg.lr.drop_factor <= 0) {
    throw ConfigError("config: lr multipliers must be > 0");
  }
  if (cfg.lr.drop_epoch < 0 || cfg.lr.drop_epoch > cfg.epochs) {
    throw ConfigError("config: lr drop_epoch must lie in [0, epochs]");
  }
  if (cfg.dataset.source == "synth") {
    if (cfg.dataset.classes < 2 || cfg.dataset.classes > 10) {
      throw ConfigError("config: synth classes must lie in [2, 10]");
    }
    if (cfg.dataset.train_size < cfg.dataset.classes ||
        cfg.dataset.test_size < 1) {
      throw ConfigError("config: synth split sizes too small");
    }
  }
  parse_pooling(cfg.pooling);  // validate the descriptor eagerly
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["arch"] = cfg.arch;
  j["pooling"] = cfg.pooling;
  j["epochs"] = cfg.epochs;
  j["batch"] = cfg.batch;
  j["lr"] = {{"initial", cfg.lr.initial},
             {"drop_epoch", cfg.lr.drop_epoch},
             {"drop_factor", cfg.lr.drop_factor}};
  j["seed"] = cfg.seed;
  j["train_cap"] = cfg.train_cap;
  if (cfg.dataset.source == "synth") {
    j["dataset"] = {{"source", "synth"},
                    {"classes", cfg.dataset.classes},
                    {"train_size", cfg.dataset.train_size},
                    {"test_size", cfg.dataset.test_size}};
  } else {
    j["dataset"] = {{"source", cfg.dataset.source},
                    {"train_path", cfg.dataset.train_path},
                    {"test_path", cfg.dataset.test_path}};
  }
  return j.dump(2) + "\n";
}

std::vector<LayerSpec> build_arch(const TrainConfig& cfg,
                                  int64_t num_classes) {
  const PoolingDesc pooling = parse_pooling(cfg.pooling);
  const std::string expanded = expand_preset(cfg.arch, num_classes);

  std::vector<LayerSpec> arch;
  size_t pools = 0;
  for (const std::string& token : split_trimmed(expanded, ',')) {
    const std::vector<std::string> fields = split_trimmed(token, '-');
    const std::string& head = fields.front();
    if (head == "conv" && fields.size() == 3) {
      arch.push_back(LayerSpec::conv(parse_token_int(fields[1], token),
                                     parse_token_int(fields[2], token)));
    } else if (head == "bn" && fields.size() == 1) {
      arch.push_back(LayerSpec::batchnorm());
    } else if (head == "relu" && fields.size() == 1) {
      arch.push_back(LayerSpec::relu());
    } else if (head == "pool" && fields.size() == 3) {
      const int64_t window = parse_token_int(fields[1], token);
      const int64_t stride = parse_token_int(fields[2], token);
      int64_t grid = stride;
      if (pooling.variant == PoolVariant::S3) {
        if (pools >= pooling.grids.size()) {
          throw ConfigError("config: pooling \"" + cfg.pooling +
                            "\" lists fewer grids than the arch has pool "
                            "layers");
        }
        grid = pooling.grids[pools];
      }
      ++pools;
      arch.push_back(LayerSpec::pool(pooling.variant, window, stride, grid));
    } else if (head == "dropout" && fields.size() == 2) {
      arch.push_back(LayerSpec::dropout(parse_token_double(fields[1], token)));
    } else if (head == "gap" && fields.size() == 1) {
      arch.push_back(LayerSpec::global_avg_pool());
    } else if (head == "softmax" && fields.size() == 1) {
      arch.push_back(LayerSpec::softmax_ce_marker());
    } else {
      throw ConfigError("config: arch token \"" + token +
                        "\" not recognized (conv-C-K | bn | relu | pool-K-S | "
                        "dropout-R | gap | softmax)");
    }
  }
  if (pooling.variant == PoolVariant::S3 && pools != pooling.grids.size()) {
    throw ConfigError("config: pooling \"" + cfg.pooling + "\" lists " +
                      std::to_string(pooling.grids.size()) +
                      " grids but the arch has " + std::to_string(pools) +
                      " pool layers");
  }
  return arch;
}

Dataset load_dataset(const TrainConfig& cfg) {
  Dataset data;
  if (cfg.dataset.source == "synth") {
    RngStream train_rng(cfg.seed, 9001, 0);
    RngStream test_rng(cfg.seed, 9002, 0);
    data.train = synth_translated_shapes(train_rng, cfg.dataset.train_size,
                                         cfg.dataset.classes);
    data.test = synth_translated_shapes(test_rng, cfg.dataset.test_size,
                                        cfg.dataset.classes);
    data.classes = cfg.dataset.classes;
  } else {
    try {
      data.train = read_cifar10_binary(cfg.dataset.train_path, cfg.train_cap);
      data.test = read_cifar10_binary(cfg.dataset.test_path, 0);
    } catch (const std::runtime_error& e) {
      throw ConfigError(std::string("dataset: ") + e.what());
    }
    data.classes = 10;
  }
  if (cfg.train_cap > 0 && cfg.train_cap < data.train.images.dims().n) {
    data.train = take_first(data.train, cfg.train_cap);
  }
  return data;
}

RunMetrics run_train(const TrainConfig& cfg, const std::string& out_dir) {
  const Dataset data = load_dataset(cfg);
  Model model = build_model_checked(cfg, data);

  std::string csv = "epoch,split,error,seconds\n";
  RunMetrics rm;
  double total_seconds = 0.0;
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_for_epoch(cfg.lr, epoch);

    auto t0 = std::chrono::steady_clock::now();
    const double train_error =
        train_one_epoch(model, data.train, cfg, epoch, lr);
    const double train_seconds = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const double test_error = evaluate(model, data.test, cfg.batch);
    const double test_seconds = seconds_since(t0);

    append_csv_row(csv, epoch, "train", train_error, train_seconds);
    append_csv_row(csv, epoch, "test", test_error, test_seconds);
    rm.epochs.push_back(
        {epoch, train_error, test_error, train_seconds, test_seconds});
    total_seconds += train_seconds + test_seconds;
    std::printf("epoch %lld/%lld  train %.2f%%  test %.2f%%  (%.2fs + %.2fs)\n",
                static_cast<long long>(epoch),
                static_cast<long long>(cfg.epochs), train_error, test_error,
                train_seconds, test_seconds);
    std::fflush(stdout);
  }
  rm.final_train_error = rm.epochs.back().train_error;
  rm.final_test_error = rm.epochs.back().test_error;
  rm.mean_epoch_seconds = total_seconds / static_cast<double>(cfg.epochs);

  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    write_text_file(dir / "metrics.csv", csv);
    save_checkpoint(model, (dir / "model.ckpt").string());
    json results;
    results["command"] = "train";
    results["config"] = config_echo(cfg);
    results["summary"] = {{"epochs", cfg.epochs},
                          {"final_train_error", rm.final_train_error},
                          {"final_test_error", rm.final_test_error},
                          {"checkpoint", "model.ckpt"}};
    results["timing"] = {{"mean_epoch_seconds", rm.mean_epoch_seconds}};
    write_text_file(dir / "results.json", results.dump(2) + "\n");
  }
  return rm;
}

double run_eval(const std::string& checkpoint_path, const TrainConfig& cfg,
                const std::string& split) {
  if (split != "train" && split != "test") {
    throw ConfigError("eval: split must be \"train\" or \"test\"");
  }
  Model model;
  try {
    model = load_checkpoint(checkpoint_path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("eval: ") + e.what());
  }
  const Dataset data = load_dataset(cfg);
  const LabeledBatch& batch = split == "train" ? data.train : data.test;
  const Dims4 want = model.input_dims;
  const Dims4 have = batch.images.dims();
  if (want.c != have.c || want.h != have.h || want.w != have.w) {
    throw ConfigError("eval: checkpoint expects " + to_string(want) +
                      " inputs but the dataset provides " + to_string(have));
  }
  return evaluate(model, batch, cfg.batch);
}

double BenchResult::ratio_to_max(const std::string& variant) const {
  double max_seconds = 0.0, variant_seconds = 0.0;
  for (const auto& [name, seconds] : seconds_per_epoch) {
    if (name == "max") max_seconds = seconds;
    if (name == variant) variant_seconds = seconds;
  }
  return variant_seconds / max_seconds;
}

BenchResult run_bench(const TrainConfig& cfg, int64_t warmup_epochs,
                      int64_t timed_epochs, const std::string& out_dir) {
  if (timed_epochs < 1) throw ConfigError("bench: timed epochs must be >= 1");
  std::string s3_descriptor = cfg.pooling;
  if (s3_descriptor.rfind("s3pool-", 0) != 0) {
    if (cfg.arch != "tiny") {
      throw ConfigError(
          "bench: set pooling to an s3pool-g1-g2 descriptor for custom "
          "archs");
    }
    s3_descriptor = "s3pool-16-8";
  }

  const Dataset data = load_dataset(cfg);
  struct Variant {
    std::string name;
    TrainConfig cfg;
    Model model;
    std::vector<double> epoch_seconds;
  };
  std::vector<Variant> variants;
  for (const std::string& descriptor : {std::string("max"),
                                        std::string("zeiler"), s3_descriptor}) {
    TrainConfig variant_cfg = cfg;
    variant_cfg.pooling = descriptor;
    Model model = build_model_checked(variant_cfg, data);
    const std::string name =
        descriptor.rfind("s3pool-", 0) == 0 ? "s3pool" : descriptor;
    variants.push_back({name, variant_cfg, std::move(model), {}});
  }

  // Each epoch, warmup or timed, is one full training pass plus one full
  // test pass; the test pass is deliberately part of the timed unit. The
  // variants are interleaved round-robin and each reports the median of its
  // per-epoch times, so slow machine-speed drift cannot masquerade as a
  // cost difference between variants measured minutes apart.
  for (int64_t i = 0; i < warmup_epochs; ++i) {
    for (Variant& v : variants) {
      train_one_epoch(v.model, data.train, v.cfg, i + 1, cfg.lr.initial);
      evaluate(v.model, data.test, cfg.batch);
    }
  }
  for (int64_t i = 0; i < timed_epochs; ++i) {
    for (Variant& v : variants) {
      const auto t0 = std::chrono::steady_clock::now();
      train_one_epoch(v.model, data.train, v.cfg, warmup_epochs + i + 1,
                      cfg.lr.initial);
      evaluate(v.model, data.test, cfg.batch);
      v.epoch_seconds.push_back(seconds_since(t0));
    }
  }

  BenchResult result;
  for (Variant& v : variants) {
    std::sort(v.epoch_seconds.begin(), v.epoch_seconds.end());
    const size_t n = v.epoch_seconds.size();
    const double per_epoch =
        n % 2 == 1 ? v.epoch_seconds[n / 2]
                   : 0.5 * (v.epoch_seconds[n / 2 - 1] + v.epoch_seconds[n / 2]);
    result.seconds_per_epoch.emplace_back(v.name, per_epoch);
    std::printf("bench %-8s %.3f s/epoch\n", v.name.c_str(), per_epoch);
    std::fflush(stdout);
  }

  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    json results;
    results["command"] = "bench";
    results["config"] = config_echo(cfg);
    json seconds, ratios;
    for (const auto& [name, per_epoch] : result.seconds_per_epoch) {
      seconds[name] = per_epoch;
      ratios[name] = result.ratio_to_max(name);
    }
    results["timing"] = {{"seconds_per_epoch", seconds},
                         {"ratio_to_max", ratios}};
    write_text_file(dir / "results.json", results.dump(2) + "\n");
  }
  return result;
}

std::vector<SweepRow> run_sweep_grid(const TrainConfig& cfg,
                                     const std::vector<std::string>& grids,
                                     const std::string& out_dir) {
  if (grids.empty()) throw ConfigError("sweep-grid: no grid descriptors");
  const Dataset data = load_dataset(cfg);

  // Validate every configuration up front so a bad grid aborts the sweep
  // before any training starts.
  std::vector<TrainConfig> configs;
  for (const std::string& grid : grids) {
    TrainConfig run_cfg = cfg;
    run_cfg.pooling =
        grid.rfind("s3pool-", 0) == 0 ? grid : "s3pool-" + grid;
    build_model_checked(run_cfg, data);
    configs.push_back(run_cfg);
  }

  std::vector<SweepRow> rows;
  std::string csv = "config,train_error,test_error\n";
  for (const TrainConfig& run_cfg : configs) {
    std::printf("sweep %s\n", run_cfg.pooling.c_str());
    std::fflush(stdout);
    const RunMetrics rm = run_train(run_cfg, "");
    rows.push_back(
        {run_cfg.pooling, rm.final_train_error, rm.final_test_error});
    char line[160];
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f\n",
                  run_cfg.pooling.c_str(), rm.final_train_error,
                  rm.final_test_error);
    csv += line;
  }

  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    write_text_file(dir / "sweep.csv", csv);
  }
  return rows;
}

void run_demo_downsample(const std::string& in_path,
                         const std::string& out_path, int64_t stride,
                         int64_t grid, uint64_t seed,
                         const std::string& mode) {
  if (mode != "uniform" && mode != "stochastic") {
    throw ConfigError("demo-downsample: mode must be uniform or stochastic");
  }
  PnmImage image;
  try {
    image = read_pnm(in_path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("demo-downsample: ") + e.what());
  }
  const Tensor4 t = image_to_tensor(image);
  const Dims4 d = t.dims();

  Tensor4 z;
  try {
    if (mode == "uniform") {
      z = uniform_downsample(t, stride);
    } else {
      const PoolGeom geom{1, stride, grid};
      validate_against(geom, d.h, d.w);
      const SampleIndices indices =
          sample_grid_indices(RngStream(seed, 0, 0), d.h, d.w, geom);
      z = stochastic_downsample_with(t, indices);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("demo-downsample: ") + e.what());
  }

  try {
    write_pnm(tensor_to_image(z), out_path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("demo-downsample: ") + e.what());
  }
}

}  // namespace s3pool
