#include "s3pool/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "s3pool/common.hpp"
#include "s3pool/rng.hpp"

namespace s3pool {

std::string to_string(PoolVariant v) {
  switch (v) {
    case PoolVariant::Max: return "max";
    case PoolVariant::Avg: return "avg";
    case PoolVariant::Zeiler: return "zeiler";
    case PoolVariant::S3: return "s3pool";
  }
  throw std::invalid_argument("unknown pool variant");
}

LayerSpec LayerSpec::conv(int64_t c_out, int64_t d) {
  LayerSpec s;
  s.kind = Kind::Conv;
  s.channels = c_out;
  s.filter = d;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = Kind::Relu;
  return s;
}

LayerSpec LayerSpec::batchnorm() {
  LayerSpec s;
  s.kind = Kind::BatchNorm;
  return s;
}

LayerSpec LayerSpec::pool(PoolVariant v, int64_t k, int64_t s_, int64_t g) {
  LayerSpec s;
  s.kind = Kind::Pool;
  s.variant = v;
  s.geom = PoolGeom{k, s_, g};
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.kind = Kind::Dropout;
  s.rate = rate;
  return s;
}

LayerSpec LayerSpec::residual(int64_t c, int64_t d) {
  LayerSpec s;
  s.kind = Kind::Residual;
  s.channels = c;
  s.filter = d;
  return s;
}

LayerSpec LayerSpec::global_avg_pool() {
  LayerSpec s;
  s.kind = Kind::GlobalAvgPool;
  return s;
}

LayerSpec LayerSpec::softmax_ce_marker() {
  LayerSpec s;
  s.kind = Kind::SoftmaxCe;
  return s;
}

namespace {

int64_t param_slots(const LayerSpec& s) {
  switch (s.kind) {
    case LayerSpec::Kind::Conv: return 2;
    case LayerSpec::Kind::BatchNorm: return 2;
    case LayerSpec::Kind::Residual: return 8;
    default: return 0;
  }
}

int64_t running_slots(const LayerSpec& s) {
  switch (s.kind) {
    case LayerSpec::Kind::BatchNorm: return 2;
    case LayerSpec::Kind::Residual: return 4;
    default: return 0;
  }
}

// Kernel entries uniform in (-b, b) with b = sqrt(3 / fan_in), so the
// entry variance is 1 / fan_in.
Tensor4 init_kernel(const Dims4& dims, RngStream& rng) {
  Tensor4 k(dims);
  const double fan_in = double(dims.c * dims.h * dims.w);
  const double bound = std::sqrt(3.0 / fan_in);
  double* p = k.data();
  const int64_t cnt = dims.count();
  for (int64_t i = 0; i < cnt; ++i) {
    p[i] = (2.0 * rng.next_double() - 1.0) * bound;
  }
  return k;
}

void check_odd_filter(const LayerSpec& s) {
  require(s.filter >= 1 && s.filter % 2 == 1,
          "model: conv filter size must be odd and >= 1 to preserve dims");
  require(s.channels >= 1, "model: conv channels must be >= 1");
}

}  // namespace

Model build_model(const std::vector<LayerSpec>& arch, const Dims4& input_dims,
                  uint64_t seed) {
  require(!arch.empty(), "model: arch must not be empty");
  require(input_dims.c >= 1 && input_dims.h >= 1 && input_dims.w >= 1,
          "model: input dims must be positive");

  Model m;
  m.arch = arch;
  m.input_dims = Dims4{1, input_dims.c, input_dims.h, input_dims.w};

  Dims4 cur = m.input_dims;
  bool after_gap = false;
  for (size_t li = 0; li < arch.size(); ++li) {
    const LayerSpec& s = arch[li];
    const bool last = li + 1 == arch.size();
    require(s.kind == LayerSpec::Kind::SoftmaxCe || !last,
            "model: arch must end with softmax_ce");
    require(!after_gap || s.kind == LayerSpec::Kind::SoftmaxCe,
            "model: only softmax_ce may follow global_avg_pool");
    RngStream rng(seed, uint64_t(li), 0);
    switch (s.kind) {
      case LayerSpec::Kind::Conv: {
        check_odd_filter(s);
        m.params.push_back(
            init_kernel({s.channels, cur.c, s.filter, s.filter}, rng));
        m.params.emplace_back(Dims4{1, s.channels, 1, 1});
        cur.c = s.channels;
        break;
      }
      case LayerSpec::Kind::Relu:
        break;
      case LayerSpec::Kind::BatchNorm: {
        m.params.push_back(Tensor4::full({1, cur.c, 1, 1}, 1.0));
        m.params.emplace_back(Dims4{1, cur.c, 1, 1});
        m.running.emplace_back(Dims4{1, cur.c, 1, 1});
        m.running.push_back(Tensor4::full({1, cur.c, 1, 1}, 1.0));
        break;
      }
      case LayerSpec::Kind::Pool: {
        validate(s.geom);
        if (s.variant == PoolVariant::S3) {
          validate_against(s.geom, cur.h, cur.w);
        } else {
          require(cur.h % s.geom.stride == 0 && cur.w % s.geom.stride == 0,
                  "model: pool stride must divide feature dims");
        }
        cur.h /= s.geom.stride;
        cur.w /= s.geom.stride;
        break;
      }
      case LayerSpec::Kind::Dropout:
        require(s.rate >= 0.0 && s.rate < 1.0,
                "model: dropout rate must be in [0, 1)");
        break;
      case LayerSpec::Kind::Residual: {
        check_odd_filter(s);
        require(s.channels == cur.c,
                "model: residual block must preserve channels");
        const Dims4 kd{s.channels, cur.c, s.filter, s.filter};
        const Dims4 sd{1, s.channels, 1, 1};
        for (int rep = 0; rep < 2; ++rep) {
          m.params.push_back(init_kernel(kd, rng));
          m.params.emplace_back(sd);
          m.params.push_back(Tensor4::full(sd, 1.0));
          m.params.emplace_back(sd);
          m.running.emplace_back(sd);
          m.running.push_back(Tensor4::full(sd, 1.0));
        }
        break;
      }
      case LayerSpec::Kind::GlobalAvgPool:
        after_gap = true;
        cur.h = 1;
        cur.w = 1;
        break;
      case LayerSpec::Kind::SoftmaxCe:
        require(last, "model: softmax_ce must be the last layer");
        require(cur.h == 1 && cur.w == 1,
                "model: softmax_ce input must be (n, K, 1, 1)");
        require(cur.c >= 2, "model: need at least two classes");
        m.num_classes = cur.c;
        break;
    }
  }
  require(m.num_classes >= 2, "model: arch must end with softmax_ce");

  m.acc_grad.reserve(m.params.size());
  m.acc_delta.reserve(m.params.size());
  for (const Tensor4& p : m.params) {
    m.acc_grad.emplace_back(p.dims());
    m.acc_delta.emplace_back(p.dims());
  }
  return m;
}

ForwardResult forward(Model& model, const Tensor4& x, PoolMode mode,
                      uint64_t seed, uint64_t step) {
  const Dims4 in = x.dims();
  require(in.c == model.input_dims.c && in.h == model.input_dims.h &&
              in.w == model.input_dims.w,
          "forward: input dims do not match the model input template");
  require(in.n >= 1, "forward: batch must be non-empty");

  ForwardResult res;
  res.tapes.resize(model.arch.size());
  Tensor4 cur = x;
  size_t pi = 0;
  size_t ri = 0;
  for (size_t li = 0; li < model.arch.size(); ++li) {
    const LayerSpec& s = model.arch[li];
    LayerTape& t = res.tapes[li];
    switch (s.kind) {
      case LayerSpec::Kind::Conv: {
        const int64_t pad = (s.filter - 1) / 2;
        t.input = cur;
        cur = conv2d_forward(cur, model.params[pi], model.params[pi + 1], pad);
        pi += 2;
        break;
      }
      case LayerSpec::Kind::Relu:
        t.input = cur;
        cur = relu_forward(cur);
        break;
      case LayerSpec::Kind::BatchNorm: {
        auto [y, bt] = batchnorm_forward(
            cur, model.params[pi], model.params[pi + 1], model.running[ri],
            model.running[ri + 1], mode, kBatchNormMomentum, kBatchNormEps);
        cur = std::move(y);
        t.bn = std::move(bt);
        pi += 2;
        ri += 2;
        break;
      }
      case LayerSpec::Kind::Pool: {
        const PoolGeom& geom = s.geom;
        switch (s.variant) {
          case PoolVariant::Max: {
            auto [z, pt] = max_pool_standard(cur, geom.window, geom.stride);
            cur = std::move(z);
            t.pool = std::move(pt);
            break;
          }
          case PoolVariant::Avg: {
            t.pool.input_dims = cur.dims();
            t.pool.window = geom.window;
            t.pool.stride = geom.stride;
            cur = avg_pool(cur, geom.window, geom.stride);
            break;
          }
          case PoolVariant::Zeiler: {
            RngStream rng(seed, uint64_t(li), step);
            auto [z, pt] =
                zeiler_stochastic_pool(cur, geom.window, geom.stride, rng, mode);
            cur = std::move(z);
            if (pt) t.pool = std::move(*pt);
            break;
          }
          case PoolVariant::S3: {
            auto [o, pt] = max_pool_stride1(cur, geom.window);
            if (mode == PoolMode::Infer) {
              cur = avg_pool(o, geom.stride, geom.stride);
            } else {
              const Dims4 od = o.dims();
              const int64_t oh = od.h / geom.stride;
              const int64_t ow = od.w / geom.stride;
              RngStream rng(seed, uint64_t(li), step);
              Tensor4 z({od.n, od.c, oh, ow});
              t.samples.resize(size_t(od.n));
              for (int64_t n = 0; n < od.n; ++n) {
                SampleIndices idx = sample_grid_indices(
                    rng.derive(uint64_t(n)), od.h, od.w, geom);
                for (int64_t c = 0; c < od.c; ++c) {
                  const double* src = o.data() + o.plane_offset(n, c);
                  for (int64_t i = 0; i < oh; ++i) {
                    const int64_t row = idx.rows[size_t(i)] - 1;
                    for (int64_t j = 0; j < ow; ++j) {
                      z.at(n, c, i, j) = src[row * od.w + idx.cols[size_t(j)] - 1];
                    }
                  }
                }
                t.samples[size_t(n)] = std::move(idx);
              }
              t.pool = std::move(pt);
              t.pool.stride = geom.stride;
              cur = std::move(z);
            }
            break;
          }
        }
        break;
      }
      case LayerSpec::Kind::Dropout: {
        if (mode == PoolMode::Train) {
          RngStream rng(seed, uint64_t(li), step);
          auto [y, mask] = dropout_forward(cur, s.rate, rng);
          cur = std::move(y);
          t.mask = std::move(mask);
        }
        break;
      }
      case LayerSpec::Kind::Residual: {
        const int64_t pad = (s.filter - 1) / 2;
        t.input = cur;
        t.r_conv1 =
            conv2d_forward(cur, model.params[pi], model.params[pi + 1], pad);
        auto [b1, tb1] = batchnorm_forward(
            t.r_conv1, model.params[pi + 2], model.params[pi + 3],
            model.running[ri], model.running[ri + 1], mode, kBatchNormMomentum,
            kBatchNormEps);
        t.r_bn1out = std::move(b1);
        t.r_bn1 = std::move(tb1);
        t.r_relu1 = relu_forward(t.r_bn1out);
        t.r_conv2 = conv2d_forward(t.r_relu1, model.params[pi + 4],
                                   model.params[pi + 5], pad);
        auto [b2, tb2] = batchnorm_forward(
            t.r_conv2, model.params[pi + 6], model.params[pi + 7],
            model.running[ri + 2], model.running[ri + 3], mode,
            kBatchNormMomentum, kBatchNormEps);
        t.r_bn2 = std::move(tb2);
        t.r_sum = add(b2, t.input);
        cur = relu_forward(t.r_sum);
        pi += 8;
        ri += 4;
        break;
      }
      case LayerSpec::Kind::GlobalAvgPool:
        t.pool.input_dims = cur.dims();
        cur = global_avg_pool_forward(cur);
        break;
      case LayerSpec::Kind::SoftmaxCe:
        break;
    }
  }
  res.logits = std::move(cur);
  return res;
}

std::vector<Tensor4> backward(const Model& model,
                              const std::vector<LayerTape>& tapes,
                              const Tensor4& loss_grad) {
  require(tapes.size() == model.arch.size(),
          "backward: tape count must match arch");

  std::vector<size_t> poff(model.arch.size());
  std::vector<size_t> roff(model.arch.size());
  size_t pi = 0;
  size_t ri = 0;
  for (size_t li = 0; li < model.arch.size(); ++li) {
    poff[li] = pi;
    roff[li] = ri;
    pi += size_t(param_slots(model.arch[li]));
    ri += size_t(running_slots(model.arch[li]));
  }

  std::vector<Tensor4> grads;
  grads.reserve(model.params.size());
  for (const Tensor4& p : model.params) grads.emplace_back(p.dims());

  Tensor4 cur = loss_grad;
  for (size_t li = model.arch.size(); li-- > 0;) {
    const LayerSpec& s = model.arch[li];
    const LayerTape& t = tapes[li];
    const size_t p = poff[li];
    switch (s.kind) {
      case LayerSpec::Kind::Conv: {
        const int64_t pad = (s.filter - 1) / 2;
        ConvGrads g = conv2d_backward(cur, t.input, model.params[p], pad);
        grads[p] = std::move(g.kernel);
        grads[p + 1] = std::move(g.bias);
        cur = std::move(g.x);
        break;
      }
      case LayerSpec::Kind::Relu:
        cur = relu_backward(cur, t.input);
        break;
      case LayerSpec::Kind::BatchNorm: {
        BatchNormGrads g = batchnorm_backward(cur, t.bn, model.params[p]);
        grads[p] = std::move(g.gamma);
        grads[p + 1] = std::move(g.beta);
        cur = std::move(g.x);
        break;
      }
      case LayerSpec::Kind::Pool: {
        switch (s.variant) {
          case PoolVariant::Max:
            cur = max_pool_standard_backward(cur, t.pool);
            break;
          case PoolVariant::Avg:
            cur = avg_pool_backward(cur, t.pool.input_dims, t.pool.window,
                                    t.pool.stride);
            break;
          case PoolVariant::Zeiler:
            cur = zeiler_stochastic_pool_backward(cur, t.pool);
            break;
          case PoolVariant::S3: {
            require(t.samples.size() == size_t(cur.dims().n),
                    "backward: s3pool tape is missing sampled indices");
            const Dims4 xd = t.pool.input_dims;
            const Dims4 zd = cur.dims();
            Tensor4 gx(xd);
            for (int64_t n = 0; n < zd.n; ++n) {
              const SampleIndices& idx = t.samples[size_t(n)];
              for (int64_t c = 0; c < zd.c; ++c) {
                const size_t plane = size_t((n * xd.c + c) * xd.h * xd.w);
                double* dst = gx.data() + gx.plane_offset(n, c);
                const double* gz = cur.data() + cur.plane_offset(n, c);
                for (int64_t i = 0; i < zd.h; ++i) {
                  const int64_t row = idx.rows[size_t(i)] - 1;
                  for (int64_t j = 0; j < zd.w; ++j) {
                    const int64_t opos = row * xd.w + idx.cols[size_t(j)] - 1;
                    dst[t.pool.argmax[plane + size_t(opos)]] +=
                        gz[i * zd.w + j];
                  }
                }
              }
            }
            cur = std::move(gx);
            break;
          }
        }
        break;
      }
      case LayerSpec::Kind::Dropout:
        if (t.mask.size() > 0) cur = dropout_backward(cur, t.mask);
        break;
      case LayerSpec::Kind::Residual: {
        const int64_t pad = (s.filter - 1) / 2;
        Tensor4 dsum = relu_backward(cur, t.r_sum);
        BatchNormGrads gb2 = batchnorm_backward(dsum, t.r_bn2, model.params[p + 6]);
        grads[p + 6] = std::move(gb2.gamma);
        grads[p + 7] = std::move(gb2.beta);
        ConvGrads gc2 = conv2d_backward(gb2.x, t.r_relu1, model.params[p + 4], pad);
        grads[p + 4] = std::move(gc2.kernel);
        grads[p + 5] = std::move(gc2.bias);
        Tensor4 dr1 = relu_backward(gc2.x, t.r_bn1out);
        BatchNormGrads gb1 = batchnorm_backward(dr1, t.r_bn1, model.params[p + 2]);
        grads[p + 2] = std::move(gb1.gamma);
        grads[p + 3] = std::move(gb1.beta);
        ConvGrads gc1 = conv2d_backward(gb1.x, t.input, model.params[p], pad);
        grads[p] = std::move(gc1.kernel);
        grads[p + 1] = std::move(gc1.bias);
        cur = add(gc1.x, dsum);
        break;
      }
      case LayerSpec::Kind::GlobalAvgPool:
        cur = global_avg_pool_backward(cur, t.pool.input_dims);
        break;
      case LayerSpec::Kind::SoftmaxCe:
        break;
    }
  }
  return grads;
}

namespace {

constexpr char kMagic[8] = {'S', '3', 'P', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& os, uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(char((v >> (8 * i)) & 0xff));
}

void put_i64(std::ostream& os, int64_t v) { put_u64(os, uint64_t(v)); }

void put_f64(std::ostream& os, double v) {
  put_u64(os, std::bit_cast<uint64_t>(v));
}

uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const int ch = is.get();
    if (ch == std::char_traits<char>::eof()) {
      throw std::runtime_error("checkpoint: truncated file");
    }
    v |= uint32_t(ch & 0xff) << (8 * i);
  }
  return v;
}

uint64_t get_u64(std::istream& is) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int ch = is.get();
    if (ch == std::char_traits<char>::eof()) {
      throw std::runtime_error("checkpoint: truncated file");
    }
    v |= uint64_t(ch & 0xff) << (8 * i);
  }
  return v;
}

int64_t get_i64(std::istream& is) { return int64_t(get_u64(is)); }

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

void put_tensor(std::ostream& os, const Tensor4& t) {
  put_i64(os, t.dims().n);
  put_i64(os, t.dims().c);
  put_i64(os, t.dims().h);
  put_i64(os, t.dims().w);
  const double* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i) put_f64(os, p[i]);
}

void get_tensor_into(std::istream& is, Tensor4& t) {
  const Dims4 d{get_i64(is), get_i64(is), get_i64(is), get_i64(is)};
  if (!(d == t.dims())) {
    throw std::runtime_error("checkpoint: tensor shape does not match arch");
  }
  double* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i) p[i] = get_f64(is);
}

void put_section(std::ostream& os, const std::vector<Tensor4>& ts) {
  put_u64(os, ts.size());
  for (const Tensor4& t : ts) put_tensor(os, t);
}

void get_section_into(std::istream& is, std::vector<Tensor4>& ts,
                      const char* name) {
  if (get_u64(is) != ts.size()) {
    throw std::runtime_error(std::string("checkpoint: ") + name +
                             " tensor count does not match arch");
  }
  for (Tensor4& t : ts) get_tensor_into(is, t);
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, 1);  // version
  put_u32(os, uint32_t(model.arch.size()));
  for (const LayerSpec& s : model.arch) {
    put_u32(os, uint32_t(s.kind));
    put_u32(os, uint32_t(s.variant));
    put_i64(os, s.channels);
    put_i64(os, s.filter);
    put_i64(os, s.geom.window);
    put_i64(os, s.geom.stride);
    put_i64(os, s.geom.grid);
    put_f64(os, s.rate);
  }
  put_i64(os, model.input_dims.n);
  put_i64(os, model.input_dims.c);
  put_i64(os, model.input_dims.h);
  put_i64(os, model.input_dims.w);
  put_i64(os, model.num_classes);
  put_u64(os, model.step);
  put_section(os, model.params);
  put_section(os, model.acc_grad);
  put_section(os, model.acc_delta);
  put_section(os, model.running);
  os.flush();
  if (!os.good()) throw std::runtime_error("checkpoint: write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (is.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  if (get_u32(is) != 1) {
    throw std::runtime_error("checkpoint: unsupported version");
  }
  const uint32_t layer_count = get_u32(is);
  std::vector<LayerSpec> arch;
  arch.reserve(layer_count);
  for (uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec s;
    const uint32_t kind = get_u32(is);
    const uint32_t variant = get_u32(is);
    if (kind > uint32_t(LayerSpec::Kind::SoftmaxCe) ||
        variant > uint32_t(PoolVariant::S3)) {
      throw std::runtime_error("checkpoint: unknown layer kind or variant");
    }
    s.kind = LayerSpec::Kind(kind);
    s.variant = PoolVariant(variant);
    s.channels = get_i64(is);
    s.filter = get_i64(is);
    s.geom.window = get_i64(is);
    s.geom.stride = get_i64(is);
    s.geom.grid = get_i64(is);
    s.rate = get_f64(is);
    arch.push_back(s);
  }
  const Dims4 input{get_i64(is), get_i64(is), get_i64(is), get_i64(is)};
  const int64_t num_classes = get_i64(is);
  const uint64_t step = get_u64(is);

  Model m = build_model(arch, input, 0);
  if (m.num_classes != num_classes) {
    throw std::runtime_error("checkpoint: class count does not match arch");
  }
  m.step = step;
  get_section_into(is, m.params, "parameter");
  get_section_into(is, m.acc_grad, "acc_grad");
  get_section_into(is, m.acc_delta, "acc_delta");
  get_section_into(is, m.running, "running");
  return m;
}

}  // namespace s3pool
