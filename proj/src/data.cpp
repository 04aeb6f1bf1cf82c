#include "s3pool/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "s3pool/common.hpp"

namespace s3pool {

namespace {

constexpr int64_t kCifarSide = 32;
constexpr int64_t kCifarPlane = kCifarSide * kCifarSide;
constexpr int64_t kCifarRecord = 1 + 3 * kCifarPlane;

}  // namespace

LabeledBatch read_cifar10_binary(const std::string& path, int64_t max_records) {
  require(max_records >= 0, "cifar: max_records must be >= 0");
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cifar: cannot open: " + path);
  const int64_t bytes = int64_t(is.tellg());
  if (bytes == 0 || bytes % kCifarRecord != 0) {
    throw std::runtime_error("cifar: truncated record in " + path);
  }
  int64_t n = bytes / kCifarRecord;
  if (max_records > 0 && max_records < n) n = max_records;

  is.seekg(0);
  LabeledBatch batch;
  batch.images = Tensor4({n, 3, kCifarSide, kCifarSide});
  batch.labels.resize(size_t(n));
  std::vector<unsigned char> rec(static_cast<size_t>(kCifarRecord));
  for (int64_t i = 0; i < n; ++i) {
    is.read(reinterpret_cast<char*>(rec.data()), kCifarRecord);
    if (is.gcount() != kCifarRecord) {
      throw std::runtime_error("cifar: truncated record in " + path);
    }
    if (rec[0] > 9) {
      throw std::runtime_error("cifar: label byte > 9 in " + path);
    }
    batch.labels[size_t(i)] = rec[0];
    double* dst = batch.images.data() + batch.images.plane_offset(i, 0);
    for (int64_t j = 0; j < 3 * kCifarPlane; ++j) {
      dst[j] = double(rec[size_t(1 + j)]) / 255.0;
    }
  }
  return batch;
}

namespace {

// 12x12 binary stencil for one shape class, per-class local edge statistics
// kept distinctive (bar/cross/box/diagonal families, thickness 2).
std::vector<uint8_t> shape_stencil(int64_t cls) {
  constexpr int64_t s = 12;
  std::vector<uint8_t> m(size_t(s * s), 0);
  auto set = [&](int64_t r, int64_t c) {
    if (r >= 0 && r < s && c >= 0 && c < s) m[size_t(r * s + c)] = 1;
  };
  auto fill = [&](int64_t r0, int64_t r1, int64_t c0, int64_t c1) {
    for (int64_t r = r0; r <= r1; ++r)
      for (int64_t c = c0; c <= c1; ++c) set(r, c);
  };
  switch (cls) {
    case 0:  // horizontal bar
      fill(5, 6, 1, 10);
      break;
    case 1:  // vertical bar
      fill(1, 10, 5, 6);
      break;
    case 2:  // cross
      fill(5, 6, 1, 10);
      fill(1, 10, 5, 6);
      break;
    case 3:  // square outline
      fill(2, 3, 2, 9);
      fill(8, 9, 2, 9);
      fill(2, 9, 2, 3);
      fill(2, 9, 8, 9);
      break;
    case 4:  // filled square
      fill(3, 8, 3, 8);
      break;
    case 5:  // diagonal
      for (int64_t r = 1; r <= 10; ++r) {
        set(r, r);
        set(r, r - 1);
      }
      break;
    case 6:  // anti-diagonal
      for (int64_t r = 1; r <= 10; ++r) {
        set(r, 11 - r);
        set(r, 12 - r);
      }
      break;
    case 7:  // T
      fill(1, 2, 1, 10);
      fill(3, 10, 5, 6);
      break;
    case 8:  // L
      fill(1, 10, 1, 2);
      fill(9, 10, 3, 10);
      break;
    case 9:  // X
      for (int64_t r = 1; r <= 10; ++r) {
        set(r, r);
        set(r, r - 1);
        set(r, 11 - r);
        set(r, 12 - r);
      }
      break;
    default:
      throw std::invalid_argument("synth: class out of range");
  }
  return m;
}

}  // namespace

LabeledBatch synth_translated_shapes(RngStream& rng, int64_t n,
                                     int64_t classes) {
  require(classes >= 2 && classes <= 10, "synth: classes must be in [2, 10]");
  require(n >= classes, "synth: need at least one sample per class");

  constexpr int64_t side = 32;
  constexpr int64_t stencil = 12;
  std::vector<std::vector<uint8_t>> stencils;
  for (int64_t c = 0; c < classes; ++c) stencils.push_back(shape_stencil(c));

  LabeledBatch batch;
  batch.images = Tensor4({n, 3, side, side});
  batch.labels.resize(size_t(n));
  std::vector<double> plane(size_t(side * side));
  for (int64_t i = 0; i < n; ++i) {
    const int64_t cls = i % classes;
    batch.labels[size_t(i)] = cls;
    const int64_t dy = int64_t(rng.uniform_below(side - stencil + 1));
    const int64_t dx = int64_t(rng.uniform_below(side - stencil + 1));
    const double intensity = 0.55 + 0.45 * rng.next_double();
    for (int64_t p = 0; p < side * side; ++p) {
      plane[size_t(p)] = 0.08 * rng.next_double();
    }
    const std::vector<uint8_t>& st = stencils[size_t(cls)];
    for (int64_t r = 0; r < stencil; ++r) {
      for (int64_t c = 0; c < stencil; ++c) {
        if (st[size_t(r * stencil + c)]) {
          double& px = plane[size_t((dy + r) * side + dx + c)];
          px = std::min(1.0, px + intensity);
        }
      }
    }
    for (int64_t ch = 0; ch < 3; ++ch) {
      double* dst = batch.images.data() + batch.images.plane_offset(i, ch);
      for (int64_t p = 0; p < side * side; ++p) dst[p] = plane[size_t(p)];
    }
  }
  return batch;
}

namespace {

// Reads one header token, skipping whitespace and # comments.
std::string pnm_token(std::istream& is) {
  std::string tok;
  int ch = is.get();
  while (ch != std::char_traits<char>::eof()) {
    if (ch == '#') {
      while (ch != std::char_traits<char>::eof() && ch != '\n') ch = is.get();
    } else if (std::isspace(ch)) {
      if (!tok.empty()) { is.unget(); return tok; }
    } else {
      tok.push_back(char(ch));
    }
    ch = is.get();
  }
  if (tok.empty()) throw std::runtime_error("pnm: truncated header");
  return tok;
}

int64_t pnm_int(std::istream& is) {
  const std::string tok = pnm_token(is);
  try {
    size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("pnm: bad header integer '" + tok + "'");
  }
}

}  // namespace

PnmImage read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("pnm: cannot open: " + path);
  const std::string magic = pnm_token(is);
  if (magic != "P5" && magic != "P6") {
    throw std::runtime_error("pnm: unsupported magic '" + magic + "'");
  }
  const int64_t w = pnm_int(is);
  const int64_t h = pnm_int(is);
  const int64_t maxval = pnm_int(is);
  if (w < 1 || h < 1) throw std::runtime_error("pnm: non-positive dimensions");
  if (maxval != 255) throw std::runtime_error("pnm: maxval must be 255");
  is.get();  // single whitespace byte before the raster

  const int64_t channels = magic == "P5" ? 1 : 3;
  std::vector<uint8_t> samples(size_t(h * w * channels));
  is.read(reinterpret_cast<char*>(samples.data()),
          std::streamsize(samples.size()));
  if (is.gcount() != std::streamsize(samples.size())) {
    throw std::runtime_error("pnm: truncated raster");
  }
  if (channels == 1) return ImageGray{h, w, std::move(samples)};
  return ImageRGB{h, w, std::move(samples)};
}

void write_pnm(const PnmImage& image, const std::string& path) {
  const bool rgb = std::holds_alternative<ImageRGB>(image);
  const int64_t h = rgb ? std::get<ImageRGB>(image).h : std::get<ImageGray>(image).h;
  const int64_t w = rgb ? std::get<ImageRGB>(image).w : std::get<ImageGray>(image).w;
  const std::vector<uint8_t>& samples =
      rgb ? std::get<ImageRGB>(image).samples : std::get<ImageGray>(image).samples;
  require(h >= 1 && w >= 1, "pnm: non-positive dimensions");
  require(int64_t(samples.size()) == h * w * (rgb ? 3 : 1),
          "pnm: sample count does not match dimensions");

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("pnm: cannot open for write: " + path);
  os << (rgb ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(samples.data()),
           std::streamsize(samples.size()));
  os.flush();
  if (!os.good()) throw std::runtime_error("pnm: write failed: " + path);
}

Tensor4 image_to_tensor(const PnmImage& image) {
  const bool rgb = std::holds_alternative<ImageRGB>(image);
  const int64_t h = rgb ? std::get<ImageRGB>(image).h : std::get<ImageGray>(image).h;
  const int64_t w = rgb ? std::get<ImageRGB>(image).w : std::get<ImageGray>(image).w;
  const std::vector<uint8_t>& samples =
      rgb ? std::get<ImageRGB>(image).samples : std::get<ImageGray>(image).samples;
  const int64_t channels = rgb ? 3 : 1;
  require(int64_t(samples.size()) == h * w * channels,
          "pnm: sample count does not match dimensions");

  Tensor4 t({1, channels, h, w});
  for (int64_t c = 0; c < channels; ++c) {
    double* dst = t.data() + t.plane_offset(0, c);
    for (int64_t p = 0; p < h * w; ++p) {
      dst[p] = double(samples[size_t(p * channels + c)]) / 255.0;
    }
  }
  return t;
}

PnmImage tensor_to_image(const Tensor4& t, int64_t* clamp_warnings) {
  const Dims4 d = t.dims();
  require(d.n == 1 && (d.c == 1 || d.c == 3),
          "tensor_to_image: tensor must be (1, 1|3, h, w)");
  int64_t warnings = 0;
  std::vector<uint8_t> samples(size_t(d.h * d.w * d.c));
  for (int64_t c = 0; c < d.c; ++c) {
    const double* src = t.data() + t.plane_offset(0, c);
    for (int64_t p = 0; p < d.h * d.w; ++p) {
      double v = src[p];
      if (v < 0.0 || v > 1.0) {
        ++warnings;
        v = v < 0.0 ? 0.0 : 1.0;
      }
      samples[size_t(p * d.c + c)] = uint8_t(std::floor(v * 255.0 + 0.5));
    }
  }
  if (clamp_warnings) *clamp_warnings = warnings;
  if (d.c == 1) return ImageGray{d.h, d.w, std::move(samples)};
  return ImageRGB{d.h, d.w, std::move(samples)};
}

}  // namespace s3pool
