#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "s3pool/rng.hpp"
#include "s3pool/tensor.hpp"

namespace s3pool {

// Images are (n, 3, h, w) scaled to [0, 1]; labels[i] in [0, K-1].
struct LabeledBatch {
  Tensor4 images;
  std::vector<int64_t> labels;
};

// 8-bit images, maxval 255. Gray samples are row-major h*w; RGB samples are
// row-major interleaved h*w*3.
struct ImageGray {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> samples;
};

struct ImageRGB {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> samples;
};

using PnmImage = std::variant<ImageGray, ImageRGB>;

// Standard binary layout: 3073-byte records, 1 label byte then three
// 1024-byte channel planes (32x32, row-major). Pixels are scaled by 1/255.
// max_records 0 means all. Throws on missing file, trailing partial record,
// or label byte > 9.
LabeledBatch read_cifar10_binary(const std::string& path,
                                 int64_t max_records = 0);

// Deterministic synthetic task: `classes` (2..10) shape stencils rendered at
// random translations on a 32x32 canvas with mild background noise,
// class-balanced via round-robin labels. Pixels stay in [0, 1].
LabeledBatch synth_translated_shapes(RngStream& rng, int64_t n,
                                     int64_t classes);

// P5 (gray) / P6 (RGB) only, binary payload, maxval 255. Header comments
// (# to end of line) are accepted. Anything else is "unsupported".
PnmImage read_pnm(const std::string& path);
void write_pnm(const PnmImage& image, const std::string& path);

// (1, 1|3, h, w) tensor in [0, 1] from 8-bit samples scaled by 1/255.
Tensor4 image_to_tensor(const PnmImage& image);

// Back to 8-bit by rounding half-up after scaling by 255. Values outside
// [0, 1] are clamped and counted in *clamp_warnings (when non-null).
// The tensor must be (1, 1|3, h, w).
PnmImage tensor_to_image(const Tensor4& t, int64_t* clamp_warnings = nullptr);

}  // namespace s3pool
