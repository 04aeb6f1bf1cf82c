#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "s3pool/data.hpp"
#include "s3pool/layers.hpp"
#include "s3pool/model.hpp"
#include "s3pool/rng.hpp"
#include "test_support.hpp"

using namespace s3pool;

#ifndef TEST_DATA_DIR
#define TEST_DATA_DIR "tests/data"
#endif

TEST_CASE("cifar reader: byte-level golden fixture") {
  // The fixture holds two records with arithmetic byte patterns:
  // record 0 has label 3 and payload byte j = (j*7 + 11) % 256,
  // record 1 has label 9 and payload byte j = (j*13 + 5) % 256.
  const std::string path = std::string(TEST_DATA_DIR) + "/cifar_golden.bin";
  const LabeledBatch batch = read_cifar10_binary(path);
  REQUIRE(batch.images.dims() == Dims4{2, 3, 32, 32});
  REQUIRE(batch.labels.size() == 2);
  CHECK(batch.labels[0] == 3);
  CHECK(batch.labels[1] == 9);
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t y = 0; y < 32; ++y) {
      for (int64_t x = 0; x < 32; ++x) {
        const int64_t j = c * 1024 + y * 32 + x;
        CHECK(batch.images.at(0, c, y, x) ==
              double((j * 7 + 11) % 256) / 255.0);
        CHECK(batch.images.at(1, c, y, x) ==
              double((j * 13 + 5) % 256) / 255.0);
      }
    }
  }

  const LabeledBatch one = read_cifar10_binary(path, 1);
  CHECK(one.images.dims().n == 1);
  CHECK(one.labels == std::vector<int64_t>{3});
}

TEST_CASE("cifar reader: malformed inputs") {
  CHECK_THROWS_AS(read_cifar10_binary("no_such_file.bin"), std::runtime_error);

  {
    std::ofstream os("cifar_short.bin", std::ios::binary);
    std::vector<char> bytes(3072, 1);  // one byte short of a record
    os.write(bytes.data(), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(read_cifar10_binary("cifar_short.bin"), std::runtime_error);
  std::remove("cifar_short.bin");

  {
    std::ofstream os("cifar_badlabel.bin", std::ios::binary);
    std::vector<char> bytes(3073, 0);
    bytes[0] = 10;
    os.write(bytes.data(), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(read_cifar10_binary("cifar_badlabel.bin"),
                  std::runtime_error);
  std::remove("cifar_badlabel.bin");
}

TEST_CASE("synthetic shapes: determinism, balance, range") {
  RngStream rng(60, 0, 0);
  const LabeledBatch a = synth_translated_shapes(rng, 50, 10);
  RngStream rng2(60, 0, 0);
  const LabeledBatch b = synth_translated_shapes(rng2, 50, 10);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);

  REQUIRE(a.images.dims() == Dims4{50, 3, 32, 32});
  std::vector<int64_t> counts(10, 0);
  for (int64_t label : a.labels) {
    REQUIRE(label >= 0);
    REQUIRE(label < 10);
    ++counts[size_t(label)];
  }
  for (int64_t c : counts) CHECK(c == 5);
  for (int64_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images.data()[i] >= 0.0);
    CHECK(a.images.data()[i] <= 1.0);
  }

  // n = K yields exactly one per class.
  RngStream rng3(61, 0, 0);
  const LabeledBatch one = synth_translated_shapes(rng3, 10, 10);
  std::set<int64_t> seen(one.labels.begin(), one.labels.end());
  CHECK(seen.size() == 10);

  RngStream rng4(62, 0, 0);
  CHECK_THROWS_AS(synth_translated_shapes(rng4, 5, 10), std::invalid_argument);
  CHECK_THROWS_AS(synth_translated_shapes(rng4, 20, 11), std::invalid_argument);
}

TEST_CASE("synthetic shapes: a linear 3x3-conv classifier learns the task") {
  RngStream rng(63, 0, 0);
  const LabeledBatch data = synth_translated_shapes(rng, 1000, 10);

  // 3x3 feature bank plus a linear head: the relu is required because the
  // global average of a purely linear conv reduces to total image mass,
  // which the intensity jitter deliberately confounds.
  const std::vector<LayerSpec> arch = {
      LayerSpec::conv(16, 3),
      LayerSpec::batchnorm(),
      LayerSpec::relu(),
      LayerSpec::conv(10, 1),
      LayerSpec::global_avg_pool(),
      LayerSpec::softmax_ce_marker(),
  };
  Model m = build_model(arch, {1, 3, 32, 32}, 4);

  const int64_t batch = 50;
  const int64_t batches = 1000 / batch;
  uint64_t step = 0;
  for (int64_t epoch = 0; epoch < 30; ++epoch) {
    for (int64_t bi = 0; bi < batches; ++bi) {
      Tensor4 x({batch, 3, 32, 32});
      std::vector<int64_t> labels(static_cast<size_t>(batch));
      for (int64_t i = 0; i < batch; ++i) {
        const int64_t src = bi * batch + i;
        labels[size_t(i)] = data.labels[size_t(src)];
        for (int64_t c = 0; c < 3; ++c) {
          const double* from = data.images.data() + data.images.plane_offset(src, c);
          double* to = x.data() + x.plane_offset(i, c);
          for (int64_t p = 0; p < 1024; ++p) to[p] = from[p];
        }
      }
      const ForwardResult r = forward(m, x, PoolMode::Train, 3, step);
      const auto [loss, lgrad] = softmax_ce(r.logits, labels);
      adadelta_step(m.params, backward(m, r.tapes, lgrad), m.acc_grad,
                    m.acc_delta, 1.0, {});
      ++step;
    }
  }

  int64_t wrong = 0;
  const ForwardResult r = forward(m, data.images, PoolMode::Infer, 0, 0);
  for (int64_t i = 0; i < 1000; ++i) {
    int64_t best = 0;
    for (int64_t c = 1; c < 10; ++c) {
      if (r.logits.at(i, c, 0, 0) > r.logits.at(i, best, 0, 0)) best = c;
    }
    if (best != data.labels[size_t(i)]) ++wrong;
  }
  CHECK(double(wrong) / 10.0 < 20.0);  // error percent on the 1k fixture
}

TEST_CASE("pnm: gray round-trip and header parsing") {
  ImageGray img;
  img.h = 2;
  img.w = 2;
  img.samples = {0, 85, 170, 255};
  write_pnm(img, "round_gray.pgm");
  const PnmImage back = read_pnm("round_gray.pgm");
  REQUIRE(std::holds_alternative<ImageGray>(back));
  const ImageGray& g = std::get<ImageGray>(back);
  CHECK(g.h == 2);
  CHECK(g.w == 2);
  CHECK(g.samples == img.samples);
  std::remove("round_gray.pgm");

  // Hand-written header with comments.
  {
    std::ofstream os("commented.pgm", std::ios::binary);
    os << "P5 # magic\n# a comment line\n2 1\n# another\n255\n";
    os.put(char(7));
    os.put(char(200));
  }
  const PnmImage c = read_pnm("commented.pgm");
  const ImageGray& cg = std::get<ImageGray>(c);
  CHECK(cg.w == 2);
  CHECK(cg.h == 1);
  CHECK(cg.samples == std::vector<uint8_t>{7, 200});
  std::remove("commented.pgm");
}

TEST_CASE("pnm: rgb round-trip") {
  RngStream rng(64, 0, 0);
  ImageRGB img;
  img.h = 3;
  img.w = 5;
  for (int64_t i = 0; i < 45; ++i) {
    img.samples.push_back(uint8_t(rng.uniform_below(256)));
  }
  write_pnm(img, "round_rgb.ppm");
  const PnmImage back = read_pnm("round_rgb.ppm");
  REQUIRE(std::holds_alternative<ImageRGB>(back));
  CHECK(std::get<ImageRGB>(back).samples == img.samples);
  std::remove("round_rgb.ppm");
}

TEST_CASE("pnm: rejects unsupported inputs") {
  CHECK_THROWS_AS(read_pnm("missing.pgm"), std::runtime_error);

  {
    std::ofstream os("ascii.pnm", std::ios::binary);
    os << "P3\n2 2\n255\n0 0 0 1 1 1 2 2 2 3 3 3\n";
  }
  CHECK_THROWS_WITH_AS(read_pnm("ascii.pnm"),
                       doctest::Contains("unsupported"), std::runtime_error);
  std::remove("ascii.pnm");

  {
    std::ofstream os("deep.pgm", std::ios::binary);
    os << "P5\n2 2\n65535\n";
    for (int i = 0; i < 8; ++i) os.put(char(0));
  }
  CHECK_THROWS_AS(read_pnm("deep.pgm"), std::runtime_error);
  std::remove("deep.pgm");

  {
    std::ofstream os("short.pgm", std::ios::binary);
    os << "P5\n4 4\n255\n";
    os.put(char(1));  // raster far too short
  }
  CHECK_THROWS_AS(read_pnm("short.pgm"), std::runtime_error);
  std::remove("short.pgm");
}

TEST_CASE("image/tensor conversion") {
  ImageGray img;
  img.h = 1;
  img.w = 256;
  for (int i = 0; i < 256; ++i) img.samples.push_back(uint8_t(i));

  const Tensor4 t = image_to_tensor(PnmImage{img});
  REQUIRE(t.dims() == Dims4{1, 1, 1, 256});
  CHECK(t.at(0, 0, 0, 0) == 0.0);
  CHECK(t.at(0, 0, 0, 255) == 1.0);

  // Round-trip across the full 8-bit range is exact.
  int64_t warnings = -1;
  const PnmImage back = tensor_to_image(t, &warnings);
  CHECK(warnings == 0);
  CHECK(std::get<ImageGray>(back).samples == img.samples);

  // Out-of-range values clamp and are counted.
  Tensor4 bad({1, 1, 1, 4});
  bad.data()[0] = 1.2;
  bad.data()[1] = -0.1;
  bad.data()[2] = 0.5;
  bad.data()[3] = 1.0;
  const PnmImage clamped = tensor_to_image(bad, &warnings);
  CHECK(warnings == 2);
  const ImageGray& cg = std::get<ImageGray>(clamped);
  CHECK(cg.samples[0] == 255);
  CHECK(cg.samples[1] == 0);
  CHECK(cg.samples[2] == 128);  // 127.5 rounds half-up
  CHECK(cg.samples[3] == 255);

  // RGB tensors come back interleaved.
  RngStream rng(65, 0, 0);
  const Tensor4 rgb = test::random_tensor({1, 3, 4, 4}, rng);
  const PnmImage rgb_img = tensor_to_image(rgb, nullptr);
  const Tensor4 again = image_to_tensor(rgb_img);
  CHECK(test::max_abs_diff(rgb, again) <= 1.0 / 510.0 + 1e-12);

  Tensor4 bad_dims({2, 1, 2, 2});
  CHECK_THROWS_AS(tensor_to_image(bad_dims, nullptr), std::invalid_argument);
}
