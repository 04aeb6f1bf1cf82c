#include "s3pool/rng.hpp"

#include "s3pool/common.hpp"

namespace s3pool {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr uint64_t kDeriveDomain = 0xd1b54a32d192ed03ULL;

// splitmix64 finalizer
uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t fold(uint64_t base, uint64_t key) {
  return mix64((base ^ kDeriveDomain) + kGolden * (key + 1));
}

}  // namespace

RngStream::RngStream(uint64_t seed, uint64_t layer_id, uint64_t step)
    : base_(fold(fold(mix64(seed + kGolden), layer_id), step)) {}

// Substream address depends only on (parent address, index), never on how
// many draws the parent has produced.
RngStream RngStream::derive(uint64_t index) const {
  return RngStream(fold(base_, index));
}

uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(base_ + kGolden * counter_);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t RngStream::uniform_below(uint64_t bound) {
  require(bound > 0, "uniform_below bound must be positive");
  // Rejection below the largest multiple of bound keeps the draw unbiased.
  const uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

}  // namespace s3pool
