#pragma once

#include <cstdint>

namespace s3pool {

// Counter-based random stream. A stream is addressed by (seed, layer_id,
// step); derive() folds in further indices (grid, batch element) to get an
// independent substream. Same address -> bit-identical draw sequence on any
// platform. A single instance is not safe to share across threads
// mid-sequence; derive per task instead.
class RngStream {
 public:
  RngStream(uint64_t seed, uint64_t layer_id, uint64_t step);

  RngStream derive(uint64_t index) const;

  uint64_t next_u64();
  double next_double();                   // uniform in [0, 1)
  uint64_t uniform_below(uint64_t bound); // uniform in [0, bound), unbiased

 private:
  explicit RngStream(uint64_t base) : base_(base) {}

  uint64_t base_;
  uint64_t counter_ = 0;
};

}  // namespace s3pool
