#pragma once

#include <cstdint>
#include <vector>

#include "s3pool/rng.hpp"

namespace s3pool {

// Pooling hyperparameters: window k, stride s, grid size g.
struct PoolGeom {
  int64_t window = 2;
  int64_t stride = 2;
  int64_t grid = 2;
};

// Throws unless window >= 1, stride >= 1, grid >= stride, stride | grid.
void validate(const PoolGeom& geom);
// Additionally requires grid | h and grid | w.
void validate_against(const PoolGeom& geom, int64_t h, int64_t w);

// Row/column indices drawn by one stochastic downsampling event, 1-based.
// Within each grid the indices are strictly increasing, grid/stride of them
// per grid, so the concatenation over grids is globally strictly increasing.
struct SampleIndices {
  std::vector<int64_t> rows;  // length h/stride
  std::vector<int64_t> cols;  // length w/stride
};

// m sorted integers drawn uniformly without replacement from [lo, hi]:
// every m-subset has probability 1 / C(hi-lo+1, m).
std::vector<int64_t> sample_sorted_without_replacement(RngStream& rng,
                                                       int64_t lo, int64_t hi,
                                                       int64_t m);

// Draws grid/stride rows per vertical grid and columns per horizontal grid,
// each grid from its own derived substream.
SampleIndices sample_grid_indices(const RngStream& rng, int64_t h, int64_t w,
                                  const PoolGeom& geom);

// Exact C(n, k) for 0 <= k <= n <= 64.
int64_t binomial_exact(int64_t n, int64_t k);

struct Rational {
  int64_t num = 0;
  int64_t den = 1;
  bool operator==(const Rational&) const = default;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Distribution of the grid-relative position of the pos-th smallest sampled
// index (pos in [1, grid/stride]): weight[a-1] = P(index == a) for a in
// [1, grid], as exact rationals over the common denominator
// C(grid, grid/stride). Weights sum to one exactly.
std::vector<Rational> expectation_weights(const PoolGeom& geom, int64_t pos);

// All C(g, g/s) sorted subsets of [1, g] of size g/s, in lexicographic
// order. Guarded against combinatorial explosion (count must be <= 1e6).
std::vector<std::vector<int64_t>> enumerate_grid_subsets(int64_t g, int64_t s);

}  // namespace s3pool
