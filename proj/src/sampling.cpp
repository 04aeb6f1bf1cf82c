#include "s3pool/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "s3pool/common.hpp"

namespace s3pool {

void validate(const PoolGeom& geom) {
  require(geom.window >= 1, "pool window must be >= 1");
  require(geom.stride >= 1, "pool stride must be >= 1");
  require(geom.grid >= geom.stride, "grid size must be >= stride");
  require(geom.grid % geom.stride == 0, "stride must divide grid size");
}

void validate_against(const PoolGeom& geom, int64_t h, int64_t w) {
  validate(geom);
  require(h % geom.grid == 0 && w % geom.grid == 0,
          "grid size " + std::to_string(geom.grid) +
              " must divide feature map dims " + std::to_string(h) + "x" +
              std::to_string(w));
}

std::vector<int64_t> sample_sorted_without_replacement(RngStream& rng,
                                                       int64_t lo, int64_t hi,
                                                       int64_t m) {
  const int64_t span = hi - lo + 1;
  require(span >= 1, "empty sampling interval");
  require(m >= 1 && m <= span, "sample count must be in [1, interval size]");

  // First m entries of a uniform Fisher-Yates permutation of [lo, hi].
  std::vector<int64_t> pool(static_cast<size_t>(span));
  std::iota(pool.begin(), pool.end(), lo);
  for (int64_t i = 0; i < m; ++i) {
    const int64_t j =
        i + static_cast<int64_t>(rng.uniform_below(static_cast<uint64_t>(span - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<size_t>(m));
  std::sort(pool.begin(), pool.end());
  return pool;
}

SampleIndices sample_grid_indices(const RngStream& rng, int64_t h, int64_t w,
                                  const PoolGeom& geom) {
  validate_against(geom, h, w);
  const int64_t g = geom.grid;
  const int64_t per_grid = g / geom.stride;
  const int64_t row_grids = h / g;
  const int64_t col_grids = w / g;

  SampleIndices out;
  out.rows.reserve(static_cast<size_t>(h / geom.stride));
  out.cols.reserve(static_cast<size_t>(w / geom.stride));
  for (int64_t p = 0; p < row_grids; ++p) {
    RngStream sub = rng.derive(static_cast<uint64_t>(p));
    const auto picks = sample_sorted_without_replacement(sub, p * g + 1, (p + 1) * g, per_grid);
    out.rows.insert(out.rows.end(), picks.begin(), picks.end());
  }
  for (int64_t q = 0; q < col_grids; ++q) {
    RngStream sub = rng.derive(static_cast<uint64_t>(row_grids + q));
    const auto picks = sample_sorted_without_replacement(sub, q * g + 1, (q + 1) * g, per_grid);
    out.cols.insert(out.cols.end(), picks.begin(), picks.end());
  }
  return out;
}

int64_t binomial_exact(int64_t n, int64_t k) {
  require(n >= 0 && n <= 64, "binomial n out of [0, 64]");
  require(k >= 0 && k <= n, "binomial k out of [0, n]");
  // Pascal row by row; every C(n, k) with n <= 64 fits in int64.
  std::vector<int64_t> row(static_cast<size_t>(n) + 1, 0);
  row[0] = 1;
  for (int64_t i = 1; i <= n; ++i)
    for (int64_t j = i; j >= 1; --j) row[static_cast<size_t>(j)] += row[static_cast<size_t>(j - 1)];
  return row[static_cast<size_t>(k)];
}

std::vector<Rational> expectation_weights(const PoolGeom& geom, int64_t pos) {
  validate(geom);
  const int64_t g = geom.grid;
  const int64_t m = g / geom.stride;
  require(pos >= 1 && pos <= m, "within-grid position out of [1, grid/stride]");
  require(g <= 64, "grid size above exact-arithmetic bound 64");

  const int64_t den = binomial_exact(g, m);
  std::vector<Rational> weights(static_cast<size_t>(g));
  for (int64_t a = 1; a <= g; ++a) {
    // Zero outside the order-statistic support [pos, g - m + pos].
    int64_t num = 0;
    if (a >= pos && g - a >= m - pos)
      num = binomial_exact(a - 1, pos - 1) * binomial_exact(g - a, m - pos);
    weights[static_cast<size_t>(a - 1)] = Rational{num, den};
  }
  return weights;
}

std::vector<std::vector<int64_t>> enumerate_grid_subsets(int64_t g, int64_t s) {
  require(g >= 1 && s >= 1 && g % s == 0 && g >= s, "invalid (grid, stride)");
  require(g <= 64, "grid size above exact-arithmetic bound 64");
  const int64_t m = g / s;
  require(binomial_exact(g, m) <= 1000000, "subset enumeration too large");

  std::vector<std::vector<int64_t>> all;
  std::vector<int64_t> cur(static_cast<size_t>(m));
  // Lexicographic successor walk over m-combinations of [1, g].
  for (int64_t i = 0; i < m; ++i) cur[static_cast<size_t>(i)] = i + 1;
  for (;;) {
    all.push_back(cur);
    int64_t i = m - 1;
    while (i >= 0 && cur[static_cast<size_t>(i)] == g - (m - 1 - i)) --i;
    if (i < 0) break;
    ++cur[static_cast<size_t>(i)];
    for (int64_t j = i + 1; j < m; ++j)
      cur[static_cast<size_t>(j)] = cur[static_cast<size_t>(j - 1)] + 1;
  }
  return all;
}

}  // namespace s3pool
