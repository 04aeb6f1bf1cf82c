#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace s3pool {

struct Dims4 {
  int64_t n = 0;  // batch
  int64_t c = 0;  // channels
  int64_t h = 0;  // height
  int64_t w = 0;  // width

  int64_t count() const { return n * c * h * w; }
  bool operator==(const Dims4&) const = default;
};

std::string to_string(const Dims4& d);

// Dense rank-4 tensor, row-major (n, c, h, w), double storage.
// Element accessors are 0-based; the 1-based convention used by the
// sampling machinery applies only to row/column index lists.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(const Dims4& dims);  // zero-filled

  static Tensor4 zeros(const Dims4& dims);
  static Tensor4 full(const Dims4& dims, double value);

  const Dims4& dims() const { return dims_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  double& at(int64_t n, int64_t c, int64_t y, int64_t x) {
    return data_[((n * dims_.c + c) * dims_.h + y) * dims_.w + x];
  }
  double at(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return data_[((n * dims_.c + c) * dims_.h + y) * dims_.w + x];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  // Offset of the (n, c) spatial plane within the flat buffer.
  int64_t plane_offset(int64_t n, int64_t c) const {
    return (n * dims_.c + c) * dims_.h * dims_.w;
  }

  bool operator==(const Tensor4&) const = default;

 private:
  Dims4 dims_;
  std::vector<double> data_;
};

enum class Reduce { Sum, Mean, Max };

// One flag per axis in (n, c, h, w) order; true = reduce that axis.
using AxisMask = std::array<bool, 4>;

Tensor4 add(const Tensor4& a, const Tensor4& b);
Tensor4 sub(const Tensor4& a, const Tensor4& b);
Tensor4 mul(const Tensor4& a, const Tensor4& b);
Tensor4 scale(const Tensor4& a, double factor);

// Reduced axes stay as singletons. An all-false mask returns a copy.
Tensor4 reduce(const Tensor4& a, Reduce op, const AxisMask& axes);

// Gather out[n,c,i,j] = a[n,c,rows[i],cols[j]]; indices are 1-based.
Tensor4 slice_rows_cols(const Tensor4& a, const std::vector<int64_t>& rows,
                        const std::vector<int64_t>& cols);

// Adjoint of slice_rows_cols: zeros except (rows[i],cols[j]) which
// accumulate grad_out[i,j]. Indices are 1-based.
Tensor4 scatter_add_rows_cols(const Tensor4& grad_out,
                              const std::vector<int64_t>& rows,
                              const std::vector<int64_t>& cols,
                              const Dims4& target_dims);

// Inner product over all elements.
double dot(const Tensor4& a, const Tensor4& b);

}  // namespace s3pool
