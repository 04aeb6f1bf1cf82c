#include "s3pool/tensor.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "s3pool/common.hpp"

namespace s3pool {

std::string to_string(const Dims4& d) {
  std::ostringstream os;
  os << "(" << d.n << "," << d.c << "," << d.h << "," << d.w << ")";
  return os.str();
}

namespace {

void check_dims(const Dims4& d) {
  require(d.n >= 1 && d.c >= 1 && d.h >= 1 && d.w >= 1,
          "tensor dims must all be >= 1, got " + to_string(d));
  // Reject products that would overflow the flat index space.
  constexpr int64_t kMax = std::numeric_limits<int64_t>::max();
  int64_t count = d.n;
  for (int64_t f : {d.c, d.h, d.w}) {
    require(count <= kMax / f, "tensor dims overflow: " + to_string(d));
    count *= f;
  }
}

void check_same_dims(const Tensor4& a, const Tensor4& b) {
  require(a.dims() == b.dims(), "shape mismatch: " + to_string(a.dims()) +
                                    " vs " + to_string(b.dims()));
}

}  // namespace

Tensor4::Tensor4(const Dims4& dims) : dims_(dims) {
  check_dims(dims);
  data_.assign(static_cast<size_t>(dims.count()), 0.0);
}

Tensor4 Tensor4::zeros(const Dims4& dims) { return Tensor4(dims); }

Tensor4 Tensor4::full(const Dims4& dims, double value) {
  Tensor4 t(dims);
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor4 add(const Tensor4& a, const Tensor4& b) {
  check_same_dims(a, b);
  Tensor4 out(a.dims());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

Tensor4 sub(const Tensor4& a, const Tensor4& b) {
  check_same_dims(a, b);
  Tensor4 out(a.dims());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

Tensor4 mul(const Tensor4& a, const Tensor4& b) {
  check_same_dims(a, b);
  Tensor4 out(a.dims());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

Tensor4 scale(const Tensor4& a, double factor) {
  Tensor4 out(a.dims());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * factor;
  return out;
}

Tensor4 reduce(const Tensor4& a, Reduce op, const AxisMask& axes) {
  const Dims4 in = a.dims();
  Dims4 out_dims = in;
  if (axes[0]) out_dims.n = 1;
  if (axes[1]) out_dims.c = 1;
  if (axes[2]) out_dims.h = 1;
  if (axes[3]) out_dims.w = 1;

  if (!axes[0] && !axes[1] && !axes[2] && !axes[3]) return a;  // identity copy

  const double init = op == Reduce::Max ? -std::numeric_limits<double>::infinity() : 0.0;
  Tensor4 out = Tensor4::full(out_dims, init);
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t c = 0; c < in.c; ++c)
      for (int64_t y = 0; y < in.h; ++y)
        for (int64_t x = 0; x < in.w; ++x) {
          double& slot = out.at(axes[0] ? 0 : n, axes[1] ? 0 : c,
                                axes[2] ? 0 : y, axes[3] ? 0 : x);
          const double v = a.at(n, c, y, x);
          if (op == Reduce::Max)
            slot = std::max(slot, v);
          else
            slot += v;
        }
  if (op == Reduce::Mean) {
    const double denom = static_cast<double>(in.count() / out_dims.count());
    for (int64_t i = 0; i < out.size(); ++i) out.data()[i] /= denom;
  }
  return out;
}

namespace {

void check_indices(const std::vector<int64_t>& idx, int64_t bound,
                   const char* what) {
  require(!idx.empty(), std::string(what) + " index list is empty");
  for (int64_t v : idx)
    require(v >= 1 && v <= bound, std::string(what) + " index " +
                                      std::to_string(v) + " out of range [1," +
                                      std::to_string(bound) + "]");
}

}  // namespace

Tensor4 slice_rows_cols(const Tensor4& a, const std::vector<int64_t>& rows,
                        const std::vector<int64_t>& cols) {
  const Dims4 in = a.dims();
  check_indices(rows, in.h, "row");
  check_indices(cols, in.w, "col");
  Tensor4 out(Dims4{in.n, in.c, static_cast<int64_t>(rows.size()),
                    static_cast<int64_t>(cols.size())});
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t c = 0; c < in.c; ++c)
      for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < cols.size(); ++j)
          out.at(n, c, static_cast<int64_t>(i), static_cast<int64_t>(j)) =
              a.at(n, c, rows[i] - 1, cols[j] - 1);
  return out;
}

Tensor4 scatter_add_rows_cols(const Tensor4& grad_out,
                              const std::vector<int64_t>& rows,
                              const std::vector<int64_t>& cols,
                              const Dims4& target_dims) {
  const Dims4 in = grad_out.dims();
  require(target_dims.n == in.n && target_dims.c == in.c,
          "scatter target batch/channel dims must match");
  require(static_cast<int64_t>(rows.size()) == in.h &&
              static_cast<int64_t>(cols.size()) == in.w,
          "scatter index counts must match grad spatial dims");
  check_indices(rows, target_dims.h, "row");
  check_indices(cols, target_dims.w, "col");
  Tensor4 out(target_dims);
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t c = 0; c < in.c; ++c)
      for (int64_t i = 0; i < in.h; ++i)
        for (int64_t j = 0; j < in.w; ++j)
          out.at(n, c, rows[i] - 1, cols[j] - 1) += grad_out.at(n, c, i, j);
  return out;
}

double dot(const Tensor4& a, const Tensor4& b) {
  check_same_dims(a, b);
  double acc = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
  return acc;
}

}  // namespace s3pool
