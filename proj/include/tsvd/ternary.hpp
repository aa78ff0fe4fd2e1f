/* Copyright 2026 the tsvd authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License. */

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tsvd/costmodel.hpp"
#include "tsvd/linalg.hpp"

namespace tsvd {

struct NoTernaryWithinTheta : std::runtime_error {
  explicit NoTernaryWithinTheta(const std::string& what)
      : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

using TernaryVector = std::vector<std::int8_t>;

// 2-bit packed matrix over {-1, 0, +1}. Codes: 00 = 0, 01 = +1, 10 = -1;
// 11 is invalid and rejected on decode. Row-major; each row is padded to a
// byte boundary and padding bits are zero.
class TernaryMatrix {
 public:
  TernaryMatrix() = default;
  TernaryMatrix(std::int64_t rows, std::int64_t cols)
      : rows_(rows), cols_(cols), bytes_(bytes_per_row() * rows, 0) {
    if (rows < 0 || cols < 0)
      throw std::invalid_argument("TernaryMatrix: negative shape");
  }

  static TernaryMatrix from_dense(const DenseMatrix& a) {
    TernaryMatrix t(a.rows(), a.cols());
    for (std::int64_t i = 0; i < t.rows_; ++i)
      for (std::int64_t j = 0; j < t.cols_; ++j) {
        const double v = a(i, j);
        if (v != -1.0 && v != 0.0 && v != 1.0)
          throw std::invalid_argument("from_dense: entry not in {-1,0,1}");
        t.set(i, j, static_cast<int>(v));
      }
    return t;
  }

  static TernaryMatrix from_payload(std::int64_t rows, std::int64_t cols,
                                    const std::vector<std::uint8_t>& payload) {
    TernaryMatrix t(rows, cols);
    if (payload.size() != t.bytes_.size())
      throw IoError("ternary payload: wrong size");
    t.bytes_ = payload;
    for (std::int64_t i = 0; i < rows; ++i) {
      for (std::int64_t j = 0; j < cols; ++j)
        if (t.code(i, j) == 3) throw IoError("ternary payload: code 11");
      for (std::int64_t j = cols; j < 4 * static_cast<std::int64_t>(t.bytes_per_row()); ++j)
        if (t.code(i, j) != 0) throw IoError("ternary payload: nonzero padding");
    }
    return t;
  }

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  static std::size_t bytes_per_row(std::int64_t cols) {
    return static_cast<std::size_t>((cols + 3) / 4);
  }
  std::size_t bytes_per_row() const { return bytes_per_row(cols_); }
  const std::vector<std::uint8_t>& payload() const { return bytes_; }

  int get(std::int64_t i, std::int64_t j) const {
    const unsigned c = code(i, j);
    return c == 1 ? 1 : (c == 2 ? -1 : 0);
  }

  void set(std::int64_t i, std::int64_t j, int v) {
    const unsigned c = v == 1 ? 1u : (v == -1 ? 2u : 0u);
    std::uint8_t& b = bytes_[i * bytes_per_row() + (j >> 2)];
    const int sh = 2 * (j & 3);
    b = static_cast<std::uint8_t>((b & ~(3u << sh)) | (c << sh));
  }

  std::int64_t nnz() const {
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < rows_; ++i)
      for (std::int64_t j = 0; j < cols_; ++j)
        if (code(i, j) != 0) ++n;
    return n;
  }

  DenseMatrix to_dense() const {
    DenseMatrix a(rows_, cols_);
    for (std::int64_t i = 0; i < rows_; ++i)
      for (std::int64_t j = 0; j < cols_; ++j)
        a(i, j) = static_cast<double>(get(i, j));
    return a;
  }

  bool operator==(const TernaryMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && bytes_ == o.bytes_;
  }

 private:
  unsigned code(std::int64_t i, std::int64_t j) const {
    const std::uint8_t b = bytes_[i * bytes_per_row() + (j >> 2)];
    return (b >> (2 * (j & 3))) & 3u;
  }

  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<std::uint8_t> bytes_;
};

enum class FormType : int { F0 = 0, F1 = 1, F2 = 2, F3 = 3 };

struct ConvInfo {
  int c_out = 0, c_in = 0, k1 = 0, k2 = 0, groups = 1;
  std::array<int, 2> stride{1, 1};
  std::array<int, 2> dilation{1, 1};
  std::array<int, 2> padding{0, 0};
  std::vector<std::int64_t> group_ranks;
};

struct TsvdFactorization {
  TernaryMatrix u;         // M x K
  std::vector<double> s;   // K
  TernaryMatrix v;         // K x N
  double theta = 0.0;
  int form = -1;           // FormType index, or -1 for a plain matrix
  std::array<std::int64_t, 2> source_shape{0, 0};
  std::optional<ConvInfo> conv;

  std::int64_t rank() const { return static_cast<std::int64_t>(s.size()); }

  double sparsity() const {
    const std::int64_t denom =
        u.rows() * u.cols() + v.rows() * v.cols();
    if (denom == 0) return 0.0;
    return static_cast<double>(u.nnz() + v.nnz()) /
           static_cast<double>(denom);
  }
};

// y[i] = sum over +1 entries minus sum over -1 entries, accumulated in
// ascending column order; adds counts one addition per nonzero.
inline std::pair<Vector, std::int64_t> ternary_matvec(const TernaryMatrix& t,
                                                      const Vector& x) {
  if (x.size() != t.cols())
    throw std::invalid_argument("ternary_matvec: dimension mismatch");
  Vector y = Vector::Zero(t.rows());
  std::int64_t adds = 0;
  for (std::int64_t i = 0; i < t.rows(); ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < t.cols(); ++j) {
      const int c = t.get(i, j);
      if (c == 1) {
        acc += x[j];
        ++adds;
      } else if (c == -1) {
        acc -= x[j];
        ++adds;
      }
    }
    y[i] = acc;
  }
  return {std::move(y), adds};
}

inline DenseMatrix reconstruct(const TsvdFactorization& f) {
  const std::int64_t m = f.u.rows(), n = f.v.cols();
  if (f.rank() == 0) return DenseMatrix::Zero(m, n);
  DenseMatrix ud = f.u.to_dense();
  DenseMatrix vd = f.v.to_dense();
  Vector s = Eigen::Map<const Vector>(f.s.data(), f.rank());
  return ud * s.asDiagonal() * vd;
}

// Model counts taken straight from the stored factors; adds is the exact
// nonzero count, so a report measured by apply() matches this bit-for-bit.
inline CostReport model_cost(const TsvdFactorization& f, int d = 32) {
  CostReport c;
  c.d = d;
  c.K = f.rank();
  c.r = f.sparsity();
  c.muls = static_cast<double>(f.rank());
  c.adds = static_cast<double>(f.u.nnz() + f.v.nnz());
  c.equivalent_adds = c.adds + c.muls * (d - 2);
  const double origin = dense_equivalent_adds(f.u.rows(), f.v.cols(), d);
  c.compression_rate = c.equivalent_adds / origin;
  c.acceleration_rate = 1.0 / c.compression_rate;
  return c;
}

// Three-stage evaluation V, diag(S), U with exact instruction counts.
inline std::pair<Vector, CostReport> apply(const TsvdFactorization& f,
                                           const Vector& x, int d = 32) {
  auto [z, adds_v] = ternary_matvec(f.v, x);
  for (std::int64_t k = 0; k < f.rank(); ++k) z[k] *= f.s[k];
  auto [y, adds_u] = ternary_matvec(f.u, z);
  CostReport c;
  c.d = d;
  c.K = f.rank();
  c.r = f.sparsity();
  c.muls = static_cast<double>(f.rank());
  c.adds = static_cast<double>(adds_u + adds_v);
  c.equivalent_adds = c.adds + c.muls * (d - 2);
  const double origin = dense_equivalent_adds(f.u.rows(), f.v.cols(), d);
  c.compression_rate = c.equivalent_adds / origin;
  c.acceleration_rate = 1.0 / c.compression_rate;
  return {std::move(y), c};
}

}  // namespace tsvd
