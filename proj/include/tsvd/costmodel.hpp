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

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace tsvd {

// Instruction accounting. One d-digit multiplication is counted as (d-2)
// additions; a dense multiply-accumulate therefore costs (d-1) additions.
// Every accumulation into a running sum counts as one addition, including
// the first term, so measured counts from execution match these formulas
// exactly.

struct CostReport {
  double muls = 0;
  double adds = 0;
  double equivalent_adds = 0;
  double compression_rate = 0;
  double acceleration_rate = 0;
  int d = 32;
  double r = 0;
  std::int64_t K = 0;
};

inline double dense_equivalent_adds(std::int64_t m, std::int64_t n, int d) {
  return static_cast<double>(d - 1) * static_cast<double>(m) *
         static_cast<double>(n);
}

// Cost of y = U diag(S) V x with ternary U [M,K], V [K,N] at pooled factor
// sparsity r: nnz(U)+nnz(V) = rK(M+N) additions plus K scalings.
inline CostReport tsvd_cost(std::int64_t m, std::int64_t n, std::int64_t k,
                            double r, int d) {
  CostReport c;
  c.d = d;
  c.r = r;
  c.K = k;
  c.muls = static_cast<double>(k);
  c.adds = r * static_cast<double>(k) * static_cast<double>(m + n);
  c.equivalent_adds = c.adds + c.muls * (d - 2);
  c.compression_rate = c.equivalent_adds / dense_equivalent_adds(m, n, d);
  c.acceleration_rate = 1.0 / c.compression_rate;
  return c;
}

// Break-even rank: TSVD cost equals the dense layer's at
// K = (d-1)MN / (d + r(M+N) - 2).
inline double critical_rank(double m, double n, int d, double r) {
  const double den = d + r * (m + n) - 2;
  if (den <= 0) throw std::invalid_argument("critical_rank: denominator <= 0");
  return (d - 1) * m * n / den;
}

enum class BaselineMethod { origin, svd, prune, quant, tsvd };

struct BaselineSpec {
  BaselineMethod method = BaselineMethod::origin;
  std::int64_t K = 0;    // svd, tsvd
  double r = 1.0;        // prune, tsvd
  int d_prime = 2;       // quant
};

inline CostReport baseline_cost(const BaselineSpec& spec, std::int64_t m,
                                std::int64_t n, int d) {
  const double origin = dense_equivalent_adds(m, n, d);
  const double mn = static_cast<double>(m) * static_cast<double>(n);
  CostReport c;
  c.d = d;
  switch (spec.method) {
    case BaselineMethod::origin:
      c.muls = mn;
      c.adds = mn;
      break;
    case BaselineMethod::svd:
      c.K = spec.K;
      c.muls = static_cast<double>(spec.K) * static_cast<double>(m + n);
      c.adds = c.muls;
      break;
    case BaselineMethod::prune:
      c.r = spec.r;
      c.muls = spec.r * mn;
      c.adds = c.muls;
      break;
    case BaselineMethod::quant:
      // d'-digit weights: each product costs (d'-2) adds, a MAC (d'-1).
      c.d = spec.d_prime;
      c.muls = mn;
      c.adds = mn;
      break;
    case BaselineMethod::tsvd:
      return tsvd_cost(m, n, spec.K, spec.r, d);
  }
  c.equivalent_adds = c.adds + c.muls * (c.d - 2);
  c.compression_rate = c.equivalent_adds / origin;
  c.acceleration_rate = 1.0 / c.compression_rate;
  return c;
}

// Compression against the nonzero part of the lowered matrix only; r_prime
// is the nonzero rate of the lowered matrix itself.
inline double sparse_aware_rate(std::int64_t k, double r, int d,
                                std::int64_t m, std::int64_t n,
                                double r_prime) {
  if (r_prime <= 0 || r_prime > 1)
    throw std::invalid_argument("sparse_aware_rate: r_prime out of (0,1]");
  const double num =
      static_cast<double>(k) * (d - 2) + r * static_cast<double>(k) * (m + n);
  return num / (r_prime * static_cast<double>(m) * static_cast<double>(n) *
                (d - 1));
}

// Winograd F(2x2,3x3) reference point, counted by hand from the standard
// transform matrices:
//   input transform  B^T d B, B^T = [[1,0,-1,0],[0,1,1,0],[0,-1,1,0],[0,1,0,-1]]:
//     each row of B^T needs 1 addition per applied column; 4 rows x 4 columns
//     per side, two sides -> 32 additions;
//   elementwise product with the transformed filter -> 16 multiplications
//     (filter transform is offline and not counted);
//   output transform A^T m A, A^T = [[1,1,1,0],[0,1,-1,-1]]:
//     2 additions per row per column; A^T m is 2x4 (16 additions), times A
//     adds 2 per entry of the 2x2 result (8 additions) -> 24 additions.
// Totals per 2x2 output tile: 16 muls, 56 adds. The dense equivalent is the
// 4x16 lowered tile matrix with 36 of 64 entries nonzero.
struct WinogradF223 {
  std::int64_t muls = 16;
  std::int64_t adds = 56;
  std::int64_t m = 4;
  std::int64_t n = 16;
  double r_prime = 36.0 / 64.0;
  double rate(int d) const {
    return (static_cast<double>(muls) * (d - 2) + adds) /
           (r_prime * m * n * (d - 1));
  }
};

// TSVD's cost row coincides with 2-digit quantization of both factor
// matrices, pruned to sparsity r, plus the K channel scalings.
inline bool selfconsistency_check(std::int64_t m, std::int64_t n,
                                  std::int64_t k, double r, int d) {
  const CostReport t = tsvd_cost(m, n, k, r, d);
  const int d_prime = 2;
  const double factor_mads =
      static_cast<double>(k) * m + static_cast<double>(k) * n;
  const double quant_pruned = r * factor_mads * (d_prime - 1);
  const double scalings = static_cast<double>(k) * (d - 2);
  const double lhs = t.equivalent_adds;
  const double rhs = quant_pruned + scalings;
  const double scale = std::max({std::fabs(lhs), std::fabs(rhs), 1.0});
  return std::fabs(lhs - rhs) <= 1e-12 * scale;
}

}  // namespace tsvd
