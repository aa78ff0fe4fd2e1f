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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tsvd/ternary.hpp"

namespace tsvd {

struct AngleThreshold {
  double theta;
  double cos_theta;
  explicit AngleThreshold(double t) : theta(t), cos_theta(std::cos(t)) {
    if (!(t > 0.0) || !(t < M_PI / 2))
      throw std::invalid_argument("AngleThreshold: theta out of (0, pi/2)");
  }
};

// Sparsest sign-matched ternary vector within angle theta of x: scan prefixes
// of entries sorted by descending magnitude and accept the first k whose
// normalized cumulative sum s_k / (sqrt(k) * ||x||) reaches cos(theta).
// Entries with magnitude strictly below the k-th are zeroed, so magnitude
// ties at the cut are all kept. sign(0) maps to +1. Comparisons are exact.
inline TernaryVector ternarize(const Vector& x, const AngleThreshold& th) {
  const std::int64_t n = x.size();
  if (n == 0) throw std::invalid_argument("ternarize: empty vector");
  const double norm = x.norm();
  if (norm == 0.0 || !std::isfinite(norm))
    throw std::invalid_argument("ternarize: zero or non-finite input");

  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    const double fa = std::fabs(x[a]), fb = std::fabs(x[b]);
    return fa != fb ? fa > fb : a < b;
  });

  double cum = 0.0;
  std::int64_t accept = -1;
  for (std::int64_t k = 0; k < n; ++k) {
    cum += std::fabs(x[order[k]]);
    const double c = cum / (std::sqrt(static_cast<double>(k + 1)) * norm);
    if (c >= th.cos_theta) {
      accept = k;
      break;
    }
  }
  if (accept < 0)
    throw NoTernaryWithinTheta("ternarize: no prefix reaches cos(theta)");

  const double cut = std::fabs(x[order[accept]]);
  TernaryVector t(n);
  for (std::int64_t i = 0; i < n; ++i)
    t[i] = std::fabs(x[i]) < cut ? 0 : (x[i] >= 0.0 ? 1 : -1);
  return t;
}

// Worst-case cosine between a unit vector of length n and its best
// ternarization: gamma_n = 1 / sqrt(sum_k (sqrt(k) - sqrt(k-1))^2), with
// terms evaluated as 1/(sqrt(k)+sqrt(k-1))^2 to avoid cancellation.
inline double gamma_bound(std::int64_t n) {
  if (n < 1) throw std::invalid_argument("gamma_bound: n < 1");
  double sum = 0.0;
  for (std::int64_t k = 1; k <= n; ++k) {
    const double d = std::sqrt(static_cast<double>(k)) +
                     std::sqrt(static_cast<double>(k - 1));
    sum += 1.0 / (d * d);
  }
  return 1.0 / std::sqrt(sum);
}

inline std::int64_t ternary_nnz(const TernaryVector& t) {
  std::int64_t n = 0;
  for (const auto v : t)
    if (v != 0) ++n;
  return n;
}

}  // namespace tsvd
