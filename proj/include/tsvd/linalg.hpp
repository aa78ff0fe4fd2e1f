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

#include <lapacke.h>

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tsvd/rng.hpp"

namespace tsvd {

using DenseMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct SvdResult {
  DenseMatrix u;   // m x k
  Vector s;        // k, descending
  DenseMatrix vt;  // k x n
};

// Thin SVD via dgesdd.
inline SvdResult thin_svd(const DenseMatrix& a) {
  const lapack_int m = static_cast<lapack_int>(a.rows());
  const lapack_int n = static_cast<lapack_int>(a.cols());
  const lapack_int k = std::min(m, n);
  SvdResult out;
  out.u.resize(m, k);
  out.s.resize(k);
  out.vt.resize(k, n);
  DenseMatrix work = a;
  const lapack_int info = LAPACKE_dgesdd(
      LAPACK_ROW_MAJOR, 'S', m, n, work.data(), n, out.s.data(), out.u.data(),
      k, out.vt.data(), n);
  if (info != 0) throw std::runtime_error("thin_svd: dgesdd failed");
  return out;
}

// Eigendecomposition of a symmetric matrix via dsyevd; ascending eigenvalues.
// Overwrites a with the eigenvectors (columns in row-major storage).
inline Vector sym_eig_inplace(DenseMatrix& a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  Vector w(n);
  const lapack_int info =
      LAPACKE_dsyevd(LAPACK_ROW_MAJOR, 'V', 'U', n, a.data(), n, w.data());
  if (info != 0) throw std::runtime_error("sym_eig: dsyevd failed");
  return w;
}

// Power iteration on A^T A; stops after max_iters or when the eigenvalue
// estimate changes by less than rel_tol. Start vector is seeded and fixed.
inline double spectral_norm(const DenseMatrix& a, int max_iters = 200,
                            double rel_tol = 1e-8,
                            std::uint64_t seed = 0x5eedULL) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  Rng rng(seed);
  Vector v(a.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.gaussian();
  double nv = v.norm();
  if (nv == 0.0) return 0.0;
  v /= nv;
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector av = a * v;
    Vector atav = a.transpose() * av;
    const double nrm = atav.norm();
    if (nrm == 0.0) return 0.0;
    const double next = std::sqrt(av.squaredNorm());
    if (it > 0 && std::fabs(next - lambda) <= rel_tol * std::fabs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
    v = atav / nrm;
  }
  return lambda;
}

enum class ErrorNorm { spectral, frobenius };

inline double relative_error(const DenseMatrix& w, const DenseMatrix& w_hat,
                             ErrorNorm norm) {
  if (w.rows() != w_hat.rows() || w.cols() != w_hat.cols())
    throw std::invalid_argument("relative_error: shape mismatch");
  if (norm == ErrorNorm::frobenius) {
    const double nw = w.norm();
    if (nw == 0.0) throw std::invalid_argument("relative_error: zero-norm w");
    return (w - w_hat).norm() / nw;
  }
  const double nw = spectral_norm(w);
  if (nw == 0.0) throw std::invalid_argument("relative_error: zero-norm w");
  return spectral_norm(w - w_hat) / nw;
}

}  // namespace tsvd
