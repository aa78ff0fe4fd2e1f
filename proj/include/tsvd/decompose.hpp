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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <set>
#include <utility>
#include <vector>

#include "tsvd/costmodel.hpp"
#include "tsvd/linalg.hpp"
#include "tsvd/ternarize.hpp"
#include "tsvd/ternary.hpp"

namespace tsvd {

struct QPolicy {
  bool adaptive = true;
  std::int64_t fixed_q = 1;
  std::int64_t min_iters = 20;
  std::int64_t q_cap = 256;
};

struct DecomposeConfig {
  double theta = 0.576;
  double tol = 0.01;
  ErrorNorm error_norm = ErrorNorm::spectral;
  QPolicy q_policy{};
  std::int64_t max_rank = -1;  // -1: break-even rank at r=0.29, d=32
  std::int64_t max_iters = 10000;
  std::uint64_t seed = 0;
};

struct IterRecord {
  std::int64_t iter = 0;
  std::int64_t k = 0;
  double residual_frobenius = 0;  // relative
  double residual_spectral = 0;   // relative
  std::int64_t q_used = 0;
  double elapsed_s = 0;
};

struct DecomposeTrace {
  std::vector<IterRecord> iters;
  bool non_compressive = false;
};

// Minimum-norm least squares for S in ||W - U diag(S) V||_F:
// S = pinv((U^T U) .* (V V^T)) diag(U^T W V^T). Eigenvalues of the Gram
// matrix below 1e-10 of the largest are treated as zero.
inline Vector pinv_solve_gram(DenseMatrix gram, const Vector& rhs) {
  const std::int64_t k = gram.rows();
  if (k == 0) return Vector();
  const Vector evals = sym_eig_inplace(gram);  // ascending; gram now holds Q
  const double lmax = evals[k - 1];
  Vector s = Vector::Zero(k);
  if (lmax <= 0.0) return s;
  const double cutoff = 1e-10 * lmax;
  for (std::int64_t i = 0; i < k; ++i) {
    if (evals[i] > cutoff) {
      const double proj = gram.col(i).dot(rhs);
      s += (proj / evals[i]) * gram.col(i);
    }
  }
  return s;
}

inline Vector solve_singulars(const TernaryMatrix& u, const TernaryMatrix& v,
                              const DenseMatrix& w) {
  if (u.rows() != w.rows() || v.cols() != w.cols() || u.cols() != v.rows())
    throw std::invalid_argument("solve_singulars: shape mismatch");
  const std::int64_t k = u.cols();
  if (k == 0) return Vector();
  const DenseMatrix ud = u.to_dense();
  const DenseMatrix vd = v.to_dense();
  const DenseMatrix gram =
      (ud.transpose() * ud).cwiseProduct(vd * vd.transpose());
  const DenseMatrix t = w * vd.transpose();  // m x k
  Vector rhs(k);
  for (std::int64_t j = 0; j < k; ++j) rhs[j] = ud.col(j).dot(t.col(j));
  return pinv_solve_gram(gram, rhs);
}

namespace detail {

inline void sign_normalize(Vector& u, Vector& v) {
  std::int64_t arg = 0;
  double best = -1.0;
  for (std::int64_t i = 0; i < u.size(); ++i) {
    const double a = std::fabs(u[i]);
    if (a > best) {
      best = a;
      arg = i;
    }
  }
  if (u[arg] < 0.0) {
    u = -u;
    v = -v;
  }
}

// Grows U, V column/row-wise and keeps U^T U, V V^T and diag(U^T W V^T)
// up to date without full recomputation.
class GramAccumulator {
 public:
  GramAccumulator(std::int64_t m, std::int64_t n) : m_(m), n_(n) {}

  std::int64_t k() const { return k_; }
  const DenseMatrix& ud() const { return ud_; }
  const DenseMatrix& vd() const { return vd_; }

  void append(const std::vector<std::pair<TernaryVector, TernaryVector>>& batch,
              const DenseMatrix& w) {
    const std::int64_t q = static_cast<std::int64_t>(batch.size());
    if (q == 0) return;
    DenseMatrix un(m_, q), vn(q, n_);
    for (std::int64_t j = 0; j < q; ++j) {
      for (std::int64_t i = 0; i < m_; ++i)
        un(i, j) = static_cast<double>(batch[j].first[i]);
      for (std::int64_t i = 0; i < n_; ++i)
        vn(j, i) = static_cast<double>(batch[j].second[i]);
    }
    const std::int64_t k0 = k_;
    ud_.conservativeResize(m_, k0 + q);
    vd_.conservativeResize(k0 + q, n_);
    ud_.rightCols(q) = un;
    vd_.bottomRows(q) = vn;

    a_.conservativeResize(k0 + q, k0 + q);
    b_.conservativeResize(k0 + q, k0 + q);
    if (k0 > 0) {
      const DenseMatrix a12 = ud_.leftCols(k0).transpose() * un;
      const DenseMatrix b12 = vd_.topRows(k0) * vn.transpose();
      a_.topRightCorner(k0, q) = a12;
      a_.bottomLeftCorner(q, k0) = a12.transpose();
      b_.topRightCorner(k0, q) = b12;
      b_.bottomLeftCorner(q, k0) = b12.transpose();
    }
    a_.bottomRightCorner(q, q) = un.transpose() * un;
    b_.bottomRightCorner(q, q) = vn * vn.transpose();

    rhs_.conservativeResize(k0 + q);
    const DenseMatrix t = w * vn.transpose();  // m x q
    for (std::int64_t j = 0; j < q; ++j)
      rhs_[k0 + j] = un.col(j).dot(t.col(j));
    k_ = k0 + q;
  }

  Vector solve() const { return pinv_solve_gram(a_.cwiseProduct(b_), rhs_); }

 private:
  std::int64_t m_, n_, k_ = 0;
  DenseMatrix ud_, vd_, a_, b_;
  Vector rhs_;
};

inline std::vector<std::uint8_t> pair_key(const TernaryVector& u,
                                          const TernaryVector& v) {
  std::vector<std::uint8_t> key;
  key.reserve(u.size() + v.size());
  for (const auto x : u) key.push_back(static_cast<std::uint8_t>(x + 1));
  for (const auto x : v) key.push_back(static_cast<std::uint8_t>(x + 1));
  return key;
}

inline TsvdFactorization pack_factorization(const GramAccumulator& acc,
                                            const Vector& s, double theta,
                                            std::int64_t m, std::int64_t n) {
  TsvdFactorization f;
  f.u = TernaryMatrix::from_dense(acc.ud());
  f.v = TernaryMatrix::from_dense(acc.vd());
  f.s.assign(s.data(), s.data() + s.size());
  f.theta = theta;
  f.source_shape = {m, n};
  return f;
}

}  // namespace detail

// Projects the observed log-linear Frobenius decay to the tolerance target
// and sizes the batch so the decomposition spans at least min_iters
// iterations; the first iteration always uses q = 1.
inline std::int64_t adaptive_q(const DecomposeTrace& trace,
                               const DecomposeConfig& cfg) {
  if (trace.iters.empty())
    throw std::invalid_argument("adaptive_q: no completed iteration");
  const IterRecord& last = trace.iters.back();
  const double rel = last.residual_frobenius;
  double k_est;
  if (rel >= 1.0 || rel <= 0.0)
    k_est = static_cast<double>(last.k);
  else
    k_est = static_cast<double>(last.k) * std::log(cfg.tol) / std::log(rel);
  double qd = std::ceil(k_est / static_cast<double>(cfg.q_policy.min_iters));
  if (!(qd >= 1.0)) qd = 1.0;
  const double cap = static_cast<double>(cfg.q_policy.q_cap);
  if (qd > cap) qd = cap;
  return static_cast<std::int64_t>(qd);
}

// Greedy transition to TSVD form, optionally warm-started from existing
// ternary factors: per iteration take the SVD of the residual, ternarize the
// top-q sign-normalized singular vector pairs, append them (exact duplicates
// within the batch are dropped), then globally re-solve S and recompute the
// residual. Stops at the error tolerance, the rank budget (flagged
// non-compressive), or the iteration cap.
inline std::pair<TsvdFactorization, DecomposeTrace> tsvd_decompose_from(
    const DenseMatrix& w, const DecomposeConfig& cfg, const TernaryMatrix& u0,
    const TernaryMatrix& v0) {
  const std::int64_t m = w.rows(), n = w.cols();
  const double norm_f = w.norm();
  if (norm_f == 0.0 || !w.allFinite())
    throw std::invalid_argument("tsvd_decompose: w must be finite and nonzero");
  const AngleThreshold th(cfg.theta);
  const double norm_s =
      cfg.error_norm == ErrorNorm::spectral ? spectral_norm(w) : 0.0;

  std::int64_t max_rank = cfg.max_rank;
  if (max_rank < 0)
    max_rank = static_cast<std::int64_t>(
        std::floor(critical_rank(static_cast<double>(m),
                                 static_cast<double>(n), 32, 0.29)));
  if (max_rank < 1) max_rank = 1;

  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  detail::GramAccumulator acc(m, n);
  DecomposeTrace trace;
  Vector s;
  DenseMatrix residual = w;
  double rel_f = 1.0, rel_s = 1.0;

  const auto resolve = [&]() {
    s = acc.solve();
    residual.noalias() = w - acc.ud() * s.asDiagonal() * acc.vd();
    rel_f = residual.norm() / norm_f;
    rel_s = cfg.error_norm == ErrorNorm::spectral
                ? spectral_norm(residual) / norm_s
                : rel_f;
  };
  const auto exit_metric = [&]() {
    return cfg.error_norm == ErrorNorm::spectral ? rel_s : rel_f;
  };

  if (u0.cols() > 0) {
    std::vector<std::pair<TernaryVector, TernaryVector>> seed_batch;
    for (std::int64_t j = 0; j < u0.cols(); ++j) {
      TernaryVector tu(m), tv(n);
      for (std::int64_t i = 0; i < m; ++i)
        tu[i] = static_cast<std::int8_t>(u0.get(i, j));
      for (std::int64_t i = 0; i < n; ++i)
        tv[i] = static_cast<std::int8_t>(v0.get(j, i));
      seed_batch.emplace_back(std::move(tu), std::move(tv));
    }
    acc.append(seed_batch, w);
    resolve();
    trace.iters.push_back(
        {0, acc.k(), rel_f, rel_s, u0.cols(), elapsed()});
    if (exit_metric() <= cfg.tol) {
      TsvdFactorization f = detail::pack_factorization(acc, s, cfg.theta, m, n);
      return {std::move(f), std::move(trace)};
    }
  }

  // The adaptive policy needs a completed iteration to extrapolate from, so
  // it always opens with q = 1; a fixed policy applies from the start.
  std::int64_t q = cfg.q_policy.adaptive ? 1 : cfg.q_policy.fixed_q;
  for (std::int64_t iter = 1; iter <= cfg.max_iters; ++iter) {
    if (acc.k() >= max_rank) {
      trace.non_compressive = true;
      break;
    }
    const SvdResult svd = thin_svd(residual);
    std::int64_t budget = std::min<std::int64_t>(q, svd.s.size());
    if (acc.k() + budget > max_rank) budget = max_rank - acc.k();

    std::vector<std::pair<TernaryVector, TernaryVector>> batch;
    std::set<std::vector<std::uint8_t>> seen;
    for (std::int64_t j = 0; j < budget; ++j) {
      if (svd.s[j] <= 0.0) break;
      Vector uj = svd.u.col(j);
      Vector vj = svd.vt.row(j).transpose();
      detail::sign_normalize(uj, vj);
      TernaryVector tu = ternarize(uj, th);
      TernaryVector tv = ternarize(vj, th);
      if (seen.insert(detail::pair_key(tu, tv)).second)
        batch.emplace_back(std::move(tu), std::move(tv));
    }
    if (batch.empty()) break;

    acc.append(batch, w);
    resolve();
    trace.iters.push_back({iter, acc.k(), rel_f, rel_s,
                           static_cast<std::int64_t>(batch.size()),
                           elapsed()});
    if (exit_metric() <= cfg.tol) break;
    if (acc.k() >= max_rank) {
      trace.non_compressive = true;
      break;
    }
    q = cfg.q_policy.adaptive ? adaptive_q(trace, cfg) : cfg.q_policy.fixed_q;
  }

  TsvdFactorization f = detail::pack_factorization(acc, s, cfg.theta, m, n);
  return {std::move(f), std::move(trace)};
}

inline std::pair<TsvdFactorization, DecomposeTrace> tsvd_decompose(
    const DenseMatrix& w, const DecomposeConfig& cfg) {
  return tsvd_decompose_from(w, cfg, TernaryMatrix(w.rows(), 0),
                             TernaryMatrix(0, w.cols()));
}

// One rank-1 step optimizing only the new singular value; returns the next
// residual and the Frobenius contraction ratio.
inline std::pair<DenseMatrix, double> weak_policy_step(const DenseMatrix& r,
                                                       double theta) {
  if (!(theta > 0.0) || !(theta < M_PI / 4))
    throw std::invalid_argument("weak_policy_step: theta out of (0, pi/4)");
  const AngleThreshold th(theta);
  const SvdResult svd = thin_svd(r);
  Vector u = svd.u.col(0);
  Vector v = svd.vt.row(0).transpose();
  detail::sign_normalize(u, v);
  const TernaryVector tu = ternarize(u, th);
  const TernaryVector tv = ternarize(v, th);
  Vector tud(r.rows()), tvd(r.cols());
  for (std::int64_t i = 0; i < r.rows(); ++i)
    tud[i] = static_cast<double>(tu[i]);
  for (std::int64_t i = 0; i < r.cols(); ++i)
    tvd[i] = static_cast<double>(tv[i]);
  const double nu = static_cast<double>(ternary_nnz(tu));
  const double nv = static_cast<double>(ternary_nnz(tv));
  const double s_bar = tud.dot(r * tvd) / (nu * nv);
  DenseMatrix next = r - s_bar * tud * tvd.transpose();
  const double ratio = next.norm() / r.norm();
  return {std::move(next), ratio};
}

}  // namespace tsvd
