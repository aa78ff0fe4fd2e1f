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
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "tsvd/decompose.hpp"

namespace tsvd {

struct QatRecomputeResult {
  TsvdFactorization fact;
  DecomposeTrace trace;
  // Intermediates of the main/tail split, in pre-split column order.
  std::vector<double> resolved_s;
  std::vector<char> kept;
  double ref_magnitude = 0.0;
};

// Refreshes a factorization after the latent weight moved. Old directions are
// re-scaled against w_new; those whose norm-weighted singular value still
// beats the best rank-1 ternary direction of the unexplained part (by factor
// eta) are kept, and the decomposition continues warm from the kept set.
inline QatRecomputeResult qat_recompute(const DenseMatrix& w_new,
                                        const TernaryMatrix& u_old,
                                        const TernaryMatrix& v_old, double eta,
                                        const DecomposeConfig& cfg) {
  if (u_old.rows() != w_new.rows() || v_old.cols() != w_new.cols() ||
      u_old.cols() != v_old.rows())
    throw std::invalid_argument("qat_recompute: shape mismatch");
  const std::int64_t k_old = u_old.cols();
  QatRecomputeResult out;

  Vector s = solve_singulars(u_old, v_old, w_new);
  out.resolved_s.assign(s.data(), s.data() + s.size());

  DenseMatrix residual = w_new;
  if (k_old > 0) {
    const DenseMatrix ud = u_old.to_dense();
    const DenseMatrix vd = v_old.to_dense();
    residual.noalias() -= ud * s.asDiagonal() * vd;
  }

  double ref = 0.0;
  if (residual.squaredNorm() > 0.0) {
    SvdResult svd = thin_svd(residual);
    Vector u1 = svd.u.col(0);
    Vector v1 = svd.vt.row(0).transpose();
    detail::sign_normalize(u1, v1);
    const TernaryVector tu = ternarize(u1, AngleThreshold(cfg.theta));
    const TernaryVector tv = ternarize(v1, AngleThreshold(cfg.theta));
    double dot = 0.0;
    for (std::int64_t i = 0; i < w_new.rows(); ++i) {
      if (tu[i] == 0) continue;
      for (std::int64_t j = 0; j < w_new.cols(); ++j)
        if (tv[j] != 0) dot += residual(i, j) * tu[i] * tv[j];
    }
    const double nu = static_cast<double>(ternary_nnz(tu));
    const double nv = static_cast<double>(ternary_nnz(tv));
    const double s1 = dot / (nu * nv);
    ref = std::abs(s1) * std::sqrt(nu * nv);
  }
  out.ref_magnitude = ref;

  out.kept.assign(k_old, 0);
  std::int64_t n_keep = 0;
  for (std::int64_t j = 0; j < k_old; ++j) {
    std::int64_t nu = 0, nv = 0;
    for (std::int64_t i = 0; i < u_old.rows(); ++i)
      if (u_old.get(i, j) != 0) ++nu;
    for (std::int64_t i = 0; i < v_old.cols(); ++i)
      if (v_old.get(j, i) != 0) ++nv;
    const double weight =
        std::abs(s(j)) * std::sqrt(static_cast<double>(nu) * nv);
    if (weight > eta * ref) {
      out.kept[j] = 1;
      ++n_keep;
    }
  }

  TernaryMatrix u_main(u_old.rows(), n_keep);
  TernaryMatrix v_main(n_keep, v_old.cols());
  std::int64_t col = 0;
  for (std::int64_t j = 0; j < k_old; ++j) {
    if (!out.kept[j]) continue;
    for (std::int64_t i = 0; i < u_old.rows(); ++i)
      u_main.set(i, col, u_old.get(i, j));
    for (std::int64_t i = 0; i < v_old.cols(); ++i)
      v_main.set(col, i, v_old.get(j, i));
    ++col;
  }

  auto [fact, trace] = tsvd_decompose_from(w_new, cfg, u_main, v_main);
  out.fact = std::move(fact);
  out.trace = std::move(trace);
  return out;
}

struct QatState {
  DenseMatrix w;
  TsvdFactorization fact;
  double eta = 1.0;
  DecomposeConfig cfg;
};

inline QatState qat_init(DenseMatrix w, double eta, const DecomposeConfig& cfg) {
  QatState st;
  st.w = std::move(w);
  st.eta = eta;
  st.cfg = cfg;
  auto [fact, trace] = tsvd_decompose(st.w, cfg);
  (void)trace;
  st.fact = std::move(fact);
  return st;
}

// Straight-through update: the gradient taken at the reconstruction is
// applied to the latent weight, then the factorization is refreshed.
inline QatState ste_step(const QatState& state, const DenseMatrix& grad_wbar,
                         double lr) {
  if (grad_wbar.rows() != state.w.rows() || grad_wbar.cols() != state.w.cols())
    throw std::invalid_argument("ste_step: gradient shape mismatch");
  QatState next;
  next.eta = state.eta;
  next.cfg = state.cfg;
  next.w = state.w - lr * grad_wbar;
  QatRecomputeResult r =
      qat_recompute(next.w, state.fact.u, state.fact.v, state.eta, state.cfg);
  next.fact = std::move(r.fact);
  return next;
}

// L = 0.5 * |wbar x - t|_F^2 with analytic gradient (wbar x - t) x^T.
inline double regression_loss(const DenseMatrix& wbar, const DenseMatrix& x,
                              const DenseMatrix& t) {
  return 0.5 * (wbar * x - t).squaredNorm();
}
inline DenseMatrix regression_grad(const DenseMatrix& wbar,
                                   const DenseMatrix& x,
                                   const DenseMatrix& t) {
  return (wbar * x - t) * x.transpose();
}

struct QatDemoResult {
  std::vector<double> step_loss;
  double final_residual = 0.0;
  double ls_residual = 0.0;
  double ratio = 0.0;
  std::int64_t final_rank = 0;
};

// Toy regression trained through the factorization with plain gradient
// descent. A closed-form least-squares fit of the same data serves as the
// oracle for the final-residual ratio.
inline QatDemoResult qat_demo(int steps = 200, double eta = 1.0,
                              double lr = 0.01, std::uint64_t seed = 5) {
  const int m = 16, n = 8, samples = 32;
  Rng rng(seed);
  const auto draw = [&](int r, int c, double scale) {
    DenseMatrix a(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) a(i, j) = scale * rng.gaussian();
    return a;
  };
  const DenseMatrix x = draw(n, samples, 1.0);
  const DenseMatrix w_true = draw(m, n, 1.0);
  const DenseMatrix t = w_true * x + draw(m, samples, 2.0);

  SvdResult xs = thin_svd(x);
  DenseMatrix pinv_x = DenseMatrix::Zero(samples, n);
  const double cut = 1e-10 * xs.s(0);
  for (std::int64_t i = 0; i < xs.s.size(); ++i)
    if (xs.s(i) > cut)
      pinv_x.noalias() +=
          (1.0 / xs.s(i)) * xs.vt.row(i).transpose() * xs.u.col(i).transpose();
  const DenseMatrix w_ls = t * pinv_x;
  const double ls_resid = (w_ls * x - t).norm();

  DecomposeConfig cfg;
  cfg.theta = std::numbers::pi / 4;
  cfg.tol = 0.05;
  cfg.error_norm = ErrorNorm::spectral;
  QatState st = qat_init(draw(m, n, 0.1), eta, cfg);

  QatDemoResult out;
  out.ls_residual = ls_resid;
  for (int i = 0; i < steps; ++i) {
    const DenseMatrix wbar = reconstruct(st.fact);
    out.step_loss.push_back((wbar * x - t).norm());
    st = ste_step(st, regression_grad(wbar, x, t), lr);
  }
  const DenseMatrix wbar = reconstruct(st.fact);
  out.final_residual = (wbar * x - t).norm();
  out.final_rank = st.fact.rank();
  out.ratio = out.final_residual / ls_resid;
  return out;
}

}  // namespace tsvd
