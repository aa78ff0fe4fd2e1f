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
#include <cstdlib>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tsvd/convmap.hpp"
#include "tsvd/decompose.hpp"
#include "tsvd/io.hpp"

namespace tsvd {

inline int thread_budget() {
  if (const char* env = std::getenv("TSVD_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(0..n-1) on up to thread_budget() workers. Results must go into
// per-index slots; the caller then reads them in index order.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  const int workers = std::min<std::int64_t>(thread_budget(), n);
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&, t]() {
      for (std::int64_t i = t; i < n; i += workers) fn(i);
    });
  for (auto& th : pool) th.join();
}

enum class Distribution { laplace, gaussian };

// Every draw is squeezed through 32-bit precision so a matrix sampled here
// and one replayed through a .fmat file are the same matrix.
inline DenseMatrix sample_matrix(Distribution dist, std::int64_t m,
                                 std::int64_t n, std::uint64_t seed,
                                 double loc = 0.0, double scale = 1.0) {
  Rng rng(seed);
  DenseMatrix w(m, n);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      const double v =
          dist == Distribution::laplace ? rng.laplace() : rng.gaussian();
      w(i, j) = static_cast<double>(static_cast<float>(loc + scale * v));
    }
  return w;
}

struct StudyConfig {
  std::int64_t m = 512, n = 256;
  Distribution dist = Distribution::laplace;
  double loc = 0.0, scale = 1.0;
  std::uint64_t seed = 1;
  int d = 32;
  double theta = 0.576;
  std::vector<double> tol_grid{0.01, 0.05, 0.10, 0.20, 0.40};
  std::vector<std::int64_t> svd_rank_grid;        // filled by presets
  std::vector<double> prune_grid{0.05, 0.1, 0.2, 0.29, 0.5, 0.75, 1.0};
  std::vector<int> quant_bits{2, 4, 8, 16, 32};
  std::vector<double> theta_grid_deg{15, 20, 25, 30, 33, 36,
                                     40, 45, 50, 55, 60};
  std::vector<double> theta_tols{0.01};
  std::vector<int> conv_kernels{3, 5, 7};
  std::vector<int> conv_tiles{1, 2, 3};
  std::vector<int> conv_strides{1, 2};
  std::vector<double> conv_tols{0.01, 0.02, 0.03, 0.04,
                                0.05, 0.06, 0.08, 0.10};
  int conv_draws = 3;
};

inline std::vector<std::int64_t> default_rank_grid(std::int64_t m,
                                                   std::int64_t n) {
  const std::int64_t full = std::min(m, n);
  std::vector<std::int64_t> grid;
  for (const double f : {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2,
                         3.0 / 4, 1.0}) {
    std::int64_t k = static_cast<std::int64_t>(std::llround(f * full));
    if (k < 1) k = 1;
    if (grid.empty() || grid.back() != k) grid.push_back(k);
  }
  return grid;
}

inline StudyConfig paper_preset() {
  StudyConfig cfg;
  cfg.svd_rank_grid = default_rank_grid(cfg.m, cfg.n);
  return cfg;
}

inline StudyConfig quick_preset() {
  StudyConfig cfg;
  cfg.m = 128;
  cfg.n = 64;
  cfg.svd_rank_grid = default_rank_grid(cfg.m, cfg.n);
  return cfg;
}

inline double achieved_error(const DecomposeTrace& trace, ErrorNorm norm) {
  if (trace.iters.empty()) return 1.0;
  const IterRecord& last = trace.iters.back();
  return norm == ErrorNorm::spectral ? last.residual_spectral
                                     : last.residual_frobenius;
}

// ---------------------------------------------------------------------------
// Tradeoff study: each method sweeps its own parameter on one shared matrix.

struct TradeoffRow {
  std::string method;
  double parameter = 0.0;
  bool ok = true;
  double compression = 0.0;
  double error = 0.0;
  std::uint64_t seed = 0;
};

// Symmetric uniform quantizer at d_prime bits; the step is grid-searched to
// minimize Frobenius error. d_prime == d is the identity.
inline DenseMatrix quantize_baseline(const DenseMatrix& w, int d_prime, int d) {
  if (d_prime >= d) return w;
  const double levels = std::pow(2.0, d_prime - 1) - 1.0;
  const double mean_abs = w.cwiseAbs().mean();
  const auto apply = [&](double step) {
    DenseMatrix q(w.rows(), w.cols());
    for (std::int64_t i = 0; i < w.rows(); ++i)
      for (std::int64_t j = 0; j < w.cols(); ++j) {
        double lv = std::round(w(i, j) / step);
        lv = std::clamp(lv, -levels, levels);
        q(i, j) = lv * step;
      }
    return q;
  };
  double best_err = -1.0, best_step = mean_abs;
  for (int i = 0; i < 120; ++i) {
    const double frac = 0.05 + i * (3.0 - 0.05) / 119.0;
    const double step = frac * mean_abs;
    const double err = (w - apply(step)).norm();
    if (best_err < 0.0 || err < best_err) {
      best_err = err;
      best_step = step;
    }
  }
  return apply(best_step);
}

inline std::vector<TradeoffRow> tradeoff_study(const StudyConfig& cfg) {
  const DenseMatrix w =
      sample_matrix(cfg.dist, cfg.m, cfg.n, cfg.seed, cfg.loc, cfg.scale);
  const double wnorm = spectral_norm(w);
  std::vector<TradeoffRow> rows;

  std::vector<TradeoffRow> tsvd_rows(cfg.tol_grid.size());
  parallel_for(
      static_cast<std::int64_t>(cfg.tol_grid.size()), [&](std::int64_t i) {
        TradeoffRow row{"tsvd", cfg.tol_grid[i], false, 0.0, 0.0, cfg.seed};
        DecomposeConfig dc;
        dc.theta = cfg.theta;
        dc.tol = cfg.tol_grid[i];
        dc.error_norm = ErrorNorm::spectral;
        try {
          auto [fact, trace] = tsvd_decompose(w, dc);
          row.ok = true;
          row.compression =
              tsvd_cost(cfg.m, cfg.n, fact.rank(), fact.sparsity(), cfg.d)
                  .compression_rate;
          row.error = achieved_error(trace, ErrorNorm::spectral);
        } catch (const NoTernaryWithinTheta&) {
        }
        tsvd_rows[i] = row;
      });
  rows.insert(rows.end(), tsvd_rows.begin(), tsvd_rows.end());

  const SvdResult svd = thin_svd(w);
  const std::vector<std::int64_t> rank_grid =
      cfg.svd_rank_grid.empty() ? default_rank_grid(cfg.m, cfg.n)
                                : cfg.svd_rank_grid;
  for (const std::int64_t k : rank_grid) {
    const double err = k < svd.s.size() ? svd.s[k] / svd.s[0] : 0.0;
    BaselineSpec bs;
    bs.method = BaselineMethod::svd;
    bs.K = k;
    rows.push_back({"svd", static_cast<double>(k), true,
                    baseline_cost(bs, cfg.m, cfg.n, cfg.d).compression_rate,
                    err, cfg.seed});
  }

  std::vector<std::pair<double, std::int64_t>> order;
  order.reserve(static_cast<std::size_t>(w.size()));
  for (std::int64_t i = 0; i < w.rows(); ++i)
    for (std::int64_t j = 0; j < w.cols(); ++j)
      order.emplace_back(std::fabs(w(i, j)), i * w.cols() + j);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (const double r : cfg.prune_grid) {
    std::int64_t keep = std::llround(r * static_cast<double>(w.size()));
    keep = std::clamp<std::int64_t>(keep, 1, w.size());
    DenseMatrix p = DenseMatrix::Zero(w.rows(), w.cols());
    for (std::int64_t t = 0; t < keep; ++t) {
      const std::int64_t flat = order[t].second;
      p(flat / w.cols(), flat % w.cols()) = w(flat / w.cols(), flat % w.cols());
    }
    BaselineSpec bs;
    bs.method = BaselineMethod::prune;
    bs.r = static_cast<double>(keep) / static_cast<double>(w.size());
    rows.push_back({"prune", r, true,
                    baseline_cost(bs, cfg.m, cfg.n, cfg.d).compression_rate,
                    spectral_norm(w - p) / wnorm, cfg.seed});
  }

  for (const int dp : cfg.quant_bits) {
    const DenseMatrix q = quantize_baseline(w, dp, cfg.d);
    const double err = dp >= cfg.d ? 0.0 : spectral_norm(w - q) / wnorm;
    BaselineSpec bs;
    bs.method = BaselineMethod::quant;
    bs.d_prime = dp;
    rows.push_back({"quant", static_cast<double>(dp), true,
                    baseline_cost(bs, cfg.m, cfg.n, cfg.d).compression_rate,
                    err, cfg.seed});
  }

  std::stable_sort(rows.begin(), rows.end(),
                   [](const TradeoffRow& a, const TradeoffRow& b) {
                     if (a.ok != b.ok) return a.ok;
                     return a.compression < b.compression;
                   });
  return rows;
}

inline std::string tradeoff_csv(const std::vector<TradeoffRow>& rows) {
  CsvWriter csv;
  csv.row({"method", "parameter", "compression_rate",
           "relative_spectral_error", "status", "seed"});
  for (const TradeoffRow& r : rows)
    csv.row({r.method, format_double(r.parameter),
             r.ok ? format_double(r.compression) : "",
             r.ok ? format_double(r.error) : "", r.ok ? "ok" : "no_ternary",
             std::to_string(r.seed)});
  return csv.text;
}

// ---------------------------------------------------------------------------
// Theta sweep: decompose the same matrix across an angle grid. Tight angles
// can make the ternarization infeasible; those grid points become status rows.

struct ThetaRow {
  double theta_deg = 0.0;
  double tol = 0.0;
  bool ok = false;
  double compression = 0.0;
  double sparsity = 0.0;
  std::uint64_t seed = 0;
};

inline std::vector<ThetaRow> theta_sweep(const StudyConfig& cfg) {
  const DenseMatrix w =
      sample_matrix(cfg.dist, cfg.m, cfg.n, cfg.seed, cfg.loc, cfg.scale);
  std::vector<std::pair<double, double>> grid;
  for (const double deg : cfg.theta_grid_deg)
    for (const double tol : cfg.theta_tols) grid.emplace_back(deg, tol);

  std::vector<ThetaRow> rows(grid.size());
  parallel_for(static_cast<std::int64_t>(grid.size()), [&](std::int64_t i) {
    const auto [deg, tol] = grid[i];
    ThetaRow row;
    row.theta_deg = deg;
    row.tol = tol;
    row.seed = cfg.seed;
    DecomposeConfig dc;
    dc.theta = deg * std::numbers::pi / 180.0;
    dc.tol = tol;
    dc.error_norm = ErrorNorm::spectral;
    try {
      auto [fact, trace] = tsvd_decompose(w, dc);
      row.ok = true;
      row.sparsity = fact.sparsity();
      row.compression =
          tsvd_cost(cfg.m, cfg.n, fact.rank(), row.sparsity, cfg.d)
              .compression_rate;
    } catch (const NoTernaryWithinTheta&) {
      row.ok = false;
    }
    rows[i] = row;
  });
  return rows;
}

inline std::string theta_csv(const std::vector<ThetaRow>& rows) {
  CsvWriter csv;
  csv.row({"theta_deg", "tol", "compression_rate", "sparsity_r", "status",
           "seed"});
  for (const ThetaRow& r : rows) {
    if (r.ok)
      csv.row({format_double(r.theta_deg), format_double(r.tol),
               format_double(r.compression), format_double(r.sparsity), "ok",
               std::to_string(r.seed)});
    else
      csv.row({format_double(r.theta_deg), format_double(r.tol), "", "",
               "no_ternary", std::to_string(r.seed)});
  }
  return csv.text;
}

// ---------------------------------------------------------------------------
// Conv tile study: single-channel kernels unfolded over output tiles, rated
// with the sparse-aware model. Each grid point averages a fixed set of kernel
// draws; a point where any draw fails ternarization is a status row.

struct ConvRow {
  int kernel = 0;
  int tile = 0;
  int stride = 0;
  double tol = 0.0;
  bool ok = false;
  bool winograd_ref = false;
  double rate = 0.0;
  double error = 0.0;
  std::uint64_t seed = 0;
};

inline std::vector<ConvRow> conv_tile_study(const StudyConfig& cfg) {
  std::vector<std::vector<DenseMatrix>> kernels;
  Rng rng(cfg.seed);
  for (const int ks : cfg.conv_kernels) {
    std::vector<DenseMatrix> draws;
    for (int rep = 0; rep < cfg.conv_draws; ++rep) {
      DenseMatrix k(ks, ks);
      for (int i = 0; i < ks; ++i)
        for (int j = 0; j < ks; ++j)
          k(i, j) = static_cast<double>(static_cast<float>(rng.gaussian()));
      draws.push_back(std::move(k));
    }
    kernels.push_back(std::move(draws));
  }

  struct Point {
    std::size_t ki;
    int kernel, tile, stride;
    double tol;
  };
  std::vector<Point> grid;
  for (std::size_t ki = 0; ki < cfg.conv_kernels.size(); ++ki)
    for (const int tile : cfg.conv_tiles)
      for (const int stride : cfg.conv_strides)
        for (const double tol : cfg.conv_tols)
          grid.push_back({ki, cfg.conv_kernels[ki], tile, stride, tol});

  std::vector<ConvRow> rows(grid.size());
  parallel_for(static_cast<std::int64_t>(grid.size()), [&](std::int64_t gi) {
    const Point& p = grid[gi];
    ConvRow row;
    row.kernel = p.kernel;
    row.tile = p.tile;
    row.stride = p.stride;
    row.tol = p.tol;
    row.seed = cfg.seed;
    ConvSpec spec;
    spec.c_out = spec.c_in = 1;
    spec.k1 = spec.k2 = p.kernel;
    spec.stride = {p.stride, p.stride};
    double rate_sum = 0.0, err_sum = 0.0;
    bool ok = true;
    for (const DenseMatrix& k : kernels[p.ki]) {
      const auto [w, r_prime] = unfold_tile(spec, k, {p.tile, p.tile});
      DecomposeConfig dc;
      dc.theta = cfg.theta;
      dc.tol = p.tol;
      dc.error_norm = ErrorNorm::spectral;
      try {
        auto [fact, trace] = tsvd_decompose(w, dc);
        rate_sum += sparse_aware_rate(fact.rank(), fact.sparsity(), cfg.d,
                                      w.rows(), w.cols(), r_prime);
        err_sum += achieved_error(trace, ErrorNorm::spectral);
      } catch (const NoTernaryWithinTheta&) {
        ok = false;
        break;
      }
    }
    if (ok) {
      row.ok = true;
      row.rate = rate_sum / cfg.conv_draws;
      row.error = err_sum / cfg.conv_draws;
    }
    rows[gi] = row;
  });

  ConvRow wino;
  wino.kernel = 3;
  wino.tile = 2;
  wino.stride = 1;
  wino.ok = true;
  wino.winograd_ref = true;
  wino.rate = WinogradF223{}.rate(cfg.d);
  wino.error = 0.0;
  wino.seed = cfg.seed;
  rows.push_back(wino);
  return rows;
}

inline std::string conv_csv(const std::vector<ConvRow>& rows) {
  CsvWriter csv;
  csv.row({"kernel", "tile", "stride", "tol", "compression_rate", "error",
           "status", "seed"});
  for (const ConvRow& r : rows) {
    const std::string status =
        r.winograd_ref ? "winograd" : (r.ok ? "ok" : "no_ternary");
    csv.row({std::to_string(r.kernel), std::to_string(r.tile),
             std::to_string(r.stride),
             r.winograd_ref ? "" : format_double(r.tol),
             r.ok ? format_double(r.rate) : "",
             r.ok ? format_double(r.error) : "", status,
             std::to_string(r.seed)});
  }
  return csv.text;
}

// Lowest rate among successful rows whose error is at or under the level.
inline std::optional<double> frontier_min_rate(const std::vector<ConvRow>& rows,
                                               double err_level) {
  std::optional<double> best;
  for (const ConvRow& r : rows) {
    if (!r.ok || r.winograd_ref || r.error > err_level + 1e-12) continue;
    if (!best || r.rate < *best) best = r.rate;
  }
  return best;
}

}  // namespace tsvd
