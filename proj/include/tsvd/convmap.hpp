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
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "tsvd/decompose.hpp"

namespace tsvd {

struct ConvSpec {
  int c_out = 1, c_in = 1, k1 = 1, k2 = 1;
  std::array<int, 2> stride{1, 1};
  std::array<int, 2> dilation{1, 1};
  std::array<int, 2> padding{0, 0};
  int groups = 1;

  void validate() const {
    if (c_out < 1 || c_in < 1 || k1 < 1 || k2 < 1 || groups < 1 ||
        stride[0] < 1 || stride[1] < 1 || dilation[0] < 1 || dilation[1] < 1 ||
        padding[0] < 0 || padding[1] < 0)
      throw std::invalid_argument("ConvSpec: invalid geometry");
    if (c_in % groups != 0 || c_out % groups != 0)
      throw std::invalid_argument("ConvSpec: channels not divisible by groups");
  }
};

struct TileSpec {
  int tile_h = 1;
  int tile_w = 1;
};

// Kernel tensor [c_out][c_in/groups][k1][k2], row-major flat storage.
struct KernelTensor {
  int c_out = 0, c_in_g = 0, k1 = 0, k2 = 0;
  std::vector<double> data;

  double& at(int o, int i, int a, int b) {
    return data[((static_cast<std::size_t>(o) * c_in_g + i) * k1 + a) * k2 + b];
  }
  double at(int o, int i, int a, int b) const {
    return data[((static_cast<std::size_t>(o) * c_in_g + i) * k1 + a) * k2 + b];
  }
  static KernelTensor zeros(int o, int i, int a, int b) {
    KernelTensor k{o, i, a, b, {}};
    k.data.assign(static_cast<std::size_t>(o) * i * a * b, 0.0);
    return k;
  }
};

// Channel-major image [c][h][w].
struct Image {
  int c = 0, h = 0, w = 0;
  std::vector<double> data;

  double& at(int ci, int y, int x) {
    return data[(static_cast<std::size_t>(ci) * h + y) * w + x];
  }
  double at(int ci, int y, int x) const {
    return data[(static_cast<std::size_t>(ci) * h + y) * w + x];
  }
  static Image zeros(int c, int h, int w) {
    Image im{c, h, w, {}};
    im.data.assign(static_cast<std::size_t>(c) * h * w, 0.0);
    return im;
  }
};

// Reference grouped 2-d convolution.
inline Image conv2d(const Image& x, const KernelTensor& k,
                    std::array<int, 2> stride, std::array<int, 2> dilation,
                    std::array<int, 2> padding, int groups = 1) {
  if (x.c != k.c_in_g * groups)
    throw std::invalid_argument("conv2d: channel mismatch");
  if (k.c_out % groups != 0)
    throw std::invalid_argument("conv2d: c_out not divisible by groups");
  const int span1 = (k.k1 - 1) * dilation[0] + 1;
  const int span2 = (k.k2 - 1) * dilation[1] + 1;
  const int ho = (x.h + 2 * padding[0] - span1) / stride[0] + 1;
  const int wo = (x.w + 2 * padding[1] - span2) / stride[1] + 1;
  if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d: empty output");
  Image y = Image::zeros(k.c_out, ho, wo);
  const int oc_g = k.c_out / groups;
  for (int co = 0; co < k.c_out; ++co) {
    const int g = co / oc_g;
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        double acc = 0.0;
        for (int ci = 0; ci < k.c_in_g; ++ci)
          for (int a = 0; a < k.k1; ++a)
            for (int b = 0; b < k.k2; ++b) {
              const int r = i * stride[0] - padding[0] + a * dilation[0];
              const int c = j * stride[1] - padding[1] + b * dilation[1];
              if (r >= 0 && r < x.h && c >= 0 && c < x.w)
                acc += k.at(co, ci, a, b) * x.at(g * k.c_in_g + ci, r, c);
            }
        y.at(co, i, j) = acc;
      }
  }
  return y;
}

// The four lowered shapes. Axis permutations of [c_out, c_in_g, k1, k2]:
//   F0 [c_out, c_in_g*k1*k2], F1 [c_out*k1*k2, c_in_g],
//   F2 [c_out*k1, c_in_g*k2], F3 [c_out*k2, c_in_g*k1].
inline DenseMatrix reshape_kernel(const KernelTensor& k, FormType form) {
  const int o = k.c_out, i = k.c_in_g, a = k.k1, b = k.k2;
  DenseMatrix w;
  switch (form) {
    case FormType::F0:
      w.resize(o, static_cast<std::int64_t>(i) * a * b);
      for (int co = 0; co < o; ++co)
        for (int ci = 0; ci < i; ++ci)
          for (int p = 0; p < a; ++p)
            for (int q = 0; q < b; ++q)
              w(co, (static_cast<std::int64_t>(ci) * a + p) * b + q) =
                  k.at(co, ci, p, q);
      break;
    case FormType::F1:
      w.resize(static_cast<std::int64_t>(o) * a * b, i);
      for (int co = 0; co < o; ++co)
        for (int p = 0; p < a; ++p)
          for (int q = 0; q < b; ++q)
            for (int ci = 0; ci < i; ++ci)
              w((static_cast<std::int64_t>(co) * a + p) * b + q, ci) =
                  k.at(co, ci, p, q);
      break;
    case FormType::F2:
      w.resize(static_cast<std::int64_t>(o) * a, static_cast<std::int64_t>(i) * b);
      for (int co = 0; co < o; ++co)
        for (int p = 0; p < a; ++p)
          for (int ci = 0; ci < i; ++ci)
            for (int q = 0; q < b; ++q)
              w(static_cast<std::int64_t>(co) * a + p,
                static_cast<std::int64_t>(ci) * b + q) = k.at(co, ci, p, q);
      break;
    case FormType::F3:
      w.resize(static_cast<std::int64_t>(o) * b, static_cast<std::int64_t>(i) * a);
      for (int co = 0; co < o; ++co)
        for (int q = 0; q < b; ++q)
          for (int ci = 0; ci < i; ++ci)
            for (int p = 0; p < a; ++p)
              w(static_cast<std::int64_t>(co) * b + q,
                static_cast<std::int64_t>(ci) * a + p) = k.at(co, ci, p, q);
      break;
  }
  return w;
}

inline KernelTensor inverse_reshape(const DenseMatrix& w, FormType form, int o,
                                    int i, int a, int b) {
  KernelTensor k = KernelTensor::zeros(o, i, a, b);
  for (int co = 0; co < o; ++co)
    for (int ci = 0; ci < i; ++ci)
      for (int p = 0; p < a; ++p)
        for (int q = 0; q < b; ++q) {
          double val = 0.0;
          switch (form) {
            case FormType::F0:
              val = w(co, (static_cast<std::int64_t>(ci) * a + p) * b + q);
              break;
            case FormType::F1:
              val = w((static_cast<std::int64_t>(co) * a + p) * b + q, ci);
              break;
            case FormType::F2:
              val = w(static_cast<std::int64_t>(co) * a + p,
                      static_cast<std::int64_t>(ci) * b + q);
              break;
            case FormType::F3:
              val = w(static_cast<std::int64_t>(co) * b + q,
                      static_cast<std::int64_t>(ci) * a + p);
              break;
          }
          k.at(co, ci, p, q) = val;
        }
  return k;
}

// Action of a single-channel convolution on one output tile: rows are tile
// positions (row-major), columns the union of touched input positions per
// axis (a grid product), entries the kernel weights. r_prime is the nonzero
// rate of this matrix for a dense kernel.
inline std::pair<DenseMatrix, double> unfold_tile(const ConvSpec& spec,
                                                  const DenseMatrix& kernel,
                                                  const TileSpec& tile) {
  spec.validate();
  if (spec.groups != 1 || spec.c_in != 1 || spec.c_out != 1)
    throw std::invalid_argument("unfold_tile: single-channel only");
  if (kernel.rows() != spec.k1 || kernel.cols() != spec.k2)
    throw std::invalid_argument("unfold_tile: kernel shape mismatch");
  const auto axis_positions = [](int t, int kk, int s, int d) {
    std::vector<int> pos;
    for (int a = 0; a < t; ++a)
      for (int k = 0; k < kk; ++k) pos.push_back(a * s + k * d);
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    return pos;
  };
  const std::vector<int> p1 =
      axis_positions(tile.tile_h, spec.k1, spec.stride[0], spec.dilation[0]);
  const std::vector<int> p2 =
      axis_positions(tile.tile_w, spec.k2, spec.stride[1], spec.dilation[1]);
  const auto index_of = [](const std::vector<int>& v, int x) {
    return static_cast<std::int64_t>(
        std::lower_bound(v.begin(), v.end(), x) - v.begin());
  };
  const std::int64_t m =
      static_cast<std::int64_t>(tile.tile_h) * tile.tile_w;
  const std::int64_t n = static_cast<std::int64_t>(p1.size()) * p2.size();
  DenseMatrix w = DenseMatrix::Zero(m, n);
  for (int a = 0; a < tile.tile_h; ++a)
    for (int b = 0; b < tile.tile_w; ++b)
      for (int p = 0; p < spec.k1; ++p)
        for (int q = 0; q < spec.k2; ++q) {
          const std::int64_t r = index_of(p1, a * spec.stride[0] + p * spec.dilation[0]);
          const std::int64_t c = index_of(p2, b * spec.stride[1] + q * spec.dilation[1]);
          w(static_cast<std::int64_t>(a) * tile.tile_w + b,
            r * static_cast<std::int64_t>(p2.size()) + c) = kernel(p, q);
        }
  const double r_prime =
      static_cast<double>(m) * spec.k1 * spec.k2 / static_cast<double>(m * n);
  return {std::move(w), r_prime};
}

namespace detail {

// Per-form shapes of the two stage kernels applied as convolutions:
//   V-stage consumes the kernel_V axes, U-stage the kernel_U axes.
inline void stage_kernels(FormType form, const ConvSpec& spec, int& u_k1,
                          int& u_k2, int& v_k1, int& v_k2) {
  switch (form) {
    case FormType::F0: u_k1 = 1;       u_k2 = 1;       v_k1 = spec.k1; v_k2 = spec.k2; break;
    case FormType::F1: u_k1 = spec.k1; u_k2 = spec.k2; v_k1 = 1;       v_k2 = 1;       break;
    case FormType::F2: u_k1 = spec.k1; u_k2 = 1;       v_k1 = 1;       v_k2 = spec.k2; break;
    case FormType::F3: u_k1 = 1;       u_k2 = spec.k2; v_k1 = spec.k1; v_k2 = 1;       break;
  }
}

// Rebuilds the two stage kernels of one group from dense factor blocks.
// ud: [m_g, k], vd: [k, n_g] where (m_g, n_g) is the group's lowered shape.
inline std::pair<KernelTensor, KernelTensor> factor_kernels(
    FormType form, const ConvSpec& spec, const DenseMatrix& ud,
    const DenseMatrix& vd) {
  const int oc = spec.c_out / spec.groups;
  const int ic = spec.c_in / spec.groups;
  const int kk = static_cast<int>(ud.cols());
  int uk1, uk2, vk1, vk2;
  stage_kernels(form, spec, uk1, uk2, vk1, vk2);
  KernelTensor ku = KernelTensor::zeros(oc, kk, uk1, uk2);
  KernelTensor kv = KernelTensor::zeros(kk, ic, vk1, vk2);
  for (int t = 0; t < kk; ++t) {
    switch (form) {
      case FormType::F0:
        for (int ci = 0; ci < ic; ++ci)
          for (int p = 0; p < vk1; ++p)
            for (int q = 0; q < vk2; ++q)
              kv.at(t, ci, p, q) =
                  vd(t, (static_cast<std::int64_t>(ci) * vk1 + p) * vk2 + q);
        for (int co = 0; co < oc; ++co) ku.at(co, t, 0, 0) = ud(co, t);
        break;
      case FormType::F1:
        for (int ci = 0; ci < ic; ++ci) kv.at(t, ci, 0, 0) = vd(t, ci);
        for (int co = 0; co < oc; ++co)
          for (int p = 0; p < uk1; ++p)
            for (int q = 0; q < uk2; ++q)
              ku.at(co, t, p, q) =
                  ud((static_cast<std::int64_t>(co) * uk1 + p) * uk2 + q, t);
        break;
      case FormType::F2:
        for (int ci = 0; ci < ic; ++ci)
          for (int q = 0; q < vk2; ++q)
            kv.at(t, ci, 0, q) = vd(t, static_cast<std::int64_t>(ci) * vk2 + q);
        for (int co = 0; co < oc; ++co)
          for (int p = 0; p < uk1; ++p)
            ku.at(co, t, p, 0) = ud(static_cast<std::int64_t>(co) * uk1 + p, t);
        break;
      case FormType::F3:
        for (int ci = 0; ci < ic; ++ci)
          for (int p = 0; p < vk1; ++p)
            kv.at(t, ci, p, 0) = vd(t, static_cast<std::int64_t>(ci) * vk1 + p);
        for (int co = 0; co < oc; ++co)
          for (int q = 0; q < uk2; ++q)
            ku.at(co, t, 0, q) = ud(static_cast<std::int64_t>(co) * uk2 + q, t);
        break;
    }
  }
  return {std::move(ku), std::move(kv)};
}

}  // namespace detail

// V-stage convolution, channel-wise scaling by S, U-stage convolution.
// Stride, dilation and padding act on the stage carrying the matching
// kernel axes. Grouped convs run per group on their channel slices.
inline Image apply_factored_conv(const ConvSpec& spec, FormType form,
                                 const TsvdFactorization& f, const Image& x) {
  spec.validate();
  if (x.c != spec.c_in)
    throw std::invalid_argument("apply_factored_conv: channel mismatch");
  const int groups = spec.groups;
  const int oc = spec.c_out / groups;
  const int ic = spec.c_in / groups;
  std::vector<std::int64_t> ranks;
  if (f.conv && !f.conv->group_ranks.empty())
    ranks = f.conv->group_ranks;
  else
    ranks.assign(1, f.rank());
  if (static_cast<int>(ranks.size()) != groups)
    throw std::invalid_argument("apply_factored_conv: group rank mismatch");

  const DenseMatrix ud = f.u.to_dense();
  const DenseMatrix vd = f.v.to_dense();
  const std::int64_t m_g = ud.rows() / groups;
  const std::int64_t n_g = vd.cols() / groups;

  std::array<int, 2> one{1, 1};
  std::array<int, 2> zero{0, 0};
  std::array<int, 2> u_stride = one, u_dil = one, u_pad = zero;
  std::array<int, 2> v_stride = one, v_dil = one, v_pad = zero;
  switch (form) {
    case FormType::F0:
      v_stride = spec.stride; v_dil = spec.dilation; v_pad = spec.padding;
      break;
    case FormType::F1:
      u_stride = spec.stride; u_dil = spec.dilation; u_pad = spec.padding;
      break;
    case FormType::F2:
      v_stride = {1, spec.stride[1]}; v_dil = {1, spec.dilation[1]};
      v_pad = {0, spec.padding[1]};
      u_stride = {spec.stride[0], 1}; u_dil = {spec.dilation[0], 1};
      u_pad = {spec.padding[0], 0};
      break;
    case FormType::F3:
      v_stride = {spec.stride[0], 1}; v_dil = {spec.dilation[0], 1};
      v_pad = {spec.padding[0], 0};
      u_stride = {1, spec.stride[1]}; u_dil = {1, spec.dilation[1]};
      u_pad = {0, spec.padding[1]};
      break;
  }

  Image out;
  std::int64_t row_off = 0, col_off = 0, rank_off = 0;
  for (int g = 0; g < groups; ++g) {
    const std::int64_t kg = ranks[g];
    const DenseMatrix ug = ud.block(row_off, rank_off, m_g, kg);
    const DenseMatrix vg = vd.block(rank_off, col_off, kg, n_g);
    ConvSpec gspec = spec;
    gspec.c_out = oc;
    gspec.c_in = ic;
    gspec.groups = 1;
    auto [ku, kv] = detail::factor_kernels(form, gspec, ug, vg);

    Image xg = Image::zeros(ic, x.h, x.w);
    std::copy_n(x.data.begin() + static_cast<std::size_t>(g) * ic * x.h * x.w,
                static_cast<std::size_t>(ic) * x.h * x.w, xg.data.begin());
    Image z = conv2d(xg, kv, v_stride, v_dil, v_pad);
    for (std::int64_t t = 0; t < kg; ++t) {
      const double sv = f.s[rank_off + t];
      for (int yy = 0; yy < z.h; ++yy)
        for (int xx = 0; xx < z.w; ++xx) z.at(static_cast<int>(t), yy, xx) *= sv;
    }
    Image yg = conv2d(z, ku, u_stride, u_dil, u_pad);
    if (g == 0) out = Image::zeros(spec.c_out, yg.h, yg.w);
    std::copy_n(yg.data.begin(), yg.data.size(),
                out.data.begin() + static_cast<std::size_t>(g) * oc * yg.h * yg.w);
    row_off += m_g;
    col_off += n_g;
    rank_off += kg;
  }
  return out;
}

struct FormChoice {
  FormType form = FormType::F0;
  TsvdFactorization fact;
  double compression = 0.0;
  DecomposeTrace trace;
};

// Decomposes every form at the session tolerance and keeps the cheapest by
// modeled compression; ties resolve to the lowest form index. Grouped kernels
// decompose per group; factors are block-diagonal across groups.
inline FormChoice select_form(const ConvSpec& spec, const KernelTensor& kernel,
                              const DecomposeConfig& cfg, int d = 32) {
  spec.validate();
  const int groups = spec.groups;
  const int oc = spec.c_out / groups;
  const int ic = spec.c_in / groups;
  FormChoice best;
  bool have = false;
  for (const FormType form :
       {FormType::F0, FormType::F1, FormType::F2, FormType::F3}) {
    std::vector<TsvdFactorization> parts;
    DecomposeTrace form_trace;
    double cost_num = 0.0, cost_den = 0.0;
    std::int64_t m_g = 0, n_g = 0;
    bool ok = true;
    for (int g = 0; g < groups; ++g) {
      KernelTensor kg = KernelTensor::zeros(oc, ic, spec.k1, spec.k2);
      std::copy_n(kernel.data.begin() + static_cast<std::size_t>(g) * kg.data.size(),
                  kg.data.size(), kg.data.begin());
      const DenseMatrix wg = reshape_kernel(kg, form);
      m_g = wg.rows();
      n_g = wg.cols();
      try {
        auto [fact, trace] = tsvd_decompose(wg, cfg);
        const double nnz =
            static_cast<double>(fact.u.nnz() + fact.v.nnz());
        cost_num += static_cast<double>(fact.rank()) * (d - 2) + nnz;
        cost_den += dense_equivalent_adds(m_g, n_g, d);
        form_trace.non_compressive =
            form_trace.non_compressive || trace.non_compressive;
        if (g == 0) form_trace.iters = std::move(trace.iters);
        parts.push_back(std::move(fact));
      } catch (const NoTernaryWithinTheta&) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    const double rate = cost_num / cost_den;
    if (!have || rate < best.compression) {
      have = true;
      best.form = form;
      best.compression = rate;
      best.trace = std::move(form_trace);
      std::int64_t k_total = 0;
      for (const auto& p : parts) k_total += p.rank();
      TsvdFactorization combined;
      combined.u = TernaryMatrix(static_cast<std::int64_t>(groups) * m_g, k_total);
      combined.v = TernaryMatrix(k_total, static_cast<std::int64_t>(groups) * n_g);
      combined.theta = cfg.theta;
      combined.form = static_cast<int>(form);
      combined.source_shape = {static_cast<std::int64_t>(groups) * m_g,
                               static_cast<std::int64_t>(groups) * n_g};
      ConvInfo info;
      info.c_out = spec.c_out;
      info.c_in = spec.c_in;
      info.k1 = spec.k1;
      info.k2 = spec.k2;
      info.groups = groups;
      info.stride = spec.stride;
      info.dilation = spec.dilation;
      info.padding = spec.padding;
      std::int64_t ro = 0, co = 0, ko = 0;
      for (const auto& p : parts) {
        for (std::int64_t j = 0; j < p.rank(); ++j) {
          combined.s.push_back(p.s[j]);
          for (std::int64_t i = 0; i < m_g; ++i)
            combined.u.set(ro + i, ko + j, p.u.get(i, j));
          for (std::int64_t i = 0; i < n_g; ++i)
            combined.v.set(ko + j, co + i, p.v.get(j, i));
        }
        info.group_ranks.push_back(p.rank());
        ro += m_g;
        co += n_g;
        ko += p.rank();
      }
      combined.conv = info;
      best.fact = std::move(combined);
    }
  }
  if (!have)
    throw NoTernaryWithinTheta("no lowered form admits a ternary step");
  return best;
}

}  // namespace tsvd
