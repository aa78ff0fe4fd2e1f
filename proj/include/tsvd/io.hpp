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

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tsvd/linalg.hpp"
#include "tsvd/ternary.hpp"

namespace tsvd {

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::vector<std::uint8_t>& b, float v) {
  put_u32(b, std::bit_cast<std::uint32_t>(v));
}

struct ByteReader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
  std::string what;

  void need(std::size_t n, const char* field) {
    if (pos + n > buf.size())
      throw IoError(what + ": truncated " + field + " at offset " +
                    std::to_string(pos));
  }
  std::uint8_t u8(const char* field) {
    need(1, field);
    return buf[pos++];
  }
  std::uint16_t u16(const char* field) {
    need(2, field);
    std::uint16_t v = static_cast<std::uint16_t>(buf[pos]) |
                      static_cast<std::uint16_t>(buf[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32(const char* field) {
    return std::bit_cast<float>(u32(field));
  }
  void magic(const char* expect) {
    const std::size_t at = pos;
    need(4, "magic");
    if (std::memcmp(buf.data() + pos, expect, 4) != 0)
      throw IoError(what + ": bad magic at offset " + std::to_string(at) +
                    ", expected \"" + expect + "\"");
    pos += 4;
  }
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_fmat(const DenseMatrix& w) {
  std::vector<std::uint8_t> b;
  b.reserve(16 + static_cast<std::size_t>(w.size()) * 4);
  b.insert(b.end(), {'F', 'M', 'A', 'T'});
  detail::put_u16(b, 1);
  b.push_back(0);  // dtype: 32-bit real
  b.push_back(0);  // flags
  detail::put_u32(b, static_cast<std::uint32_t>(w.rows()));
  detail::put_u32(b, static_cast<std::uint32_t>(w.cols()));
  for (std::int64_t i = 0; i < w.rows(); ++i)
    for (std::int64_t j = 0; j < w.cols(); ++j)
      detail::put_f32(b, static_cast<float>(w(i, j)));
  return b;
}

inline DenseMatrix parse_fmat(const std::vector<std::uint8_t>& buf) {
  detail::ByteReader r{buf, 0, "fmat"};
  r.magic("FMAT");
  const std::uint16_t ver = r.u16("version");
  if (ver != 1)
    throw IoError("fmat: unsupported version " + std::to_string(ver) +
                  " at offset 4");
  const std::uint8_t dtype = r.u8("dtype");
  if (dtype != 0)
    throw IoError("fmat: unsupported dtype " + std::to_string(dtype) +
                  " at offset 6");
  const std::uint8_t flags = r.u8("flags");
  if (flags != 0)
    throw IoError("fmat: unsupported flags " + std::to_string(flags) +
                  " at offset 7");
  const std::uint32_t rows = r.u32("rows");
  const std::uint32_t cols = r.u32("cols");
  const std::size_t want = static_cast<std::size_t>(rows) * cols * 4;
  if (buf.size() - r.pos != want)
    throw IoError("fmat: payload at offset 16 has " +
                  std::to_string(buf.size() - r.pos) + " bytes, expected " +
                  std::to_string(want));
  DenseMatrix w(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) w(i, j) = r.f32("payload");
  return w;
}

struct TsvdFileData {
  TsvdFactorization fact;
  double tol_achieved = 0.0;
  ErrorNorm error_norm = ErrorNorm::spectral;
};

inline const char* error_norm_name(ErrorNorm n) {
  return n == ErrorNorm::spectral ? "spectral" : "frobenius";
}
inline ErrorNorm error_norm_from_name(const std::string& s) {
  if (s == "spectral") return ErrorNorm::spectral;
  if (s == "frobenius") return ErrorNorm::frobenius;
  throw IoError("unknown error norm \"" + s + "\"");
}

inline std::vector<std::uint8_t> serialize_tsvd(const TsvdFileData& d) {
  const TsvdFactorization& f = d.fact;
  nlohmann::json h;
  h["m"] = f.u.rows();
  h["n"] = f.v.cols();
  h["k"] = f.rank();
  h["theta"] = f.theta;
  h["form"] = f.form;
  h["tol_achieved"] = d.tol_achieved;
  h["error_norm"] = error_norm_name(d.error_norm);
  h["sparsity"] = f.sparsity();
  if (f.conv) {
    const ConvInfo& c = *f.conv;
    nlohmann::json j;
    j["c_out"] = c.c_out;
    j["c_in"] = c.c_in;
    j["k1"] = c.k1;
    j["k2"] = c.k2;
    j["groups"] = c.groups;
    j["stride"] = c.stride;
    j["dilation"] = c.dilation;
    j["padding"] = c.padding;
    j["group_ranks"] = c.group_ranks;
    h["conv"] = j;
  }
  const std::string header = h.dump();

  std::vector<std::uint8_t> b;
  b.insert(b.end(), {'T', 'S', 'V', 'D'});
  detail::put_u16(b, 1);
  detail::put_u32(b, static_cast<std::uint32_t>(header.size()));
  b.insert(b.end(), header.begin(), header.end());
  for (double s : f.s) detail::put_f32(b, static_cast<float>(s));
  const auto& up = f.u.payload();
  const auto& vp = f.v.payload();
  b.insert(b.end(), up.begin(), up.end());
  b.insert(b.end(), vp.begin(), vp.end());
  return b;
}

inline TsvdFileData parse_tsvd(const std::vector<std::uint8_t>& buf) {
  detail::ByteReader r{buf, 0, "tsvd"};
  r.magic("TSVD");
  const std::uint16_t ver = r.u16("version");
  if (ver != 1)
    throw IoError("tsvd: unsupported version " + std::to_string(ver) +
                  " at offset 4");
  const std::uint32_t hlen = r.u32("header_len");
  r.need(hlen, "header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(buf.begin() + r.pos, buf.begin() + r.pos + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("tsvd: bad header JSON at offset 10: " + std::string(e.what()));
  }
  r.pos += hlen;

  TsvdFileData d;
  std::int64_t m, n, k;
  try {
    m = h.at("m").get<std::int64_t>();
    n = h.at("n").get<std::int64_t>();
    k = h.at("k").get<std::int64_t>();
    d.fact.theta = h.at("theta").get<double>();
    d.fact.form = h.at("form").get<int>();
    d.tol_achieved = h.at("tol_achieved").get<double>();
    d.error_norm = error_norm_from_name(h.at("error_norm").get<std::string>());
    (void)h.at("sparsity").get<double>();
    if (h.contains("conv")) {
      const nlohmann::json& j = h.at("conv");
      ConvInfo c;
      c.c_out = j.at("c_out").get<int>();
      c.c_in = j.at("c_in").get<int>();
      c.k1 = j.at("k1").get<int>();
      c.k2 = j.at("k2").get<int>();
      c.groups = j.at("groups").get<int>();
      c.stride = j.at("stride").get<std::array<int, 2>>();
      c.dilation = j.at("dilation").get<std::array<int, 2>>();
      c.padding = j.at("padding").get<std::array<int, 2>>();
      c.group_ranks = j.at("group_ranks").get<std::vector<std::int64_t>>();
      d.fact.conv = c;
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("tsvd: bad header field at offset 10: " +
                  std::string(e.what()));
  }
  if (m < 0 || n < 0 || k < 0)
    throw IoError("tsvd: negative dimension in header at offset 10");
  d.fact.source_shape = {m, n};

  d.fact.s.resize(k);
  for (std::int64_t i = 0; i < k; ++i) d.fact.s[i] = r.f32("singular values");

  const std::size_t u_bytes =
      static_cast<std::size_t>(m) * TernaryMatrix::bytes_per_row(k);
  const std::size_t v_bytes =
      static_cast<std::size_t>(k) * TernaryMatrix::bytes_per_row(n);
  r.need(u_bytes, "U payload");
  const std::size_t u_at = r.pos;
  std::vector<std::uint8_t> up(buf.begin() + r.pos, buf.begin() + r.pos + u_bytes);
  r.pos += u_bytes;
  r.need(v_bytes, "V payload");
  const std::size_t v_at = r.pos;
  std::vector<std::uint8_t> vp(buf.begin() + r.pos, buf.begin() + r.pos + v_bytes);
  r.pos += v_bytes;
  if (r.pos != buf.size())
    throw IoError("tsvd: trailing bytes at offset " + std::to_string(r.pos));

  try {
    d.fact.u = TernaryMatrix::from_payload(m, k, std::move(up));
  } catch (const std::exception& e) {
    throw IoError("tsvd: bad U payload at offset " + std::to_string(u_at) +
                  ": " + e.what());
  }
  try {
    d.fact.v = TernaryMatrix::from_payload(k, n, std::move(vp));
  } catch (const std::exception& e) {
    throw IoError("tsvd: bad V payload at offset " + std::to_string(v_at) +
                  ": " + e.what());
  }
  return d;
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> buf(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return buf;
}

inline void write_file(const std::string& path,
                       const std::vector<std::uint8_t>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline void write_fmat(const std::string& path, const DenseMatrix& w) {
  write_file(path, serialize_fmat(w));
}
inline DenseMatrix read_fmat(const std::string& path) {
  return parse_fmat(read_file(path));
}
inline void write_tsvd(const std::string& path, const TsvdFileData& d) {
  write_file(path, serialize_tsvd(d));
}
inline TsvdFileData read_tsvd(const std::string& path) {
  return parse_tsvd(read_file(path));
}

// Shortest decimal that round-trips; used for every float in CSV output so
// identical runs emit identical bytes.
inline std::string format_double(double v) {
  char tmp[64];
  auto [p, ec] = std::to_chars(tmp, tmp + sizeof(tmp), v);
  (void)ec;
  return std::string(tmp, p);
}

struct CsvWriter {
  std::string text;

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) text += ',';
      text += fields[i];
    }
    text += '\n';
  }
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path);
  }
};

}  // namespace tsvd
