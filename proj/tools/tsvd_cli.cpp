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

#include <cmath>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsvd/tsvd.hpp"

namespace {

using nlohmann::json;

int cmd_decompose(const std::string& input, const std::string& out, double tol,
                  double theta, const std::string& norm, std::int64_t max_rank,
                  std::uint64_t seed, bool strict) {
  tsvd::DenseMatrix w;
  try {
    w = tsvd::read_fmat(input);
  } catch (const tsvd::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  tsvd::DecomposeConfig cfg;
  cfg.tol = tol;
  cfg.theta = theta;
  cfg.error_norm = tsvd::error_norm_from_name(norm);
  cfg.max_rank = max_rank;
  cfg.seed = seed;

  tsvd::TsvdFactorization fact;
  tsvd::DecomposeTrace trace;
  try {
    std::tie(fact, trace) = tsvd::tsvd_decompose(w, cfg);
  } catch (const tsvd::NoTernaryWithinTheta& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  // Singular values live as 32-bit reals on disk; the recorded achieved
  // error is measured after rounding so an eval replay reproduces it.
  for (double& s : fact.s) s = static_cast<double>(static_cast<float>(s));
  const double achieved =
      tsvd::relative_error(w, tsvd::reconstruct(fact), cfg.error_norm);

  try {
    tsvd::write_tsvd(out, {fact, achieved, cfg.error_norm});
  } catch (const tsvd::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  const tsvd::CostReport cost = tsvd::model_cost(fact, 32);
  json j;
  j["k"] = fact.rank();
  j["sparsity"] = fact.sparsity();
  j["achieved_error"] = achieved;
  j["compression_rate"] = cost.compression_rate;
  j["acceleration_rate"] = cost.acceleration_rate;
  j["iterations"] = trace.iters.size();
  j["flagged_non_compressive"] = trace.non_compressive;
  std::cout << j.dump() << "\n";
  std::cerr << "k=" << fact.rank() << " sparsity=" << fact.sparsity()
            << " achieved=" << achieved << " (" << norm << ")\n";
  if (strict && trace.non_compressive) return 3;
  return 0;
}

int cmd_eval(const std::string& fact_path, const std::string& input, int d) {
  tsvd::TsvdFileData fd;
  tsvd::DenseMatrix w;
  try {
    fd = tsvd::read_tsvd(fact_path);
    w = tsvd::read_fmat(input);
  } catch (const tsvd::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  const tsvd::TsvdFactorization& f = fd.fact;
  if (f.u.rows() != w.rows() || f.v.cols() != w.cols()) {
    std::cerr << "error: factorization is " << f.u.rows() << "x" << f.v.cols()
              << " but input is " << w.rows() << "x" << w.cols() << "\n";
    return 2;
  }

  const tsvd::DenseMatrix recon = tsvd::reconstruct(f);
  const double err_s =
      tsvd::relative_error(w, recon, tsvd::ErrorNorm::spectral);
  const double err_f =
      tsvd::relative_error(w, recon, tsvd::ErrorNorm::frobenius);

  tsvd::Vector probe = tsvd::Vector::Ones(w.cols());
  const auto [y, measured] = tsvd::apply(f, probe, d);
  const tsvd::CostReport model = tsvd::model_cost(f, d);
  const bool consistent = tsvd::selfconsistency_check(
      w.rows(), w.cols(), f.rank(), f.sparsity(), d);

  json j;
  j["achieved_spectral"] = err_s;
  j["achieved_frobenius"] = err_f;
  j["recorded_tol"] = fd.tol_achieved;
  j["recorded_norm"] = tsvd::error_norm_name(fd.error_norm);
  j["k"] = f.rank();
  j["sparsity"] = f.sparsity();
  j["d"] = d;
  j["measured"] = {{"adds", measured.adds}, {"muls", measured.muls}};
  j["model"] = {{"adds", model.adds},
                {"muls", model.muls},
                {"equivalent_adds", model.equivalent_adds},
                {"compression_rate", model.compression_rate},
                {"acceleration_rate", model.acceleration_rate}};
  j["counts_match"] =
      measured.adds == model.adds && measured.muls == model.muls;
  j["selfconsistent"] = consistent;
  std::cout << j.dump() << "\n";
  std::cerr << "spectral=" << err_s << " frobenius=" << err_f
            << " k=" << f.rank() << " compression=" << model.compression_rate
            << " (d=" << d << ")\n";
  return 0;
}

int cmd_study(const std::string& study, const std::string& preset,
              const std::string& out, std::uint64_t seed) {
  tsvd::StudyConfig cfg =
      preset == "paper" ? tsvd::paper_preset() : tsvd::quick_preset();
  cfg.seed = seed;
  std::string text;
  std::size_t n_rows = 0;
  try {
    if (study == "tradeoff") {
      const auto rows = tsvd::tradeoff_study(cfg);
      n_rows = rows.size();
      text = tsvd::tradeoff_csv(rows);
    } else if (study == "theta") {
      const auto rows = tsvd::theta_sweep(cfg);
      n_rows = rows.size();
      text = tsvd::theta_csv(rows);
    } else {
      const auto rows = tsvd::conv_tile_study(cfg);
      n_rows = rows.size();
      text = tsvd::conv_csv(rows);
    }
    tsvd::CsvWriter csv;
    csv.text = text;
    csv.save(out);
  } catch (const tsvd::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  json j;
  j["study"] = study;
  j["preset"] = preset;
  j["seed"] = seed;
  j["rows"] = n_rows;
  j["out"] = out;
  std::cout << j.dump() << "\n";
  std::cerr << study << " (" << preset << "): " << n_rows << " rows -> " << out
            << "\n";
  return 0;
}

int cmd_gamma(int n_max) {
  const double cos_pi4 = std::sqrt(0.5);
  json rows = json::array();
  int largest = 0;
  for (int n = 1; n <= n_max; ++n) {
    const double g = tsvd::gamma_bound(n);
    const bool meets = g >= cos_pi4;
    if (meets) largest = n;
    rows.push_back({{"n", n}, {"gamma", g}, {"meets_cos_pi4", meets}});
  }
  json j;
  j["rows"] = rows;
  j["largest_n_meeting"] = largest;
  std::cout << j.dump() << "\n";
  for (int n = 1; n <= n_max; ++n) {
    const double g = tsvd::gamma_bound(n);
    std::cerr << n << "\t" << g;
    if (n == largest) std::cerr << "\t<- last N with gamma >= cos(pi/4)";
    std::cerr << "\n";
  }
  return 0;
}

int cmd_qat_demo(int steps, double eta, double lr, std::uint64_t seed) {
  const tsvd::QatDemoResult r = tsvd::qat_demo(steps, eta, lr, seed);
  for (std::size_t i = 0; i < r.step_loss.size(); ++i)
    std::cerr << "step " << i << " loss " << r.step_loss[i] << "\n";
  std::cerr << "final " << r.final_residual << " ls " << r.ls_residual
            << " ratio " << r.ratio << "\n";
  json j;
  j["steps"] = steps;
  j["final_residual"] = r.final_residual;
  j["ls_residual"] = r.ls_residual;
  j["ratio"] = r.ratio;
  j["final_rank"] = r.final_rank;
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ternary SVD factorization toolkit"};
  app.require_subcommand(1);

  std::string input, out, fact_path;
  double tol = 0.01, theta = 0.576, lr = 0.01, eta = 1.0;
  std::string norm = "spectral", study, preset = "quick";
  std::int64_t max_rank = -1;
  std::uint64_t seed = 0;
  int d = 32, n_max = 60, steps = 200;
  bool strict = false;

  CLI::App* dec = app.add_subcommand("decompose", "Factorize a .fmat matrix");
  dec->add_option("--input", input)->required();
  dec->add_option("--out", out)->required();
  dec->add_option("--tol", tol);
  dec->add_option("--theta", theta);
  dec->add_option("--norm", norm)
      ->check(CLI::IsMember({"spectral", "frobenius"}));
  dec->add_option("--max-rank", max_rank);
  dec->add_option("--seed", seed);
  dec->add_flag("--strict", strict);

  CLI::App* ev = app.add_subcommand("eval", "Evaluate a .tsvd against a .fmat");
  ev->add_option("--fact", fact_path)->required();
  ev->add_option("--input", input)->required();
  ev->add_option("--d", d)->check(CLI::Range(2, 64));

  CLI::App* st = app.add_subcommand("study", "Run a study and write CSV");
  st->add_option("--study", study)
      ->required()
      ->check(CLI::IsMember({"tradeoff", "theta", "conv"}));
  st->add_option("--preset", preset)->check(CLI::IsMember({"paper", "quick"}));
  st->add_option("--out", out)->required();
  std::uint64_t study_seed = 1;
  st->add_option("--seed", study_seed);

  CLI::App* ga = app.add_subcommand("gamma", "Ternarization feasibility table");
  ga->add_option("--n-max", n_max)->check(CLI::Range(1, 100000));

  CLI::App* qd = app.add_subcommand("qat-demo", "Train a toy regression");
  qd->add_option("--steps", steps)->check(CLI::Range(1, 1000000));
  qd->add_option("--eta", eta);
  qd->add_option("--lr", lr);
  std::uint64_t qat_seed = 5;
  qd->add_option("--seed", qat_seed);

  CLI11_PARSE(app, argc, argv);

  if (dec->parsed())
    return cmd_decompose(input, out, tol, theta, norm, max_rank, seed, strict);
  if (ev->parsed()) return cmd_eval(fact_path, input, d);
  if (st->parsed()) return cmd_study(study, preset, out, study_seed);
  if (ga->parsed()) return cmd_gamma(n_max);
  return cmd_qat_demo(steps, eta, lr, qat_seed);
}
