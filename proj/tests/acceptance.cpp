// Acceptance gate: every release-blocking property of the lab, one verdict
// line per criterion. Tolerances are pinned here and nowhere else; a red
// line means the property genuinely failed at the stated tolerance.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "lillab/functionals.hpp"
#include "lillab/lil.hpp"
#include "lillab/report.hpp"
#include "lillab/transport.hpp"
#include "w1_oracle.hpp"

using namespace lillab;

namespace {

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

models::CtmcModel two_state() {
  Eigen::MatrixXd q(2, 2);
  q << -1, 1, 1, -1;
  return models::CtmcModel(q, Metric::uniform(2));
}

Observable parity() {
  return Observable::from_values("parity", {1.0, -1.0}, Metric::uniform(2));
}

struct Outcome {
  bool passed = false;
  std::string detail;
};

// estimate of the asymptotic variance carried from criterion 2 into 9
double g_sigma_chain = 1.0;

// --- 1. potential solve: exact values, tiny residual, unit pairing ----------

Outcome criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sol = corrector::corrector_ctmc(two_state(), parity());
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0).count();
  const bool chi_ok = std::abs(sol.chi(0) - 0.5) <= 1e-12 &&
                      std::abs(sol.chi(1) + 0.5) <= 1e-12;
  const bool ok = chi_ok && sol.residual < 1e-12 &&
                  std::abs(sol.sigma_sq - 1.0) <= 1e-12 && secs < 1.0;
  return {ok, fmt("chi=(%.15g,%.15g) residual=%.1e sigma_sq=%.15g in %.3fs",
                  sol.chi(0), sol.chi(1), sol.residual, sol.sigma_sq, secs)};
}

// --- 2. three variance estimates agree on both models -----------------------

Outcome criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  const models::Model chain = two_state();
  const auto corr = functionals::make_corrector(chain, parity());
  const auto tc = lil::sigma_triple(chain, parity(), corr, models::InvariantStart{},
                                    100000, 100.0, 0.01, 102, 2);
  g_sigma_chain = tc.sigma_mart;
  const bool chain_ok =
      std::abs(tc.sigma_mart - 1.0) <= 0.02 && std::abs(tc.sigma_growth - 1.0) <= 0.02;

  const models::Model ou = models::OuModel(1.0, std::sqrt(2.0));
  const auto ocorr = functionals::make_corrector(ou, Observable::tanh_obs());
  const auto to = lil::sigma_triple(ou, Observable::tanh_obs(), ocorr,
                                    models::InvariantStart{}, 20000, 50.0, 0.01, 102, 2);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0).count();
  const bool ok = chain_ok && to.pairwise_consistent && secs < 120.0;
  return {ok, fmt("chain mart=%.4f growth=%.4f | scalar pairing=%.4f mart=%.4f "
                  "growth=%.4f gap=%.2fse in %.1fs",
                  tc.sigma_mart, tc.sigma_growth, to.sigma_pairing, to.sigma_mart,
                  to.sigma_growth, to.max_pairwise_gap_se, secs)};
}

// --- 3. closed-form second moment, pinned value, sampled cross-check --------

Outcome criterion_3() {
  const auto chain = two_state();
  const double exact = functionals::exact_second_moment_ctmc(chain, parity(), 0, 1.0);
  const bool exact_ok = std::abs(exact - 0.5676676416183064) <= 1e-9;
  functionals::EnsembleSpec spec{models::Model(chain), models::InvariantStart{},
                                 0.01, 1.0, 100000, 103, rng::lane::kPaths, 2};
  const auto mc = functionals::second_moment_mc(spec, parity(), 1.0);
  const bool mc_ok = std::abs(mc.mean - exact) <= 4.0 * mc.se;
  return {exact_ok && mc_ok,
          fmt("exact=%.15g sampled=%.6f (se %.1e, %.2f se off)", exact, mc.mean,
              mc.se, std::abs(mc.mean - exact) / mc.se)};
}

// --- 4. kernel contraction: exact ratios and a clean fitted rate ------------

Outcome criterion_4() {
  const models::OuModel ou(1.0, std::sqrt(2.0));
  double max_dev = 0.0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      for (int k = 0; k < 10; ++k) {
        const double x = -3.0 + 0.6 * i;
        const double y = -2.7 + 0.6 * j;
        const double t = 0.2 + 0.3 * k;
        if (std::abs(x - y) < 1e-9) continue;
        // equal-variance gaussians: the transport distance is the mean gap
        const double d = std::abs(ou.kernel(x, t).mean - ou.kernel(y, t).mean);
        const double bound = std::exp(-t) * std::abs(x - y);
        max_dev = std::max(max_dev, std::abs(d / bound - 1.0));
      }
    }
  }
  const bool ou_ok = max_dev <= 1e-12;

  const auto chain = two_state();
  const auto cert = transport::certify_contraction(
      models::Model(chain), {StatePoint::state(0), StatePoint::state(1)},
      {StatePoint::state(0), StatePoint::state(1)},
      {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0}, 1000, 1e-9);
  const bool chain_ok =
      std::abs(cert.gamma_hat - 2.0) <= 1e-6 && cert.r_squared > 0.999;
  return {ou_ok && chain_ok,
          fmt("scalar ratio dev=%.1e | chain slope=%.8f r2=%.6f", max_dev,
              -cert.gamma_hat, cert.r_squared)};
}

// --- 5. equilibration rate recovered from point starts ----------------------

Outcome criterion_5() {
  const auto chain_rep = transport::certify_ergodicity(
      models::Model(two_state()), EmpiricalMeasure::dirac(StatePoint::state(0)),
      {0.25, 0.5, 1.0, 1.5, 2.0, 3.0}, 20000, 105);
  const bool chain_ok =
      chain_rep.n_fit_points >= 3 && std::abs(chain_rep.fitted_slope + 2.0) <= 0.2;

  const auto ou_rep = transport::certify_ergodicity(
      models::Model(models::OuModel(1.0, std::sqrt(2.0))),
      EmpiricalMeasure::dirac(StatePoint::real(3.0)),
      {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 3.5, 4.0}, 40000, 105);
  const bool ou_ok =
      ou_rep.n_fit_points >= 3 && std::abs(ou_rep.fitted_slope + 1.0) <= 0.1;
  return {chain_ok && ou_ok,
          fmt("chain slope=%.6f (want -2) | scalar slope=%.4f (want -1, %d pts)",
              chain_rep.fitted_slope, ou_rep.fitted_slope, ou_rep.n_fit_points)};
}

// --- 6. transport solver vs exhaustive enumeration plus metric axioms -------

Outcome criterion_6() {
  rng::Stream s(106, rng::stream_id(rng::lane::kSelfTest, 900));
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + static_cast<int>(s.uniform01() * 3.0);
    const Metric metric =
        s.uniform01() < 0.5 ? Metric::uniform(n) : test_oracle::random_line_metric(n, s);
    const auto mu = test_oracle::random_simplex(n, s, true);
    const auto nu = test_oracle::random_simplex(n, s, true);
    const double got = transport::w1_discrete(mu, nu, metric);
    const double want = test_oracle::w1_tree_enumeration(mu, nu, metric);
    worst = std::max(worst, std::abs(got - want));
  }

  bool axioms = true;
  const Metric metric = test_oracle::random_line_metric(4, s);
  for (int rep = 0; rep < 40; ++rep) {
    const auto a = test_oracle::random_simplex(4, s, false);
    const auto b = test_oracle::random_simplex(4, s, false);
    const auto c = test_oracle::random_simplex(4, s, false);
    const double dab = transport::w1_discrete(a, b, metric);
    axioms = axioms && std::abs(dab - transport::w1_discrete(b, a, metric)) <= 1e-10;
    axioms = axioms && transport::w1_discrete(a, a, metric) <= 1e-12;
    axioms = axioms && dab <= transport::w1_discrete(a, c, metric) +
                                  transport::w1_discrete(c, b, metric) + 1e-10;
  }
  return {worst <= 1e-10 && axioms,
          fmt("max dev vs enumeration=%.2e over 200 instances, axioms %s", worst,
              axioms ? "hold" : "violated")};
}

// --- 7. square-function growth is linear from either start ------------------

Outcome criterion_7() {
  functionals::EnsembleSpec spec{models::Model(two_state()), models::InvariantStart{},
                                 0.01, 1000.0, 4000, 107, rng::lane::kPaths, 2};
  const auto rep = functionals::heyde_scott_diagnostics(spec, parity(), 1.0,
                                                        {0.5, 1.0, 2.0}, 1.0);
  bool points_ok = true;
  std::string pts;
  for (int want : {10, 100, 1000}) {
    for (std::size_t k = 0; k < rep.checkpoints.size(); ++k) {
      if (rep.checkpoints[k] != want) continue;
      const bool here =
          std::abs(rep.s_sq_over_n[k] - 1.0) <= 3.0 * rep.s_sq_over_n_se[k];
      points_ok = points_ok && here;
      pts += fmt(" n=%d:%.4f", want, rep.s_sq_over_n[k]);
    }
  }

  functionals::EnsembleSpec from_zero = spec;
  from_zero.init = StatePoint::state(0);
  from_zero.seed = 1070;
  const auto rep0 = functionals::heyde_scott_diagnostics(from_zero, parity(), 1.0,
                                                         {0.5, 1.0, 2.0}, 1.0);
  const bool same_limit =
      std::abs(rep0.b2_terminal - rep.b2_terminal) <=
      3.0 * (rep0.b2_terminal_se + rep.b2_terminal_se) + 0.01;
  return {points_ok && rep.passed && same_limit,
          fmt("%s | point start terminal=%.4f vs %.4f", pts.c_str() + 1,
              rep0.b2_terminal, rep.b2_terminal)};
}

// --- 8. increment orthogonality, and sensitivity to a broken potential ------

Outcome criterion_8() {
  const models::Model chain = two_state();
  const auto corr = functionals::make_corrector(chain, parity());
  const functionals::CorrectorFn corrupted = [&corr](const StatePoint& p) {
    return corr.chi(p) + (p.index == 0 ? 0.2 : 0.0);
  };

  const int n_paths = 10000;
  std::vector<functionals::MartingaleTrace> good(n_paths), bad(n_paths);
  struct Nothing {};
  parallel::chunked_reduce<Nothing>(
      static_cast<std::size_t>(n_paths), 2,
      [&](std::size_t i, Nothing&) {
        rng::Stream stream(108, rng::stream_id(rng::lane::kPaths, i));
        const StatePoint x0 =
            models::sample_initial(chain, models::InvariantStart{}, stream);
        const auto path = functionals::simulate_path(chain, x0, 6.0, 0.01, stream);
        good[i] = functionals::martingale_decompose(path, parity(), corr.chi);
        bad[i] = functionals::martingale_decompose(path, parity(), corrupted);
      },
      [](Nothing&, const Nothing&) {}, Nothing{});

  const auto features = functionals::default_feature_maps(chain);
  const auto ok_check = functionals::martingale_property_test(good, features);
  const auto bad_check = functionals::martingale_property_test(bad, features);
  double worst = 0.0, bad_worst = 0.0;
  for (const auto& c : ok_check.cells) worst = std::max(worst, c.ratio);
  for (const auto& c : bad_check.cells) bad_worst = std::max(bad_worst, c.ratio);
  return {ok_check.passed && !bad_check.passed,
          fmt("true potential worst=%.2fse (%zu cells); corrupted worst=%.1fse -> %s",
              worst, ok_check.cells.size(), bad_worst,
              bad_check.passed ? "MISSED" : "rejected")};
}

// --- 9. envelope behavior over a long horizon --------------------------------

Outcome criterion_9() {
  const auto t0 = std::chrono::steady_clock::now();
  const models::Model chain = two_state();
  const auto rep = lil::lil_envelope(chain, parity(), g_sigma_chain,
                                     models::InvariantStart{}, 1000, 10000.0, 0.5,
                                     0.01, 109, 2);

  std::vector<functionals::PathRecord> traces(1000);
  struct Nothing {};
  parallel::chunked_reduce<Nothing>(
      traces.size(), 2,
      [&](std::size_t i, Nothing&) {
        rng::Stream stream(1090, rng::stream_id(rng::lane::kPaths, i));
        const StatePoint x0 =
            models::sample_initial(chain, models::InvariantStart{}, stream);
        traces[i] = functionals::simulate_path(chain, x0, 1000.0, 0.01, stream);
      },
      [](Nothing&, const Nothing&) {}, Nothing{});
  const auto disc = lil::discretization_gap(traces, parity());
  double gap10 = 0.0;
  for (std::size_t k = 0; k < disc.ns.size(); ++k)
    if (disc.ns[k] == 10) gap10 = disc.gap_median[k];
  const bool gap_ok = disc.passed && disc.gap_median.back() < gap10;

  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0).count();
  const bool ok = rep.exceed_ok && rep.sup_grows && gap_ok && secs < 600.0;
  return {ok, fmt("exceed=%.3f (limit %.2f from n=%d) | sup med %.3f->%.3f | "
                  "gap med %.4f->%.4f | %.0fs",
                  rep.exceed_fraction, rep.exceed_limit, rep.envelope_start_n,
                  rep.sup_at_10_median, rep.sup_terminal_median, gap10,
                  disc.gap_median.back(), secs)};
}

// --- 10. reports are byte-identical across thread counts --------------------

struct CliRun {
  int code = -1;
  std::string bytes;
};

CliRun run_cli_to_file(const std::string& args, const std::string& out_path) {
  const std::string cmd =
      std::string(LILLAB_CLI_PATH) + " " + args + " --out " + out_path + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return {};
  char buf[4096];
  while (fread(buf, 1, sizeof buf, p) > 0) continue;
  const int status = pclose(p);
  std::ifstream in(out_path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, os.str()};
}

Outcome criterion_10() {
  const auto dir = std::filesystem::temp_directory_path();
  const auto cfg_sigma = (dir / "acc_sigma.json").string();
  const auto cfg_hs = (dir / "acc_hs.json").string();
  std::ofstream(cfg_sigma)
      << R"({"model":{"kind":"chain","q":[[-1.0,1.0],[1.0,-1.0]]},)"
      << R"("observable":{"kind":"values","values":[1.0,-1.0],"name":"parity"},)"
      << R"("horizon":50,"n_paths":3000,"seed":7})";
  std::ofstream(cfg_hs)
      << R"({"model":{"kind":"chain","q":[[-1.0,1.0],[1.0,-1.0]]},)"
      << R"("observable":{"kind":"values","values":[1.0,-1.0],"name":"parity"},)"
      << R"("horizon":1000,"n_paths":300,"seed":7})";

  bool ok = true;
  std::string note;
  for (const auto& [name, cfg] : std::vector<std::pair<std::string, std::string>>{
           {"sigma", cfg_sigma}, {"heyde-scott", cfg_hs}}) {
    std::vector<CliRun> runs;
    for (int threads : {1, 4, 8}) {
      const auto out = (dir / fmt("acc_%s_t%d.json", name.c_str(), threads)).string();
      runs.push_back(run_cli_to_file(
          fmt("%s --config %s --threads %d", name.c_str(), cfg.c_str(), threads), out));
    }
    const bool same = runs[0].bytes == runs[1].bytes && runs[0].bytes == runs[2].bytes &&
                      !runs[0].bytes.empty() && runs[0].code == runs[1].code &&
                      runs[0].code == runs[2].code;
    ok = ok && same;
    note += fmt("%s%s: %s (%zu bytes, exit %d)", note.empty() ? "" : " | ",
                name.c_str(), same ? "identical" : "DIFFER", runs[0].bytes.size(),
                runs[0].code);
  }
  return {ok, note + " | no timestamp emitted by default"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"exact potential, residual, and pairing variance", criterion_1},
      {"variance estimator agreement on both models", criterion_2},
      {"closed-form vs sampled second moment", criterion_3},
      {"kernel contraction ratios and fitted rate", criterion_4},
      {"equilibration rate from point starts", criterion_5},
      {"transport solver vs exhaustive enumeration", criterion_6},
      {"linear square-function growth, both starts", criterion_7},
      {"increment orthogonality and corrupted-potential rejection", criterion_8},
      {"envelope exceedance, growth, and grid-gap decay", criterion_9},
      {"byte-identical reports across thread counts", criterion_10},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, fmt("exception: %s", e.what())};
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0).count();
    if (!out.passed) ++failures;
    std::printf("[%s] %2zu. %s (%.2fs) %s\n", out.passed ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), secs, out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
