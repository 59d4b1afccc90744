#include "lillab/lil.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace lillab::lil {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

std::vector<int> log_checkpoints(int lo, int hi, std::initializer_list<int> forced) {
  std::set<int> cps;
  for (int v = lo; v <= std::min(hi, lo + 9); ++v) cps.insert(v);
  for (double decade = 10.0; decade <= hi; decade *= 10.0)
    for (double f : {1.0, 1.3, 1.6, 2.2, 3.3, 4.7, 6.8}) {
      const int v = static_cast<int>(std::lround(decade * f));
      if (v >= lo && v <= hi) cps.insert(v);
    }
  for (int v : forced)
    if (v >= lo && v <= hi) cps.insert(v);
  cps.insert(hi);
  return {cps.begin(), cps.end()};
}

double column_quantile(const std::vector<double>& matrix, std::size_t n_rows,
                       std::size_t n_cols, std::size_t col, double q) {
  std::vector<double> v(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) v[i] = matrix[i * n_cols + col];
  const double pos = q * static_cast<double>(n_rows - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, n_rows - 1);
  std::nth_element(v.begin(), v.begin() + static_cast<long>(lo), v.end());
  const double vlo = v[lo];
  std::nth_element(v.begin(), v.begin() + static_cast<long>(hi), v.end());
  return vlo + (pos - static_cast<double>(lo)) * (v[hi] - vlo);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double envelope_normalizer(double t) {
  require(t > std::exp(1.0), "the normalizer needs t > e");
  return std::sqrt(2.0 * t * std::log(std::log(t)));
}

SigmaTriple sigma_triple(const models::Model& m, const Observable& g,
                         const functionals::Corrector& corr,
                         const models::InitialLaw& init, int n_paths, double horizon,
                         double mesh, std::uint64_t seed, int threads) {
  require(n_paths >= 100, "variance estimation needs at least 100 paths");
  require(horizon >= 2.0, "variance estimation needs horizon >= 2");
  const auto n_units = static_cast<int>(std::floor(horizon + 1e-9));
  const auto n_p = static_cast<std::size_t>(n_paths);

  SigmaTriple out;
  out.n_paths = n_paths;
  out.horizon = horizon;
  out.sigma_pairing = std::sqrt(std::max(0.0, corr.sigma_sq));

  // Martingale route: per-path mean of Z_n^2 over the horizon, averaged
  // across an ensemble of its own.
  struct MartAcc {
    double sum = 0.0, sum2 = 0.0;
  };
  const MartAcc mart = parallel::chunked_reduce<MartAcc>(
      n_p, static_cast<unsigned>(threads),
      [&](std::size_t i, MartAcc& acc) {
        rng::Stream stream(seed, rng::stream_id(rng::lane::kSigmaMart, i));
        const StatePoint x0 = models::sample_initial(m, init, stream);
        functionals::PathWalker walker(m, x0, mesh, std::move(stream));
        const double chi0 = corr.chi(x0);
        double i_acc = 0.0, m_prev = 0.0, z2_sum = 0.0;
        for (int n = 1; n <= n_units; ++n) {
          i_acc += walker.advance(g, 1.0);
          const double m_cur = corr.chi(walker.position()) - chi0 + i_acc;
          const double z = m_cur - m_prev;
          z2_sum += z * z;
          m_prev = m_cur;
        }
        const double path_mean = z2_sum / static_cast<double>(n_units);
        acc.sum += path_mean;
        acc.sum2 += path_mean * path_mean;
      },
      [](MartAcc& total, const MartAcc& part) {
        total.sum += part.sum;
        total.sum2 += part.sum2;
      },
      MartAcc{});
  const double mart_mean = mart.sum / static_cast<double>(n_p);
  const double mart_var =
      std::max(0.0, mart.sum2 / static_cast<double>(n_p) - mart_mean * mart_mean);
  const double mart_se = std::sqrt(mart_var / static_cast<double>(n_p));
  out.sigma_mart = std::sqrt(std::max(0.0, mart_mean));
  out.sigma_mart_se = out.sigma_mart > 0.0 ? mart_se / (2.0 * out.sigma_mart) : mart_se;

  // Growth route: E[I_t^2] / t along a log-spaced grid, from a second
  // ensemble, with the closed-form curve alongside when one exists.
  const std::vector<int> ts = log_checkpoints(1, n_units, {n_units});
  const std::size_t n_ts = ts.size();
  struct GrowthAcc {
    std::vector<double> sum, sum2;
  };
  const GrowthAcc growth = parallel::chunked_reduce<GrowthAcc>(
      n_p, static_cast<unsigned>(threads),
      [&](std::size_t i, GrowthAcc& acc) {
        if (acc.sum.empty()) {
          acc.sum.assign(n_ts, 0.0);
          acc.sum2.assign(n_ts, 0.0);
        }
        rng::Stream stream(seed, rng::stream_id(rng::lane::kSigmaGrowth, i));
        const StatePoint x0 = models::sample_initial(m, init, stream);
        functionals::PathWalker walker(m, x0, mesh, std::move(stream));
        double i_acc = 0.0;
        std::size_t cp = 0;
        for (int n = 1; n <= n_units; ++n) {
          i_acc += walker.advance(g, 1.0);
          while (cp < n_ts && ts[cp] == n) {
            const double v = i_acc * i_acc;
            acc.sum[cp] += v;
            acc.sum2[cp] += v * v;
            ++cp;
          }
        }
      },
      [](GrowthAcc& total, const GrowthAcc& part) {
        if (part.sum.empty()) return;
        if (total.sum.empty()) {
          total = part;
          return;
        }
        for (std::size_t k = 0; k < total.sum.size(); ++k) {
          total.sum[k] += part.sum[k];
          total.sum2[k] += part.sum2[k];
        }
      },
      GrowthAcc{});

  const auto* chain = std::get_if<models::CtmcModel>(&m);
  Eigen::VectorXd init_weights;
  if (chain) {
    init_weights = Eigen::VectorXd::Zero(chain->n_states());
    if (const auto* p = std::get_if<StatePoint>(&init)) {
      init_weights(p->index) = 1.0;
    } else if (const auto* e = std::get_if<EmpiricalMeasure>(&init)) {
      for (const auto& a : e->atoms) init_weights(a.point.index) += a.weight;
    } else {
      init_weights = chain->invariant_vector();
    }
  }
  for (std::size_t k = 0; k < n_ts; ++k) {
    const double t = ts[k];
    const double mean = growth.sum[k] / static_cast<double>(n_p);
    const double var =
        std::max(0.0, growth.sum2[k] / static_cast<double>(n_p) - mean * mean);
    out.growth_times.push_back(t);
    out.growth_values.push_back(mean / t);
    out.growth_se.push_back(std::sqrt(var / static_cast<double>(n_p)) / t);
    if (chain) {
      double exact = 0.0;
      for (int x = 0; x < chain->n_states(); ++x)
        if (init_weights(x) > 0.0)
          exact += init_weights(x) *
                   functionals::exact_second_moment_ctmc(*chain, g, x, t);
      out.growth_exact.push_back(exact / t);
    }
  }
  const double growth_mean = out.growth_values.back();
  const double growth_se = out.growth_se.back();
  out.sigma_growth = std::sqrt(std::max(0.0, growth_mean));
  out.sigma_growth_se =
      out.sigma_growth > 0.0 ? growth_se / (2.0 * out.sigma_growth) : growth_se;

  // Pairwise agreement in joint standard errors; the pairing route is exact
  // up to solver precision and contributes none.
  auto gap_in_se = [](double a, double b, double se) {
    if (se <= 0.0) return a == b ? 0.0 : std::numeric_limits<double>::infinity();
    return std::abs(a - b) / se;
  };
  out.max_pairwise_gap_se = std::max(
      {gap_in_se(out.sigma_pairing, out.sigma_mart, out.sigma_mart_se),
       gap_in_se(out.sigma_pairing, out.sigma_growth, out.sigma_growth_se),
       gap_in_se(out.sigma_mart, out.sigma_growth,
                 std::sqrt(out.sigma_mart_se * out.sigma_mart_se +
                           out.sigma_growth_se * out.sigma_growth_se))});
  out.pairwise_consistent = out.max_pairwise_gap_se <= 4.0;
  return out;
}

DiscretizationReport discretization_gap(const std::vector<functionals::PathRecord>& traces,
                                        const Observable& g) {
  require(!traces.empty(), "interpolation gap needs traces");
  DiscretizationReport rep;
  rep.n_paths = static_cast<int>(traces.size());
  rep.horizon = traces.front().horizon;
  long n_units = std::numeric_limits<long>::max();
  for (const auto& tr : traces) {
    rep.horizon = std::min(rep.horizon, tr.horizon);
    n_units = std::min(n_units, static_cast<long>(std::floor(tr.horizon + 1e-9)));
  }
  require(n_units >= 5, "interpolation gap needs horizon >= 5");

  const std::vector<int> ns = log_checkpoints(3, static_cast<int>(n_units) - 1, {10});
  const std::size_t n_cols = ns.size();
  const std::size_t n_rows = traces.size();
  std::vector<double> gap_matrix(n_rows * n_cols, 0.0);
  std::vector<double> ceiling_matrix(n_rows * n_cols, 0.0);
  rep.ceiling_ok = true;

  for (std::size_t p = 0; p < n_rows; ++p) {
    const auto& tr = traces[p];
    const std::vector<double> i_ints = functionals::integral_at_integers(tr, g);
    for (std::size_t c = 0; c < n_cols; ++c) {
      const int n = ns[c];
      const double a_n = envelope_normalizer(n);
      const double a_n1 = envelope_normalizer(n + 1.0);
      const double i_n = i_ints[static_cast<std::size_t>(n)];
      const double base = i_n / a_n;

      double gap = 0.0;
      auto consider = [&](double t, double i_t) {
        if (t <= std::exp(1.0)) return;
        gap = std::max(gap, std::abs(i_t / envelope_normalizer(t) - base));
      };
      if (tr.is_chain) {
        // Piecewise-linear integral: scan jump times in [n, n+1) plus a
        // sub-unit grid between them.
        double t_cur = n, i_cur = i_n;
        int s = tr.state_at(static_cast<double>(n)).index;
        auto it = std::upper_bound(tr.jump_times.begin(), tr.jump_times.end(),
                                   static_cast<double>(n));
        const double t_end = n + 1.0;
        auto sweep_to = [&](double t_next) {
          for (int j = 1; j <= 4; ++j) {
            const double t_mid = t_cur + (t_next - t_cur) * j / 4.0;
            consider(t_mid, i_cur + g.values[static_cast<std::size_t>(s)] * (t_mid - t_cur));
          }
          i_cur += g.values[static_cast<std::size_t>(s)] * (t_next - t_cur);
          t_cur = t_next;
        };
        while (it != tr.jump_times.end() && *it < t_end) {
          sweep_to(*it);
          const auto idx = static_cast<std::size_t>(it - tr.jump_times.begin());
          s = tr.hold_states[idx + 1];
          ++it;
        }
        sweep_to(t_end);
      } else {
        const long k0 = n * tr.steps_per_unit;
        double i_cur = i_n;
        for (long k = k0; k < k0 + tr.steps_per_unit; ++k) {
          consider(static_cast<double>(k) * tr.mesh, i_cur);
          i_cur += g.fn(tr.xs[static_cast<std::size_t>(k)]) * tr.mesh;
        }
      }

      const double ceiling = g.sup_norm / a_n + std::abs(i_n) * (1.0 / a_n - 1.0 / a_n1);
      gap_matrix[p * n_cols + c] = gap;
      ceiling_matrix[p * n_cols + c] = ceiling;
      if (gap > ceiling + 1e-10 * (1.0 + std::abs(i_n))) rep.ceiling_ok = false;
    }
  }

  rep.ns = ns;
  for (std::size_t c = 0; c < n_cols; ++c) {
    rep.gap_median.push_back(column_quantile(gap_matrix, n_rows, n_cols, c, 0.5));
    rep.gap_q90.push_back(column_quantile(gap_matrix, n_rows, n_cols, c, 0.9));
    rep.ceiling_median.push_back(column_quantile(ceiling_matrix, n_rows, n_cols, c, 0.5));
  }
  rep.median_decreasing = rep.gap_median.back() < rep.gap_median.front();
  rep.terminal_halved = rep.gap_median.back() < 0.5 * rep.gap_median.front();
  rep.passed = rep.ceiling_ok && rep.median_decreasing &&
               (rep.horizon < 1000.0 || rep.terminal_halved);
  return rep;
}

LilEnvelopeReport lil_envelope(const models::Model& m, const Observable& g, double sigma,
                               const models::InitialLaw& init, int n_paths,
                               double horizon, double delta, double mesh,
                               std::uint64_t seed, int threads) {
  require(n_paths >= 100, "envelope tracking needs at least 100 paths");
  require(horizon >= 20.0, "envelope tracking needs horizon >= 20");
  require(delta > 0.0, "envelope margin must be positive");
  LilEnvelopeReport rep;
  rep.sigma = sigma;
  rep.delta = delta;
  rep.envelope_level = 1.0 + delta;
  rep.n_paths = n_paths;
  rep.horizon = horizon;
  if (!(sigma > 1e-12 * std::max(1.0, g.sup_norm))) {
    rep.degenerate = true;
    return rep;
  }

  const auto n_units = static_cast<int>(std::floor(horizon + 1e-9));
  // a_n is defined from n = 3 on; the exceedance verdict starts once
  // ln ln n is positive and the normalizer is meaningfully monotone.
  constexpr int kFirstN = 3;
  const int start_n = std::min(16, n_units);
  rep.envelope_start_n = start_n;
  const std::vector<int> ns = log_checkpoints(kFirstN, n_units, {10, start_n});
  const std::size_t n_cols = ns.size();
  const auto n_rows = static_cast<std::size_t>(n_paths);
  const functionals::Corrector corr = functionals::make_corrector(m, g);

  std::vector<double> sup_matrix(n_rows * n_cols, 0.0);
  std::vector<double> ratio_matrix(n_rows * n_cols, 0.0);
  std::vector<double> mart_matrix(n_rows * n_cols, 0.0);
  std::vector<double> remainder(n_rows, 0.0);

  struct Acc {
    long exceed = 0;
  };
  const Acc acc = parallel::chunked_reduce<Acc>(
      n_rows, static_cast<unsigned>(threads),
      [&](std::size_t i, Acc& a) {
        rng::Stream stream(seed, rng::stream_id(rng::lane::kPaths, i));
        const StatePoint x0 = models::sample_initial(m, init, stream);
        functionals::PathWalker walker(m, x0, mesh, std::move(stream));
        const double chi0 = corr.chi(x0);
        double i_acc = 0.0, sup_i = 0.0, sup_m = 0.0;
        bool exceeded = false;
        std::size_t cp = 0;
        double chi_n = chi0;
        for (int n = 1; n <= n_units; ++n) {
          i_acc += walker.advance(g, 1.0);
          if (n < kFirstN) continue;
          const double a_n = sigma * envelope_normalizer(n);
          chi_n = corr.chi(walker.position());
          const double ratio_i = std::abs(i_acc) / a_n;
          const double ratio_m = std::abs(chi_n - chi0 + i_acc) / a_n;
          sup_i = std::max(sup_i, ratio_i);
          sup_m = std::max(sup_m, ratio_m);
          if (n >= start_n && ratio_i > rep.envelope_level) exceeded = true;
          while (cp < n_cols && ns[cp] == n) {
            sup_matrix[i * n_cols + cp] = sup_i;
            ratio_matrix[i * n_cols + cp] = ratio_i;
            mart_matrix[i * n_cols + cp] = sup_m;
            ++cp;
          }
        }
        remainder[i] = std::abs(chi0 - chi_n) / (sigma * envelope_normalizer(n_units));
        if (exceeded) ++a.exceed;
      },
      [](Acc& total, const Acc& part) { total.exceed += part.exceed; },
      Acc{});

  rep.ns = ns;
  for (std::size_t c = 0; c < n_cols; ++c) {
    rep.ratio_median.push_back(column_quantile(ratio_matrix, n_rows, n_cols, c, 0.5));
    rep.sup_median.push_back(column_quantile(sup_matrix, n_rows, n_cols, c, 0.5));
    rep.sup_q10.push_back(column_quantile(sup_matrix, n_rows, n_cols, c, 0.1));
    rep.sup_q90.push_back(column_quantile(sup_matrix, n_rows, n_cols, c, 0.9));
    rep.mart_sup_median.push_back(column_quantile(mart_matrix, n_rows, n_cols, c, 0.5));
  }
  rep.remainder_median_terminal = column_quantile(remainder, n_rows, 1, 0, 0.5);
  rep.exceed_fraction = static_cast<double>(acc.exceed) / static_cast<double>(n_rows);
  rep.sup_terminal_median = rep.sup_median.back();
  const auto it10 = std::find(ns.begin(), ns.end(), std::min(10, n_units));
  rep.sup_at_10_median =
      it10 != ns.end() ? rep.sup_median[static_cast<std::size_t>(it10 - ns.begin())]
                       : rep.sup_median.front();
  rep.exceed_ok = rep.exceed_fraction <= rep.exceed_limit;
  rep.sup_grows = rep.sup_terminal_median > rep.sup_at_10_median;
  rep.passed = rep.exceed_ok && rep.sup_grows;
  return rep;
}

double ks_statistic_standard_normal(std::vector<double> samples) {
  require(!samples.empty(), "distance needs samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = normal_cdf(samples[i]);
    d = std::max(d, std::max(static_cast<double>(i + 1) / n - f,
                             f - static_cast<double>(i) / n));
  }
  return d;
}

CltProxyReport clt_proxy(const functionals::EnsembleSpec& spec, const Observable& g,
                         double sigma, double t_eval) {
  require(sigma > 0.0, "scaling needs a positive sigma");
  require(t_eval > 0.0 && t_eval <= spec.horizon + 1e-9,
          "evaluation time must fit the horizon");
  require(spec.n_paths >= 100, "distribution check needs at least 100 paths");

  const auto n_rows = static_cast<std::size_t>(spec.n_paths);
  std::vector<double> samples(n_rows, 0.0);
  struct Nothing {};
  parallel::chunked_reduce<Nothing>(
      n_rows, static_cast<unsigned>(spec.threads),
      [&](std::size_t i, Nothing&) {
        rng::Stream stream(spec.seed, rng::stream_id(spec.lane, i));
        const StatePoint x0 = models::sample_initial(spec.model, spec.init, stream);
        functionals::PathWalker walker(spec.model, x0, spec.mesh, std::move(stream));
        samples[i] = walker.advance(g, t_eval) / (sigma * std::sqrt(t_eval));
      },
      [](Nothing&, const Nothing&) {}, Nothing{});

  CltProxyReport rep;
  rep.t_eval = t_eval;
  rep.sigma = sigma;
  rep.n_paths = spec.n_paths;
  double sum = 0.0, sum2 = 0.0;
  for (double v : samples) {
    sum += v;
    sum2 += v * v;
  }
  rep.sample_mean = sum / static_cast<double>(n_rows);
  rep.sample_var =
      std::max(0.0, sum2 / static_cast<double>(n_rows) - rep.sample_mean * rep.sample_mean);
  rep.ks_stat = ks_statistic_standard_normal(samples);
  rep.ks_critical = std::sqrt(-0.5 * std::log(0.005)) / std::sqrt(static_cast<double>(n_rows));
  rep.passed = rep.ks_stat <= rep.ks_critical;
  return rep;
}

}  // namespace lillab::lil
