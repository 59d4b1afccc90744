#include "lillab/functionals.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <set>

namespace lillab::functionals {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

long aligned_count(double span, double mesh, const char* what) {
  const auto k = std::lround(span / mesh);
  if (k < 0 || std::abs(static_cast<double>(k) * mesh - span) >
                   1e-9 * std::max(1.0, std::abs(span)))
    throw ValidationError(std::string(what) + " must be a whole number of mesh steps");
  return k;
}

long steps_per_unit_of(double mesh) {
  require(mesh > 0.0 && mesh <= 1.0, "mesh must lie in (0, 1]");
  const long spu = std::lround(1.0 / mesh);
  require(spu >= 1 && std::abs(static_cast<double>(spu) * mesh - 1.0) <= 1e-9,
          "mesh must divide unit time");
  return spu;
}

double quartile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  std::nth_element(v.begin(), v.begin() + static_cast<long>(lo), v.end());
  const double vlo = v[lo];
  std::nth_element(v.begin(), v.begin() + static_cast<long>(hi), v.end());
  const double vhi = v[hi];
  return vlo + (pos - static_cast<double>(lo)) * (vhi - vlo);
}

std::vector<int> make_checkpoints(int n_max) {
  std::set<int> cps;
  for (int v : {1, 2, 3, 5, 7, 10, 100, 1000, 10000})
    if (v <= n_max) cps.insert(v);
  for (double decade = 10.0; decade <= n_max; decade *= 10.0)
    for (double f : {1.0, 1.5, 2.2, 3.3, 4.7, 6.8}) {
      const int v = static_cast<int>(std::lround(decade * f));
      if (v <= n_max) cps.insert(v);
    }
  cps.insert(n_max);
  return {cps.begin(), cps.end()};
}

using cd = std::complex<double>;

// int_0^t exp(c s) ds, series below |c| t ~ 1e-3 to dodge cancellation.
cd growth_integral(cd c, double t) {
  if (std::abs(c) * t <= 1e-3) {
    cd term = t, acc = t;
    for (int j = 1; j <= 8; ++j) {
      term *= c * t / static_cast<double>(j + 1);
      acc += term;
    }
    return acc;
  }
  return (std::exp(c * t) - 1.0) / c;
}

// int_0^t s exp(a s) ds.
cd confluent_integral(cd a, double t) {
  if (std::abs(a) * t <= 1e-3) {
    cd acc = 0.5 * t * t;
    cd pow_a = 1.0;
    double fact = 1.0;
    for (int j = 1; j <= 8; ++j) {
      pow_a *= a;
      fact *= static_cast<double>(j);
      acc += pow_a * std::pow(t, j + 2) / (fact * static_cast<double>(j + 2));
    }
    return acc;
  }
  const cd e = std::exp(a * t);
  return t * e / a - (e - 1.0) / (a * a);
}

// J(a, b, t) = int_0^t int_0^s exp(a (s - u)) exp(b u) du ds.
cd double_exp_integral(cd a, cd b, double t) {
  if (std::abs(b - a) <= 1e-6 * (1.0 + std::abs(a) + std::abs(b)))
    return confluent_integral(0.5 * (a + b), t);
  return (growth_integral(b, t) - growth_integral(a, t)) / (b - a);
}

}  // namespace

Corrector make_corrector(const models::Model& m, const Observable& g) {
  Corrector out;
  out.rate = models::contraction_rate(m);
  out.lip_bound = corrector::corrector_lipschitz_bound(g, out.rate);
  if (const auto* chain = std::get_if<models::CtmcModel>(&m)) {
    const auto solved = corrector::corrector_ctmc(*chain, g);
    out.chi_vec = solved.chi;
    out.sigma_sq = solved.sigma_sq;
    out.fidelity = solved.residual;
    out.g_mean = solved.pi.dot(
        Eigen::Map<const Eigen::VectorXd>(g.values.data(), chain->n_states()));
    out.chi = [v = solved.chi](const StatePoint& p) { return v(p.index); };
  } else {
    const auto& ou = std::get<models::OuModel>(m);
    auto table = std::make_shared<const corrector::OuCorrectorTable>(ou, g);
    out.table = table;
    out.fidelity = table->node_error_est();
    out.g_mean = table->g_mean();
    out.chi = [table](const StatePoint& p) { return (*table)(p.x); };
    out.sigma_sq = corrector::sigma_pairing(
        g, [&table](double x) { return (*table)(x); }, ou);
  }
  return out;
}

StatePoint PathRecord::state_at(double t) const {
  if (is_chain) {
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    const auto idx = static_cast<std::size_t>(it - jump_times.begin());
    return StatePoint::state(hold_states[idx]);
  }
  const auto k = static_cast<std::size_t>(aligned_count(t, mesh, "query time"));
  require(k < xs.size(), "query time beyond the stored horizon");
  return StatePoint::real(xs[k]);
}

PathRecord simulate_path(const models::Model& m, const StatePoint& init, double horizon,
                         double mesh, rng::Stream& stream) {
  require(horizon > 0.0, "horizon must be positive");
  PathRecord path;
  path.mesh = mesh;
  path.horizon = horizon;
  path.steps_per_unit = steps_per_unit_of(mesh);
  path.n_steps = aligned_count(horizon, mesh, "horizon");

  if (const auto* ou = std::get_if<models::OuModel>(&m)) {
    require(init.kind == SpaceKind::continuous_1d, "diffusion path needs a real start");
    const auto km = ou->kernel(0.0, mesh);  // step variance; mean factor below
    const double factor = std::exp(-ou->gamma * mesh);
    const double sd = std::sqrt(km.variance);
    path.xs.reserve(static_cast<std::size_t>(path.n_steps) + 1);
    double x = init.x;
    path.xs.push_back(x);
    for (long k = 0; k < path.n_steps; ++k) {
      x = factor * x + sd * stream.gaussian();
      path.xs.push_back(x);
    }
    return path;
  }

  const auto& chain = std::get<models::CtmcModel>(m);
  require(init.kind == SpaceKind::discrete && init.index < chain.n_states(),
          "chain path needs a valid state start");
  path.is_chain = true;
  int s = init.index;
  path.hold_states.push_back(s);
  double t = 0.0;
  for (;;) {
    const double rate = -chain.q(s, s);
    t += stream.exponential(rate);
    if (t >= horizon) break;
    double u = stream.uniform01() * rate;
    int next = s;
    for (int j = 0; j < chain.n_states(); ++j) {
      if (j == s || chain.q(s, j) <= 0.0) continue;
      next = j;
      u -= chain.q(s, j);
      if (u < 0.0) break;
    }
    s = next;
    path.jump_times.push_back(t);
    path.hold_states.push_back(s);
  }
  return path;
}

double additive_functional(const PathRecord& path, const Observable& g) {
  if (!path.is_chain) {
    require(g.kind == SpaceKind::continuous_1d, "observable kind mismatch");
    double acc = 0.0;
    for (long k = 0; k < path.n_steps; ++k)
      acc += g.fn(path.xs[static_cast<std::size_t>(k)]) * path.mesh;
    return acc;
  }
  require(g.kind == SpaceKind::discrete, "observable kind mismatch");
  double acc = 0.0, prev = 0.0;
  for (std::size_t j = 0; j < path.jump_times.size(); ++j) {
    acc += g.values[static_cast<std::size_t>(path.hold_states[j])] *
           (path.jump_times[j] - prev);
    prev = path.jump_times[j];
  }
  acc += g.values[static_cast<std::size_t>(path.hold_states.back())] *
         (path.horizon - prev);
  return acc;
}

std::vector<double> integral_at_integers(const PathRecord& path, const Observable& g) {
  const auto n_units = static_cast<long>(std::floor(path.horizon + 1e-9));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_units) + 1);
  out.push_back(0.0);
  if (!path.is_chain) {
    double acc = 0.0;
    for (long k = 0; k < path.n_steps; ++k) {
      acc += g.fn(path.xs[static_cast<std::size_t>(k)]) * path.mesh;
      if ((k + 1) % path.steps_per_unit == 0 &&
          (k + 1) / path.steps_per_unit <= n_units)
        out.push_back(acc);
    }
    return out;
  }
  double acc = 0.0, prev = 0.0;
  std::size_t j = 0;
  for (long n = 1; n <= n_units; ++n) {
    const double boundary = static_cast<double>(n);
    while (j < path.jump_times.size() && path.jump_times[j] <= boundary) {
      acc += g.values[static_cast<std::size_t>(path.hold_states[j])] *
             (path.jump_times[j] - prev);
      prev = path.jump_times[j];
      ++j;
    }
    acc += g.values[static_cast<std::size_t>(path.hold_states[j])] * (boundary - prev);
    prev = boundary;
    out.push_back(acc);
  }
  return out;
}

PathWalker::PathWalker(const models::Model& m, const StatePoint& init, double mesh,
                       rng::Stream stream)
    : model_(&m), stream_(stream), pos_(init), mesh_(mesh) {
  if (const auto* ou = std::get_if<models::OuModel>(&m)) {
    require(init.kind == SpaceKind::continuous_1d, "diffusion walker needs a real start");
    steps_per_unit_of(mesh);
    step_factor_ = std::exp(-ou->gamma * mesh);
    step_sd_ = std::sqrt(ou->kernel(0.0, mesh).variance);
  } else {
    const auto& chain = std::get<models::CtmcModel>(m);
    require(init.kind == SpaceKind::discrete && init.index < chain.n_states(),
            "chain walker needs a valid state start");
    arm_next_jump();
  }
}

void PathWalker::arm_next_jump() {
  const auto& chain = std::get<models::CtmcModel>(*model_);
  next_jump_ = t_ + stream_.exponential(-chain.q(pos_.index, pos_.index));
}

double PathWalker::advance(const Observable& g, double dt) {
  require(dt > 0.0, "advance needs a positive time step");
  double inc = 0.0;
  if (!std::holds_alternative<models::CtmcModel>(*model_)) {
    const long k = aligned_count(dt, mesh_, "advance step");
    for (long i = 0; i < k; ++i) {
      inc += g.fn(pos_.x) * mesh_;
      pos_.x = step_factor_ * pos_.x + step_sd_ * stream_.gaussian();
    }
    t_ += dt;
    return inc;
  }
  const auto& chain = std::get<models::CtmcModel>(*model_);
  const double target = t_ + dt;
  while (next_jump_ <= target) {
    inc += g.values[static_cast<std::size_t>(pos_.index)] * (next_jump_ - t_);
    t_ = next_jump_;
    const int s = pos_.index;
    const double rate = -chain.q(s, s);
    double u = stream_.uniform01() * rate;
    int next = s;
    for (int j = 0; j < chain.n_states(); ++j) {
      if (j == s || chain.q(s, j) <= 0.0) continue;
      next = j;
      u -= chain.q(s, j);
      if (u < 0.0) break;
    }
    pos_.index = next;
    arm_next_jump();
  }
  inc += g.values[static_cast<std::size_t>(pos_.index)] * (target - t_);
  t_ = target;
  return inc;
}

StatePoint MartingaleTrace::point_at(std::size_t n) const {
  return states.empty() ? StatePoint::real(phi[n]) : StatePoint::state(states[n]);
}

MartingaleTrace martingale_decompose(const PathRecord& path, const Observable& g,
                                     const CorrectorFn& chi) {
  MartingaleTrace tr;
  tr.i_vals = integral_at_integers(path, g);
  const std::size_t n_units = tr.i_vals.size() - 1;
  tr.phi.reserve(n_units + 1);
  tr.chi_vals.reserve(n_units + 1);
  for (std::size_t n = 0; n <= n_units; ++n) {
    const StatePoint p = path.state_at(static_cast<double>(n));
    if (path.is_chain) {
      tr.states.push_back(p.index);
      tr.phi.push_back(static_cast<double>(p.index));
    } else {
      tr.phi.push_back(p.x);
    }
    tr.chi_vals.push_back(chi(p));
  }
  tr.m_vals.reserve(n_units + 1);
  for (std::size_t n = 0; n <= n_units; ++n)
    tr.m_vals.push_back(tr.chi_vals[n] - tr.chi_vals[0] + tr.i_vals[n]);
  tr.z.reserve(n_units);
  for (std::size_t n = 0; n < n_units; ++n)
    tr.z.push_back(tr.m_vals[n + 1] - tr.m_vals[n]);
  return tr;
}

std::vector<FeatureMap> default_feature_maps(const models::Model& m) {
  std::vector<FeatureMap> out;
  out.push_back({"const", [](const StatePoint&) { return 1.0; }});
  if (const auto* chain = std::get_if<models::CtmcModel>(&m)) {
    const int last = chain->n_states() - 1;
    out.push_back({"ind_first",
                   [](const StatePoint& p) { return p.index == 0 ? 1.0 : 0.0; }});
    out.push_back({"ind_last",
                   [last](const StatePoint& p) { return p.index == last ? 1.0 : 0.0; }});
    out.push_back({"coord",
                   [](const StatePoint& p) { return static_cast<double>(p.index); }});
  } else {
    out.push_back({"coord", [](const StatePoint& p) { return p.x; }});
    out.push_back({"square", [](const StatePoint& p) { return p.x * p.x; }});
    out.push_back({"bounded", [](const StatePoint& p) { return std::tanh(p.x); }});
  }
  return out;
}

MartingaleCheck martingale_property_test(const std::vector<MartingaleTrace>& traces,
                                         const std::vector<FeatureMap>& features) {
  require(traces.size() >= 1000, "orthogonality check needs at least 1000 paths");
  require(!features.empty(), "orthogonality check needs at least one feature");
  const std::size_t n_lags = traces.front().z.size();
  require(n_lags >= 1, "traces must cover at least one unit of time");
  for (const auto& tr : traces)
    require(tr.z.size() == n_lags, "traces must share a common horizon");

  MartingaleCheck out;
  out.n_paths = static_cast<int>(traces.size());
  const double p = static_cast<double>(traces.size());
  out.passed = true;
  for (const auto& feat : features) {
    for (std::size_t n = 0; n < n_lags; ++n) {
      double sum = 0.0, sum2 = 0.0;
      for (const auto& tr : traces) {
        const double v = tr.z[n] * feat.fn(tr.point_at(n));
        sum += v;
        sum2 += v * v;
      }
      MartingaleCheck::Cell cell;
      cell.feature = feat.name;
      cell.n = static_cast<int>(n);
      cell.mean = sum / p;
      const double var = std::max(0.0, sum2 / p - cell.mean * cell.mean);
      cell.se = std::sqrt(var / p);
      cell.ratio = cell.se > 0.0
                       ? std::abs(cell.mean) / cell.se
                       : (cell.mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
      cell.ok = std::abs(cell.mean) <= out.threshold * cell.se;
      out.passed = out.passed && cell.ok;
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

HeydeScottReport heyde_scott_diagnostics(const EnsembleSpec& spec, const Observable& g,
                                         double sigma_ref,
                                         const std::vector<double>& epsilons,
                                         double delta) {
  require(spec.n_paths >= 100, "increment diagnostics need at least 100 paths");
  require(spec.horizon >= 2.0, "increment diagnostics need horizon >= 2");
  require(delta > 0.0, "truncation level must be positive");
  require(!epsilons.empty(), "need at least one tail threshold");
  for (double e : epsilons) require(e > 0.0, "tail thresholds must be positive");

  const auto n_units = static_cast<int>(std::floor(spec.horizon + 1e-9));
  const auto n_paths = static_cast<std::size_t>(spec.n_paths);
  const Corrector corr = make_corrector(spec.model, g);

  HeydeScottReport rep;
  rep.checkpoints = make_checkpoints(n_units);
  rep.epsilons = epsilons;
  rep.delta = delta;
  rep.sigma_ref = sigma_ref;
  rep.n_paths = spec.n_paths;
  rep.horizon = spec.horizon;
  const std::size_t n_cps = rep.checkpoints.size();

  // Per-path cumulative sum of Z^2 at each checkpoint; rows are paths.
  std::vector<double> cum_matrix(n_paths * n_cps, 0.0);

  auto walk_path = [&](std::size_t path_idx, auto&& on_increment) {
    rng::Stream stream(spec.seed, rng::stream_id(spec.lane, path_idx));
    const StatePoint x0 = models::sample_initial(spec.model, spec.init, stream);
    PathWalker walker(spec.model, x0, spec.mesh, std::move(stream));
    double i_acc = 0.0;
    const double chi0 = corr.chi(x0);
    double m_prev = 0.0;
    for (int n = 1; n <= n_units; ++n) {
      i_acc += walker.advance(g, 1.0);
      const double m_cur = corr.chi(walker.position()) - chi0 + i_acc;
      on_increment(n, m_cur - m_prev);
      m_prev = m_cur;
    }
  };

  // Pass 1: second moments of the increments, and per-path running averages.
  struct Pass1 {
    std::vector<double> ez2;
  };
  const Pass1 pass1 = parallel::chunked_reduce<Pass1>(
      n_paths, static_cast<unsigned>(spec.threads),
      [&](std::size_t i, Pass1& acc) {
        if (acc.ez2.empty()) acc.ez2.assign(static_cast<std::size_t>(n_units), 0.0);
        double cum = 0.0;
        std::size_t cp = 0;
        walk_path(i, [&](int n, double z) {
          const double z2 = z * z;
          acc.ez2[static_cast<std::size_t>(n - 1)] += z2;
          cum += z2;
          while (cp < n_cps && rep.checkpoints[cp] == n) {
            cum_matrix[i * n_cps + cp] = cum;
            ++cp;
          }
        });
      },
      [](Pass1& total, const Pass1& part) {
        if (part.ez2.empty()) return;
        if (total.ez2.empty()) {
          total.ez2 = part.ez2;
          return;
        }
        for (std::size_t k = 0; k < total.ez2.size(); ++k) total.ez2[k] += part.ez2[k];
      },
      Pass1{});

  std::vector<double> ez2(pass1.ez2);
  for (double& v : ez2) v /= static_cast<double>(n_paths);
  std::vector<double> s_sq(static_cast<std::size_t>(n_units), 0.0);
  double run = 0.0;
  for (std::size_t k = 0; k < ez2.size(); ++k) {
    run += ez2[k];
    s_sq[k] = run;
  }

  // Cross-path statistics at the checkpoints.
  for (std::size_t c = 0; c < n_cps; ++c) {
    const double n = rep.checkpoints[c];
    std::vector<double> col(n_paths);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) {
      const double v = cum_matrix[i * n_cps + c];
      col[i] = v / n;
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / static_cast<double>(n_paths);
    const double var =
        std::max(0.0, sum2 / static_cast<double>(n_paths) - mean * mean);
    rep.s_sq_over_n.push_back(mean / n);
    rep.s_sq_over_n_se.push_back(std::sqrt(var / static_cast<double>(n_paths)) / n);
    rep.b1_median.push_back(quartile(col, 0.5));
    rep.b1_q25.push_back(quartile(col, 0.25));
    rep.b1_q75.push_back(quartile(col, 0.75));
  }

  // Pass 2: truncated fourth moments and tail first moments, replaying the
  // identical paths now that the normalizers s_n are known.
  const std::size_t n_eps = epsilons.size();
  struct Pass2 {
    std::vector<double> b3;        // n_units
    std::vector<double> b4;        // n_eps * n_units
  };
  const Pass2 pass2 = parallel::chunked_reduce<Pass2>(
      n_paths, static_cast<unsigned>(spec.threads),
      [&](std::size_t i, Pass2& acc) {
        if (acc.b3.empty()) {
          acc.b3.assign(static_cast<std::size_t>(n_units), 0.0);
          acc.b4.assign(n_eps * static_cast<std::size_t>(n_units), 0.0);
        }
        walk_path(i, [&](int n, double z) {
          const auto k = static_cast<std::size_t>(n - 1);
          const double s_n = std::sqrt(s_sq[k]);
          if (!(s_n > 0.0)) return;
          const double az = std::abs(z);
          if (az < delta * s_n) acc.b3[k] += az * az * az * az;
          for (std::size_t e = 0; e < n_eps; ++e)
            if (az >= epsilons[e] * s_n) acc.b4[e * static_cast<std::size_t>(n_units) + k] += az;
        });
      },
      [](Pass2& total, const Pass2& part) {
        if (part.b3.empty()) return;
        if (total.b3.empty()) {
          total = part;
          return;
        }
        for (std::size_t k = 0; k < total.b3.size(); ++k) total.b3[k] += part.b3[k];
        for (std::size_t k = 0; k < total.b4.size(); ++k) total.b4[k] += part.b4[k];
      },
      Pass2{});

  // Partial sums of the normalized series at the checkpoints.
  std::vector<double> b3_cum(static_cast<std::size_t>(n_units), 0.0);
  std::vector<std::vector<double>> b4_cum(n_eps,
                                          std::vector<double>(static_cast<std::size_t>(n_units), 0.0));
  double b3_run = 0.0;
  std::vector<double> b4_run(n_eps, 0.0);
  for (std::size_t k = 0; k < static_cast<std::size_t>(n_units); ++k) {
    if (s_sq[k] > 1e-300) {
      b3_run += pass2.b3[k] / static_cast<double>(n_paths) / (s_sq[k] * s_sq[k]);
      for (std::size_t e = 0; e < n_eps; ++e)
        b4_run[e] += pass2.b4[e * static_cast<std::size_t>(n_units) + k] /
                     static_cast<double>(n_paths) / std::sqrt(s_sq[k]);
    }
    b3_cum[k] = b3_run;
    for (std::size_t e = 0; e < n_eps; ++e) b4_cum[e][k] = b4_run[e];
  }
  rep.b4_partial.resize(n_eps);
  for (std::size_t c = 0; c < n_cps; ++c) {
    const auto k = static_cast<std::size_t>(rep.checkpoints[c] - 1);
    rep.b3_partial.push_back(b3_cum[k]);
    for (std::size_t e = 0; e < n_eps; ++e) rep.b4_partial[e].push_back(b4_cum[e][k]);
  }

  // Verdicts. The summability checks ask the last-quarter increment to be a
  // vanishing share of the total; the level checks compare against sigma_ref.
  const double target = sigma_ref * sigma_ref;
  rep.b2_terminal = rep.s_sq_over_n.back();
  rep.b2_terminal_se = rep.s_sq_over_n_se.back();
  rep.b2_ok = std::abs(rep.b2_terminal - target) <= 3.0 * rep.b2_terminal_se + 1e-12;

  std::size_t first_late = 0;
  while (first_late + 1 < n_cps && rep.checkpoints[first_late] < 10) ++first_late;
  const double iqr_late = rep.b1_q75.back() - rep.b1_q25.back();
  const double iqr_early = rep.b1_q75[first_late] - rep.b1_q25[first_late];
  rep.b1_ok = std::abs(rep.b1_median.back() - target) <=
                  std::max(0.1 * target, 4.0 * rep.b2_terminal_se + 1e-9) &&
              (iqr_early <= 0.0 || iqr_late <= 0.6 * iqr_early ||
               rep.checkpoints[first_late] == n_units);

  auto tail_share_small = [n_units](const std::vector<double>& cum) {
    const double total = cum.back();
    if (total <= 0.0) return true;
    const auto k34 = static_cast<std::size_t>((3 * n_units) / 4);
    return cum.back() - cum[k34] <= 0.01 * total;
  };
  rep.b3_ok = tail_share_small(b3_cum);
  rep.b4_ok = true;
  for (std::size_t e = 0; e < n_eps; ++e)
    rep.b4_ok = rep.b4_ok && tail_share_small(b4_cum[e]);

  rep.passed = rep.b1_ok && rep.b2_ok && rep.b3_ok && rep.b4_ok;
  return rep;
}

double exact_second_moment_ctmc(const models::CtmcModel& chain, const Observable& g,
                                int x, double t) {
  require(g.kind == SpaceKind::discrete &&
              static_cast<int>(g.values.size()) == chain.n_states(),
          "observable must live on the chain's state space");
  require(x >= 0 && x < chain.n_states(), "start state out of range");
  require(t >= 0.0, "time must be nonnegative");
  if (t == 0.0) return 0.0;

  const int n = chain.n_states();
  const Eigen::EigenSolver<Eigen::MatrixXd> es(chain.q);
  require(es.info() == Eigen::Success, "eigendecomposition failed");
  const Eigen::MatrixXcd s_mat = es.eigenvectors();
  const Eigen::VectorXcd lam = es.eigenvalues();
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(s_mat);
  const Eigen::MatrixXcd s_inv = lu.solve(Eigen::MatrixXcd::Identity(n, n));
  const double scale = 1.0 + chain.q.cwiseAbs().maxCoeff();
  if (((s_mat * lam.asDiagonal() * s_inv).real() - chain.q).cwiseAbs().maxCoeff() >
      1e-8 * scale)
    throw NumericError("generator is not reliably diagonalizable");

  const Eigen::VectorXcd gv =
      Eigen::Map<const Eigen::VectorXd>(g.values.data(), n).cast<cd>();
  const Eigen::VectorXcd beta = s_inv * gv;
  cd total = 0.0;
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXcd w_k = gv.cwiseProduct(s_mat.col(k));
    const Eigen::VectorXcd alpha = s_inv * w_k;
    for (int mm = 0; mm < n; ++mm)
      total += beta(k) * alpha(mm) * s_mat(x, mm) *
               double_exp_integral(lam(k), lam(mm), t);
  }
  const double value = 2.0 * total.real();
  if (std::abs(total.imag()) > 1e-9 * std::max(1.0, std::abs(total.real())))
    throw NumericError("second-moment evaluation left a nonreal residue");
  return value;
}

double second_moment_quadrature(const models::CtmcModel& chain, const Observable& g,
                                int x, double t, int nodes) {
  require(x >= 0 && x < chain.n_states(), "start state out of range");
  require(t >= 0.0, "time must be nonnegative");
  if (t == 0.0) return 0.0;
  const int n = chain.n_states();
  const Eigen::VectorXd gv = Eigen::Map<const Eigen::VectorXd>(g.values.data(), n);
  quad::GaussLegendre gl(nodes);
  const double outer = gl.integrate(0.0, t, [&](double s) {
    return gl.integrate(0.0, s, [&](double u) {
      const Eigen::VectorXd inner = gv.cwiseProduct(chain.apply_transition(s - u, gv));
      return chain.apply_transition(u, inner)(x);
    });
  });
  return 2.0 * outer;
}

SecondMomentMc second_moment_mc(const EnsembleSpec& spec, const Observable& g,
                                double t) {
  require(spec.n_paths >= 2, "need at least two paths");
  require(t > 0.0 && t <= spec.horizon + 1e-9, "evaluation time must fit the horizon");
  struct Acc {
    double sum = 0.0, sum2 = 0.0;
  };
  const Acc acc = parallel::chunked_reduce<Acc>(
      static_cast<std::size_t>(spec.n_paths), static_cast<unsigned>(spec.threads),
      [&](std::size_t i, Acc& a) {
        rng::Stream stream(spec.seed, rng::stream_id(spec.lane, i));
        const StatePoint x0 = models::sample_initial(spec.model, spec.init, stream);
        PathWalker walker(spec.model, x0, spec.mesh, std::move(stream));
        const double v = walker.advance(g, t);
        a.sum += v * v;
        a.sum2 += v * v * v * v;
      },
      [](Acc& total, const Acc& part) {
        total.sum += part.sum;
        total.sum2 += part.sum2;
      },
      Acc{});
  SecondMomentMc out;
  out.n_paths = spec.n_paths;
  const double p = static_cast<double>(spec.n_paths);
  out.mean = acc.sum / p;
  const double var = std::max(0.0, acc.sum2 / p - out.mean * out.mean);
  out.se = std::sqrt(var / p);
  return out;
}

}  // namespace lillab::functionals
