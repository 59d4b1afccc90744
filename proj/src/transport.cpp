#include "lillab/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace lillab::transport {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

struct LogLinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int n_used = 0;
};

LogLinearFit fit_loglinear(const std::vector<double>& ts, const std::vector<double>& ds,
                           double floor) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ds[i] > std::max(floor, 1e-280)) {
      xs.push_back(ts[i]);
      ys.push_back(std::log(ds[i]));
    }
  }
  LogLinearFit fit;
  fit.n_used = static_cast<int>(xs.size());
  if (fit.n_used < 2) return fit;
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  const double vx = sxx - sx * sx / n;
  const double vy = syy - sy * sy / n;
  const double cxy = sxy - sx * sy / n;
  if (vx <= 0.0) return fit;
  fit.slope = cxy / vx;
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.r_squared = vy > 0.0 ? (cxy * cxy) / (vx * vy) : 1.0;
  return fit;
}

// Successive shortest augmenting paths with Johnson potentials on the
// bipartite transportation graph. Supplies/demands are the positive and
// negative parts of mu - nu; for a ground metric the common mass never moves.
double transport_cost(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu,
                      const Metric& metric) {
  const int n = static_cast<int>(mu.size());
  std::vector<int> sup_idx, dem_idx;
  std::vector<double> sup, dem;
  for (int i = 0; i < n; ++i) {
    const double diff = mu(i) - nu(i);
    if (diff > 0.0) {
      sup_idx.push_back(i);
      sup.push_back(diff);
    } else if (diff < 0.0) {
      dem_idx.push_back(i);
      dem.push_back(-diff);
    }
  }
  const int ns = static_cast<int>(sup_idx.size());
  const int nt = static_cast<int>(dem_idx.size());
  if (ns == 0 || nt == 0) return 0.0;

  auto cost = [&](int p, int q) { return metric.at(sup_idx[p], dem_idx[q]); };

  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(ns, nt);
  std::vector<double> phi_s(ns, 0.0), phi_t(nt, 0.0);
  std::vector<double> rem_s = sup, rem_t = dem;
  double outstanding = 0.0;
  for (double v : sup) outstanding += v;

  const double kDone = 1e-15;
  const int node_count = ns + nt;  // suppliers first, then consumers
  std::vector<double> dist(node_count);
  std::vector<char> settled(node_count);
  std::vector<int> parent(node_count);  // for consumers: supplier; for suppliers: consumer

  int guard = 4 * node_count + 64;
  while (outstanding > kDone) {
    if (--guard < 0) throw NumericError("transport solver failed to converge");
    const double inf = std::numeric_limits<double>::infinity();
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(settled.begin(), settled.end(), 0);
    std::fill(parent.begin(), parent.end(), -1);
    for (int p = 0; p < ns; ++p)
      if (rem_s[p] > kDone) dist[p] = 0.0;

    int target = -1;
    for (;;) {
      int u = -1;
      double best = inf;
      for (int v = 0; v < node_count; ++v)
        if (!settled[v] && dist[v] < best) {
          best = dist[v];
          u = v;
        }
      if (u < 0) break;
      settled[u] = 1;
      if (u >= ns && rem_t[u - ns] > kDone) {
        target = u - ns;
        break;
      }
      if (u < ns) {
        const int p = u;
        for (int q = 0; q < nt; ++q) {
          const double rc = std::max(0.0, cost(p, q) + phi_s[p] - phi_t[q]);
          if (dist[p] + rc < dist[ns + q]) {
            dist[ns + q] = dist[p] + rc;
            parent[ns + q] = p;
          }
        }
      } else {
        const int q = u - ns;
        for (int p = 0; p < ns; ++p) {
          if (flow(p, q) <= 0.0) continue;
          const double rc = std::max(0.0, -cost(p, q) + phi_t[q] - phi_s[p]);
          if (dist[ns + q] + rc < dist[p]) {
            dist[p] = dist[ns + q] + rc;
            parent[p] = q;
          }
        }
      }
    }
    if (target < 0) throw NumericError("transport solver found no augmenting path");

    // Bottleneck along the alternating path ending at `target`.
    double amount = rem_t[target];
    for (int q = target;;) {
      const int p = parent[ns + q];
      if (parent[p] < 0) {
        amount = std::min(amount, rem_s[p]);
        break;
      }
      const int q_prev = parent[p];
      amount = std::min(amount, flow(p, q_prev));
      q = q_prev;
    }
    for (int q = target;;) {
      const int p = parent[ns + q];
      flow(p, q) += amount;
      if (parent[p] < 0) {
        rem_s[p] -= amount;
        break;
      }
      const int q_prev = parent[p];
      flow(p, q_prev) -= amount;
      q = q_prev;
    }
    rem_t[target] -= amount;
    outstanding -= amount;

    const double d_star = dist[ns + target];
    for (int p = 0; p < ns; ++p)
      if (dist[p] < inf) phi_s[p] += std::min(dist[p], d_star);
    for (int q = 0; q < nt; ++q)
      if (dist[ns + q] < inf) phi_t[q] += std::min(dist[ns + q], d_star);
  }

  double total = 0.0;
  for (int p = 0; p < ns; ++p)
    for (int q = 0; q < nt; ++q)
      if (flow(p, q) > 0.0) total += flow(p, q) * cost(p, q);
  return total;
}

Eigen::VectorXd measure_vector(const EmpiricalMeasure& nu, int n) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  for (const auto& a : nu.atoms) {
    require(a.point.kind == SpaceKind::discrete && a.point.index < n,
            "measure atoms must be chain states");
    v(a.point.index) += a.weight;
  }
  return v;
}

double v_mean_of(const EmpiricalMeasure& nu, const Metric& metric, const StatePoint& anchor) {
  return nu.expect([&](const StatePoint& p) { return metric(anchor, p); });
}

std::vector<double> sample_pushforward(const models::OuModel& ou, const EmpiricalMeasure& nu,
                                       double t, int n, rng::Stream& stream) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  const bool single = nu.atoms.size() == 1;
  std::vector<double> weights;
  if (!single)
    for (const auto& a : nu.atoms) weights.push_back(a.weight);
  for (int i = 0; i < n; ++i) {
    const int pick = single ? 0 : stream.categorical(weights.data(),
                                                     static_cast<int>(weights.size()));
    const double x0 = nu.atoms[static_cast<std::size_t>(pick)].point.x;
    const auto km = ou.kernel(x0, t);
    out.push_back(km.mean + std::sqrt(km.variance) * stream.gaussian());
  }
  return out;
}

std::vector<double> sample_invariant_ou(const models::OuModel& ou, int n, rng::Stream& stream) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(ou.invariant_sd() * stream.gaussian());
  return out;
}

}  // namespace

StatePoint default_anchor(const models::Model& m) {
  return std::holds_alternative<models::OuModel>(m) ? StatePoint::real(0.0)
                                                    : StatePoint::state(0);
}

double w1_empirical_1d(const std::vector<double>& a, const std::vector<double>& b) {
  require(!a.empty() && !b.empty(), "empirical W1 needs nonempty samples");
  std::vector<double> sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  require(std::isfinite(sa.front()) && std::isfinite(sa.back()) &&
              std::isfinite(sb.front()) && std::isfinite(sb.back()),
          "samples must be finite");
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double total = 0.0;
  double x = std::min(sa.front(), sb.front());
  while (i < sa.size() || j < sb.size()) {
    while (i < sa.size() && sa[i] <= x) ++i;
    while (j < sb.size() && sb[j] <= x) ++j;
    if (i == sa.size() && j == sb.size()) break;
    double next = std::numeric_limits<double>::infinity();
    if (i < sa.size()) next = std::min(next, sa[i]);
    if (j < sb.size()) next = std::min(next, sb[j]);
    const double fa = static_cast<double>(i) / na;
    const double fb = static_cast<double>(j) / nb;
    total += std::abs(fa - fb) * (next - x);
    x = next;
  }
  return total;
}

double w1_discrete(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu, const Metric& metric) {
  require(metric.kind != MetricKind::euclidean_1d, "finite-space W1 needs a finite-space metric");
  const int n = metric.n_states;
  require(mu.size() == n && nu.size() == n, "marginals must match the metric size");
  for (int i = 0; i < n; ++i)
    require(mu(i) >= 0.0 && nu(i) >= 0.0 && std::isfinite(mu(i)) && std::isfinite(nu(i)),
            "marginals must be nonnegative and finite");
  require(std::abs(mu.sum() - 1.0) <= 1e-10, "first marginal must sum to 1");
  require(std::abs(nu.sum() - 1.0) <= 1e-10, "second marginal must sum to 1");
  return transport_cost(mu, nu, metric);
}

MixingCertificate certify_contraction(const models::Model& m,
                                      const std::vector<StatePoint>& x_grid,
                                      const std::vector<StatePoint>& y_grid,
                                      const std::vector<double>& t_grid,
                                      int n_kernel_samples, double tol,
                                      std::optional<double> gamma_for_bound,
                                      std::uint64_t seed) {
  require(!x_grid.empty() && !y_grid.empty() && !t_grid.empty(),
          "contraction certification needs nonempty grids");
  for (double t : t_grid) require(t > 0.0, "contraction grid times must be positive");

  MixingCertificate cert;
  cert.tol = tol;

  const auto* ou = std::get_if<models::OuModel>(&m);
  const auto* chain = std::get_if<models::CtmcModel>(&m);
  const Metric metric = ou ? Metric::euclidean() : chain->metric;

  // Distances first; the fitted rate may be needed for the bound itself.
  struct PairSeries {
    double xc, yc;
    std::vector<double> ts, ds, rhos;
  };
  std::vector<PairSeries> series;
  std::map<double, Eigen::MatrixXd> transitions;
  if (chain)
    for (double t : t_grid) transitions.emplace(t, chain->transition(t));

  for (const StatePoint& x : x_grid) {
    for (const StatePoint& y : y_grid) {
      const double rho_xy = metric(x, y);
      if (rho_xy == 0.0) continue;  // the bound is vacuous at zero distance
      PairSeries ps;
      ps.xc = ou ? x.x : x.index;
      ps.yc = ou ? y.x : y.index;
      for (double t : t_grid) {
        double d;
        if (ou) {
          // Equal kernel variances: W1 of the two Gaussians is the mean gap.
          d = std::abs(ou->kernel(x.x, t).mean - ou->kernel(y.x, t).mean);
        } else {
          const Eigen::MatrixXd& pt = transitions.at(t);
          d = w1_discrete(pt.row(x.index).transpose(), pt.row(y.index).transpose(),
                          metric);
        }
        ps.ts.push_back(t);
        ps.ds.push_back(d);
        ps.rhos.push_back(rho_xy);
      }
      series.push_back(std::move(ps));
    }
  }
  require(!series.empty(), "all grid pairs coincide; nothing to certify");

  double slope_sum = 0.0;
  int slope_count = 0;
  double worst_r2 = 1.0;
  for (const auto& ps : series) {
    const LogLinearFit fit = fit_loglinear(ps.ts, ps.ds, 0.0);
    if (fit.n_used >= 2) {
      slope_sum += fit.slope;
      ++slope_count;
      worst_r2 = std::min(worst_r2, fit.r_squared);
    }
  }
  cert.gamma_hat = slope_count > 0 ? -slope_sum / slope_count : 0.0;
  cert.r_squared = slope_count > 0 ? worst_r2 : 0.0;
  cert.gamma_nominal = gamma_for_bound ? *gamma_for_bound
                                       : (ou ? ou->gamma : cert.gamma_hat);

  cert.max_ratio_violation = -std::numeric_limits<double>::infinity();
  for (const auto& ps : series) {
    for (std::size_t k = 0; k < ps.ts.size(); ++k) {
      const double bound = std::exp(-cert.gamma_nominal * ps.ts[k]) * ps.rhos[k];
      const double ratio = ps.ds[k] / bound;
      cert.grid.push_back({ps.xc, ps.yc, ps.ts[k], ps.ds[k], bound, ratio});
      cert.max_ratio_violation = std::max(cert.max_ratio_violation, ratio - 1.0);
    }
  }

  // Measure-level contraction on a secondary grid: uniform mixtures over the
  // two point grids.
  const StatePoint anchor = default_anchor(m);
  std::vector<EmpiricalMeasure::Atom> atoms1, atoms2;
  for (const StatePoint& x : x_grid) atoms1.push_back({x, 1.0});
  for (const StatePoint& y : y_grid) atoms2.push_back({y, 1.0});
  const EmpiricalMeasure nu1(std::move(atoms1)), nu2(std::move(atoms2));
  const double vsum = v_mean_of(nu1, metric, anchor) + v_mean_of(nu2, metric, anchor);
  bool measures_ok = true;
  for (double t : t_grid) {
    MixingCertificate::MeasureCheck mc;
    mc.t = t;
    mc.bound = std::exp(-cert.gamma_nominal * t) * vsum;
    if (chain) {
      const Eigen::MatrixXd& pt = transitions.at(t);
      const Eigen::VectorXd m1 = pt.transpose() * measure_vector(nu1, chain->n_states());
      const Eigen::VectorXd m2 = pt.transpose() * measure_vector(nu2, chain->n_states());
      mc.distance = w1_discrete(m1, m2, metric);
      mc.noise_scale = 0.0;
      mc.ok = mc.distance <= mc.bound + tol;
    } else {
      rng::Stream s1(seed, rng::stream_id(rng::lane::kTransport, 4 * cert.measure_checks.size()));
      rng::Stream s2(seed, rng::stream_id(rng::lane::kTransport, 4 * cert.measure_checks.size() + 1));
      rng::Stream s3(seed, rng::stream_id(rng::lane::kTransport, 4 * cert.measure_checks.size() + 2));
      rng::Stream s4(seed, rng::stream_id(rng::lane::kTransport, 4 * cert.measure_checks.size() + 3));
      const auto a = sample_pushforward(*ou, nu1, t, n_kernel_samples, s1);
      const auto b = sample_pushforward(*ou, nu2, t, n_kernel_samples, s2);
      mc.distance = w1_empirical_1d(a, b);
      const auto na = sample_pushforward(*ou, nu1, t, n_kernel_samples, s3);
      const auto nb = sample_pushforward(*ou, nu1, t, n_kernel_samples, s4);
      mc.noise_scale = w1_empirical_1d(na, nb);
      mc.ok = mc.distance <= mc.bound + 3.0 * mc.noise_scale;
    }
    measures_ok = measures_ok && mc.ok;
    cert.measure_checks.push_back(mc);
  }

  cert.passed = cert.max_ratio_violation <= tol && measures_ok;
  return cert;
}

ErgodicityReport certify_ergodicity(const models::Model& m, const EmpiricalMeasure& nu,
                                    const std::vector<double>& t_grid, int samples_per_t,
                                    std::uint64_t seed) {
  require(!t_grid.empty(), "ergodicity certification needs a time grid");
  for (std::size_t k = 1; k < t_grid.size(); ++k)
    require(t_grid[k] > t_grid[k - 1], "time grid must be strictly increasing");

  ErgodicityReport rep;
  rep.times = t_grid;
  rep.samples_per_t = samples_per_t;
  const StatePoint anchor = default_anchor(m);

  if (const auto* chain = std::get_if<models::CtmcModel>(&m)) {
    const Eigen::VectorXd pi = chain->invariant_vector();
    const Eigen::VectorXd nu_vec = measure_vector(nu, chain->n_states());
    rep.v_mean = v_mean_of(nu, chain->metric, anchor);
    for (double t : t_grid) {
      const Eigen::VectorXd nu_t = chain->transition(t).transpose() * nu_vec;
      rep.distances.push_back(w1_discrete(nu_t, pi, chain->metric));
    }
    rep.noise_floor = 0.0;
  } else {
    const auto& ou = std::get<models::OuModel>(m);
    rep.v_mean = v_mean_of(nu, Metric::euclidean(), anchor);
    require(samples_per_t >= 100, "empirical W1 needs a reasonable sample budget");
    rng::Stream noise_a(seed, rng::stream_id(rng::lane::kTransport, 1 << 20));
    rng::Stream noise_b(seed, rng::stream_id(rng::lane::kTransport, (1 << 20) + 1));
    rep.noise_floor = 3.0 * w1_empirical_1d(sample_invariant_ou(ou, samples_per_t, noise_a),
                                            sample_invariant_ou(ou, samples_per_t, noise_b));
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      rng::Stream push(seed, rng::stream_id(rng::lane::kTransport, (2 << 20) + k));
      rng::Stream inv(seed, rng::stream_id(rng::lane::kTransport, (3 << 20) + k));
      const auto a = sample_pushforward(ou, nu, t_grid[k], samples_per_t, push);
      const auto b = sample_invariant_ou(ou, samples_per_t, inv);
      rep.distances.push_back(w1_empirical_1d(a, b));
    }
  }

  const LogLinearFit fit = fit_loglinear(rep.times, rep.distances, rep.noise_floor);
  rep.fitted_slope = fit.slope;
  rep.fitted_intercept = fit.intercept;
  rep.n_fit_points = fit.n_used;
  rep.fitted_C = std::exp(fit.intercept) / (rep.v_mean + 1.0);
  return rep;
}

MomentReport certify_moments(const models::Model& m, const models::InitialLaw& mu,
                             const LyapunovConfig& cfg, const std::vector<double>& t_grid,
                             int samples_per_t, std::uint64_t seed) {
  require(!t_grid.empty(), "moment certification needs a time grid");
  MomentReport rep;
  rep.times = t_grid;
  const StatePoint anchor = cfg.anchor;

  if (const auto* chain = std::get_if<models::CtmcModel>(&m)) {
    rep.exact = true;
    Eigen::VectorXd mu_vec;
    if (const auto* p = std::get_if<StatePoint>(&mu)) {
      mu_vec = measure_vector(EmpiricalMeasure::dirac(*p), chain->n_states());
    } else if (const auto* e = std::get_if<EmpiricalMeasure>(&mu)) {
      mu_vec = measure_vector(*e, chain->n_states());
    } else {
      mu_vec = chain->invariant_vector();
    }
    Eigen::VectorXd v_pow(chain->n_states());
    for (int i = 0; i < chain->n_states(); ++i)
      v_pow(i) = std::pow(chain->metric(anchor, StatePoint::state(i)), cfg.zeta);
    for (double t : t_grid) {
      const Eigen::VectorXd mu_t = chain->transition(t).transpose() * mu_vec;
      rep.values.push_back(mu_t.dot(v_pow));
      rep.std_errors.push_back(0.0);
    }
  } else {
    const auto& ou = std::get<models::OuModel>(m);
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      rng::Stream stream(seed, rng::stream_id(rng::lane::kMoments, k));
      double sum = 0.0, sum2 = 0.0;
      for (int i = 0; i < samples_per_t; ++i) {
        double x0;
        if (const auto* p = std::get_if<StatePoint>(&mu)) {
          x0 = p->x;
        } else if (const auto* e = std::get_if<EmpiricalMeasure>(&mu)) {
          std::vector<double> w;
          for (const auto& a : e->atoms) w.push_back(a.weight);
          x0 = e->atoms[static_cast<std::size_t>(
                            stream.categorical(w.data(), static_cast<int>(w.size())))]
                   .point.x;
        } else {
          x0 = ou.invariant_sd() * stream.gaussian();
        }
        const auto km = ou.kernel(x0, t_grid[k]);
        const double y = km.mean + std::sqrt(km.variance) * stream.gaussian();
        const double val = std::pow(std::abs(y - anchor.x), cfg.zeta);
        sum += val;
        sum2 += val * val;
      }
      const double mean = sum / samples_per_t;
      const double var = std::max(0.0, sum2 / samples_per_t - mean * mean);
      rep.values.push_back(mean);
      rep.std_errors.push_back(std::sqrt(var / samples_per_t));
    }
  }

  const Metric metric = std::holds_alternative<models::CtmcModel>(m)
                            ? std::get<models::CtmcModel>(m).metric
                            : Metric::euclidean();
  rep.stationary_level =
      models::moment(models::invariant_measure(m), cfg, cfg.zeta, metric);
  rep.max_value = *std::max_element(rep.values.begin(), rep.values.end());
  rep.burnin_index = static_cast<int>(rep.times.size() / 2);
  rep.settles_after_burnin = true;
  for (std::size_t k = static_cast<std::size_t>(rep.burnin_index); k + 1 < rep.values.size(); ++k) {
    const double slack = 3.0 * (rep.std_errors[k] + rep.std_errors[k + 1]) + 1e-12;
    const double gap_k = std::abs(rep.values[k] - rep.stationary_level);
    const double gap_next = std::abs(rep.values[k + 1] - rep.stationary_level);
    if (gap_next > gap_k + slack) rep.settles_after_burnin = false;
  }
  return rep;
}

CesaroReport cesaro_convergence(const models::Model& m, const EmpiricalMeasure& nu,
                                const Observable& f, double horizon, double mesh,
                                int n_samples, std::uint64_t seed) {
  require(horizon > 0.0 && mesh > 0.0 && mesh < horizon, "need 0 < mesh < horizon");
  CesaroReport rep;
  rep.f_mean_invariant = models::measure_mean(f, models::invariant_measure(m));

  std::vector<double> s_grid;
  double effective_mesh = mesh;
  if (std::holds_alternative<models::OuModel>(m)) {
    // Each grid node costs n_samples kernel draws; coarsen so the Cesaro
    // integrand stays affordable without changing the reported quantity.
    const double min_mesh = horizon / 512.0;
    effective_mesh = std::max(mesh, min_mesh);
  }
  const auto n_steps = static_cast<std::size_t>(std::ceil(horizon / effective_mesh - 1e-9));
  for (std::size_t k = 0; k <= n_steps; ++k)
    s_grid.push_back(std::min(horizon, static_cast<double>(k) * effective_mesh));

  std::vector<double> integrand;
  integrand.reserve(s_grid.size());
  if (const auto* chain = std::get_if<models::CtmcModel>(&m)) {
    Eigen::VectorXd fv = Eigen::Map<const Eigen::VectorXd>(
        f.values.data(), static_cast<int>(f.values.size()));
    Eigen::VectorXd nu_s = measure_vector(nu, chain->n_states());
    const Eigen::MatrixXd step = chain->transition(effective_mesh).transpose();
    for (std::size_t k = 0; k < s_grid.size(); ++k) {
      integrand.push_back(nu_s.dot(fv));
      if (k + 1 < s_grid.size()) nu_s = step * nu_s;
    }
  } else {
    const auto& ou = std::get<models::OuModel>(m);
    for (std::size_t k = 0; k < s_grid.size(); ++k) {
      if (s_grid[k] == 0.0) {
        integrand.push_back(nu.expect([&](const StatePoint& p) { return f(p); }));
        continue;
      }
      rng::Stream stream(seed, rng::stream_id(rng::lane::kTransport, (4 << 20) + k));
      const auto xs = sample_pushforward(ou, nu, s_grid[k], n_samples, stream);
      double acc = 0.0;
      for (double x : xs) acc += f.fn(x);
      integrand.push_back(acc / static_cast<double>(xs.size()));
    }
  }

  double cum = 0.0;
  for (std::size_t k = 1; k < s_grid.size(); ++k) {
    cum += 0.5 * (integrand[k - 1] + integrand[k]) * (s_grid[k] - s_grid[k - 1]);
    rep.times.push_back(s_grid[k]);
    rep.averages.push_back(cum / s_grid[k]);
    rep.gaps.push_back(std::abs(cum / s_grid[k] - rep.f_mean_invariant));
  }

  const std::size_t tail_start = rep.times.size() / 2;
  for (std::size_t k = tail_start; k < rep.times.size(); ++k)
    rep.c_fit = std::max(rep.c_fit, rep.gaps[k] * rep.times[k]);
  const std::size_t early = std::min<std::size_t>(rep.gaps.size() - 1, rep.gaps.size() / 10);
  rep.gap_shrinks = rep.gaps.back() <= rep.gaps[early] + 1e-12;
  return rep;
}

LipPropReport lipschitz_propagation_check(const models::Model& m,
                                          const BivariateObservable& f, double s1,
                                          double s2, const std::vector<StatePoint>& x_grid,
                                          double gamma, double tol) {
  require(0.0 < s1 && s1 < s2, "need 0 < s1 < s2");
  require(x_grid.size() >= 2 || std::holds_alternative<models::CtmcModel>(m),
          "finite differences need at least two grid points");
  LipPropReport rep;
  rep.bound = f.lip1 * std::exp(-gamma * s1) + f.lip2 * std::exp(-gamma * s2);

  std::vector<double> values;
  std::vector<StatePoint> points;
  Metric metric = Metric::euclidean();

  if (const auto* chain = std::get_if<models::CtmcModel>(&m)) {
    metric = chain->metric;
    const Eigen::MatrixXd p1 = chain->transition(s1);
    const Eigen::MatrixXd p2 = chain->transition(s2 - s1);
    const Eigen::VectorXd inner = p2.cwiseProduct(f.table).rowwise().sum();
    const Eigen::VectorXd outer = p1 * inner;
    for (int i = 0; i < chain->n_states(); ++i) {
      points.push_back(StatePoint::state(i));
      values.push_back(outer(i));
    }
  } else {
    const auto& ou = std::get<models::OuModel>(m);
    quad::GaussHermite gh(64);
    for (const StatePoint& x : x_grid) {
      const auto k1 = ou.kernel(x.x, s1);
      const double val = gh.expect(k1.mean, std::sqrt(k1.variance), [&](double y) {
        const auto k2 = ou.kernel(y, s2 - s1);
        return gh.expect(k2.mean, std::sqrt(k2.variance),
                         [&](double z) { return f.fn(y, z); });
      });
      points.push_back(x);
      values.push_back(val);
    }
  }

  for (std::size_t a = 0; a < points.size(); ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      const double rho = metric(points[a], points[b]);
      if (rho == 0.0) continue;
      rep.estimate = std::max(rep.estimate, std::abs(values[a] - values[b]) / rho);
    }
  }
  rep.ok = rep.estimate <= rep.bound + tol;
  return rep;
}

}  // namespace lillab::transport
