#include "lillab/models.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>
#include <limits>
#include <queue>

namespace lillab::models {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

// Strong connectivity of the support graph, forward and reverse BFS from 0.
bool strongly_connected(const Eigen::MatrixXd& q) {
  const int n = static_cast<int>(q.rows());
  auto reachable = [&](bool transpose) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::queue<int> bfs;
    bfs.push(0);
    seen[0] = 1;
    int count = 1;
    while (!bfs.empty()) {
      const int i = bfs.front();
      bfs.pop();
      for (int j = 0; j < n; ++j) {
        const double rate = transpose ? q(j, i) : q(i, j);
        if (i != j && rate > 0.0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = 1;
          ++count;
          bfs.push(j);
        }
      }
    }
    return count == n;
  };
  return reachable(false) && reachable(true);
}

}  // namespace

OuModel::OuModel(double gamma_, double noise_sigma_) : gamma(gamma_), noise_sigma(noise_sigma_) {
  require(std::isfinite(gamma) && gamma > 0.0, "mean-reversion rate must be positive");
  require(std::isfinite(noise_sigma) && noise_sigma > 0.0, "noise level must be positive");
}

double OuModel::invariant_sd() const { return noise_sigma / std::sqrt(2.0 * gamma); }

double OuModel::transition_variance(double t) const {
  return noise_sigma * noise_sigma * (-std::expm1(-2.0 * gamma * t)) / (2.0 * gamma);
}

KernelMoments OuModel::kernel(double x, double t) const {
  require(t >= 0.0, "kernel time must be nonnegative");
  return KernelMoments{x * std::exp(-gamma * t), transition_variance(t)};
}

CtmcModel::CtmcModel(Eigen::MatrixXd q_, Metric metric_)
    : q(std::move(q_)), metric(std::move(metric_)) {
  const int n = static_cast<int>(q.rows());
  require(n >= 2 && q.cols() == n, "generator must be square with at least two states");
  require(metric.kind != MetricKind::euclidean_1d && metric.n_states == n,
          "chain metric must be a finite-space metric of matching size");
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      require(std::isfinite(q(i, j)), "generator entries must be finite");
      if (i != j) require(q(i, j) >= 0.0, "off-diagonal generator entries must be nonnegative");
      row += q(i, j);
    }
    require(std::abs(row) <= 1e-12 * (1.0 + q.cwiseAbs().maxCoeff()),
            "generator rows must sum to zero");
  }
  require(strongly_connected(q), "chain is reducible");
}

Eigen::MatrixXd CtmcModel::transition(double t) const {
  require(t >= 0.0, "transition time must be nonnegative");
  const int n = n_states();
  const double rate_cap = -q.diagonal().minCoeff();
  if (t == 0.0 || rate_cap == 0.0) return Eigen::MatrixXd::Identity(n, n);

  // Keep the Poisson weights representable: split long horizons into factors.
  double lam = rate_cap * t;
  int splits = 1;
  while (lam / splits > 500.0) ++splits;
  const double tt = t / splits;

  const Eigen::MatrixXd k_stoch = Eigen::MatrixXd::Identity(n, n) + q / rate_cap;
  const double mu = rate_cap * tt;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd pow = Eigen::MatrixXd::Identity(n, n);
  double w = std::exp(-mu);
  double cum = w;
  acc += w * pow;
  for (int k = 1; cum < 1.0 - 1e-14; ++k) {
    pow = pow * k_stoch;
    w *= mu / k;
    acc += w * pow;
    cum += w;
    if (k > 100000) throw NumericError("uniformization failed to converge");
  }
  Eigen::MatrixXd result = acc;
  for (int s = 1; s < splits; ++s) result = result * acc;
  return result;
}

Eigen::VectorXd CtmcModel::apply_transition(double t, const Eigen::VectorXd& f) const {
  require(f.size() == n_states(), "observable length must match the chain");
  return transition(t) * f;
}

Eigen::VectorXd CtmcModel::invariant_vector() const {
  const int n = n_states();
  // pi Q = 0 with sum(pi) = 1, solved as an overdetermined least-squares
  // system [Q^T; 1^T] pi = [0; 1].
  Eigen::MatrixXd a(n + 1, n);
  a.topRows(n) = q.transpose();
  a.bottomRows(1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
  b(n) = 1.0;
  Eigen::VectorXd pi = a.colPivHouseholderQr().solve(b);
  const double residual = (pi.transpose() * q).cwiseAbs().maxCoeff();
  if (residual >= 1e-12 * (1.0 + q.cwiseAbs().maxCoeff()) || pi.minCoeff() <= 0.0)
    throw NumericError("invariant vector solve failed its residual certificate");
  pi /= pi.sum();
  return pi;
}

SpaceKind model_space(const Model& m) {
  return std::holds_alternative<OuModel>(m) ? SpaceKind::continuous_1d : SpaceKind::discrete;
}

InvariantMeasure invariant_measure(const Model& m) {
  if (const auto* ou = std::get_if<OuModel>(&m)) return OuInvariant{ou->invariant_sd()};
  return CtmcInvariant{std::get<CtmcModel>(m).invariant_vector()};
}

double measure_mean(const Observable& g, const InvariantMeasure& mu, int quad_nodes) {
  if (const auto* ou = std::get_if<OuInvariant>(&mu)) {
    require(g.kind == SpaceKind::continuous_1d, "observable kind must match the measure");
    quad::GaussHermite gh(quad_nodes);
    return gh.expect(0.0, ou->sd, g.fn);
  }
  const auto& pi = std::get<CtmcInvariant>(mu).pi;
  require(g.kind == SpaceKind::discrete &&
              static_cast<int>(g.values.size()) == pi.size(),
          "observable table must match the chain");
  double acc = 0.0;
  for (int i = 0; i < pi.size(); ++i) acc += pi(i) * g.values[static_cast<std::size_t>(i)];
  return acc;
}

Observable center_observable(const Observable& g, const InvariantMeasure& mu, int quad_nodes) {
  const double mean = measure_mean(g, mu, quad_nodes);
  Observable h = g;
  h.name = g.name + "_centered";
  h.is_centered = true;
  h.sup_norm = g.sup_norm + std::abs(mean);
  if (g.kind == SpaceKind::discrete) {
    for (double& v : h.values) v -= mean;
  } else {
    auto base = g.fn;
    h.fn = [base, mean](double x) { return base(x) - mean; };
  }
  return h;
}

double moment(const InvariantMeasure& mu, const LyapunovConfig& cfg, double r,
              const Metric& metric, int quad_nodes) {
  if (!(r > 0.0)) throw ValidationError("moment order must be positive");
  if (const auto* ou = std::get_if<OuInvariant>(&mu)) {
    require(cfg.anchor.kind == SpaceKind::continuous_1d, "anchor must live in the model space");
    const double x0 = cfg.anchor.x;
    quad::GaussHermite gh(quad_nodes);
    return gh.expect(0.0, ou->sd, [&](double y) { return std::pow(std::abs(y - x0), r); });
  }
  const auto& pi = std::get<CtmcInvariant>(mu).pi;
  require(cfg.anchor.kind == SpaceKind::discrete, "anchor must live in the model space");
  double acc = 0.0;
  for (int i = 0; i < pi.size(); ++i)
    acc += pi(i) * std::pow(metric(cfg.anchor, StatePoint::state(i)), r);
  return acc;
}

StatePoint sample_step(const Model& m, const StatePoint& x, double dt, rng::Stream& stream) {
  require(dt >= 0.0, "step length must be nonnegative");
  if (const auto* ou = std::get_if<OuModel>(&m)) {
    require(x.kind == SpaceKind::continuous_1d, "state kind must match the model");
    if (dt == 0.0) return x;
    const KernelMoments km = ou->kernel(x.x, dt);
    return StatePoint::real(km.mean + std::sqrt(km.variance) * stream.gaussian());
  }
  const auto& chain = std::get<CtmcModel>(m);
  require(x.kind == SpaceKind::discrete && x.index < chain.n_states(),
          "state kind must match the model");
  int s = x.index;
  double remaining = dt;
  for (;;) {
    const double exit_rate = -chain.q(s, s);
    if (exit_rate <= 0.0) break;  // absorbing under this generator
    const double hold = stream.exponential(exit_rate);
    if (hold >= remaining) break;
    remaining -= hold;
    double u = stream.uniform01() * exit_rate;
    int next = -1;
    for (int j = 0; j < chain.n_states(); ++j) {
      if (j == s || chain.q(s, j) <= 0.0) continue;
      next = j;  // falls back to the last reachable state on rounding residue
      u -= chain.q(s, j);
      if (u < 0.0) break;
    }
    s = next;
  }
  return StatePoint::state(s);
}

StatePoint sample_invariant(const Model& m, rng::Stream& stream) {
  if (const auto* ou = std::get_if<OuModel>(&m))
    return StatePoint::real(ou->invariant_sd() * stream.gaussian());
  const auto& chain = std::get<CtmcModel>(m);
  const Eigen::VectorXd pi = chain.invariant_vector();
  return StatePoint::state(stream.categorical(pi.data(), static_cast<int>(pi.size())));
}

StatePoint sample_initial(const Model& m, const InitialLaw& init, rng::Stream& stream) {
  if (const auto* p = std::get_if<StatePoint>(&init)) return *p;
  if (const auto* e = std::get_if<EmpiricalMeasure>(&init)) {
    std::vector<double> w;
    w.reserve(e->atoms.size());
    for (const auto& a : e->atoms) w.push_back(a.weight);
    return e->atoms[static_cast<std::size_t>(
                        stream.categorical(w.data(), static_cast<int>(w.size())))]
        .point;
  }
  return sample_invariant(m, stream);
}

double apply_semigroup(const Model& m, const Observable& f, double t,
                       const StatePoint& x, int quad_nodes) {
  require(t >= 0.0, "semigroup time must be nonnegative");
  if (const auto* ou = std::get_if<OuModel>(&m)) {
    require(f.kind == SpaceKind::continuous_1d && x.kind == SpaceKind::continuous_1d,
            "kind mismatch in semigroup application");
    if (t == 0.0) return f.fn(x.x);
    const KernelMoments km = ou->kernel(x.x, t);
    quad::GaussHermite gh(quad_nodes);
    return gh.expect(km.mean, std::sqrt(km.variance), f.fn);
  }
  const auto& chain = std::get<CtmcModel>(m);
  require(f.kind == SpaceKind::discrete && x.kind == SpaceKind::discrete,
          "kind mismatch in semigroup application");
  Eigen::VectorXd fv = Eigen::Map<const Eigen::VectorXd>(f.values.data(),
                                                         static_cast<int>(f.values.size()));
  return chain.apply_transition(t, fv)(x.index);
}

double continuity_defect(const Model& m, const Observable& f, const StatePoint& x,
                         const std::vector<double>& t_grid) {
  require(!t_grid.empty(), "continuity check needs a time grid");
  double worst = 0.0;
  const double fx = f(x);
  for (double t : t_grid) {
    require(t > 0.0, "continuity grid times must be positive");
    worst = std::max(worst, std::abs(apply_semigroup(m, f, t, x) - fx));
  }
  return worst;
}

double contraction_rate(const Model& m) {
  if (const auto* ou = std::get_if<OuModel>(&m)) return ou->gamma;
  const auto& chain = std::get<CtmcModel>(m);
  const Eigen::EigenSolver<Eigen::MatrixXd> es(chain.q);
  const double scale = 1.0 + chain.q.cwiseAbs().maxCoeff();
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < chain.n_states(); ++i) {
    const auto lambda = es.eigenvalues()(i);
    if (std::abs(lambda) <= 1e-10 * scale) continue;  // the stationary eigenvalue
    gap = std::min(gap, -lambda.real());
  }
  if (!std::isfinite(gap) || gap <= 0.0)
    throw NumericError("generator has no positive spectral gap");
  return gap;
}

}  // namespace lillab::models
