#include "lillab/corrector.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace lillab::corrector {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

double v_mean_invariant(const models::Model& m) {
  if (const auto* ou = std::get_if<models::OuModel>(&m))
    return ou->invariant_sd() * std::sqrt(2.0 / M_PI);  // E|N(0, sd^2)|
  const auto& chain = std::get<models::CtmcModel>(m);
  const Eigen::VectorXd pi = chain.invariant_vector();
  double acc = 0.0;
  for (int i = 0; i < chain.n_states(); ++i) acc += pi(i) * chain.metric.at(0, i);
  return acc;
}

double lyapunov_at(const models::Model& m, const StatePoint& x) {
  if (std::holds_alternative<models::OuModel>(m)) return std::abs(x.x);
  const auto& chain = std::get<models::CtmcModel>(m);
  return chain.metric.at(0, x.index);
}

}  // namespace

CtmcCorrector corrector_ctmc(const models::CtmcModel& chain, const Observable& g) {
  require(g.kind == SpaceKind::discrete &&
              static_cast<int>(g.values.size()) == chain.n_states(),
          "observable must live on the chain's state space");
  const int n = chain.n_states();
  CtmcCorrector out;
  out.pi = chain.invariant_vector();
  const Eigen::VectorXd gv =
      Eigen::Map<const Eigen::VectorXd>(g.values.data(), n);
  out.g_centered = gv - Eigen::VectorXd::Constant(n, out.pi.dot(gv));

  // Q is singular (rows sum to zero); border it with the mass constraint
  // <chi, pi> = 0 to pin the solution.
  Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(n + 1, n + 1);
  sys.topLeftCorner(n, n) = chain.q;
  sys.topRightCorner(n, 1).setOnes();
  sys.bottomLeftCorner(1, n) = out.pi.transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs.head(n) = -out.g_centered;
  const Eigen::VectorXd sol = sys.colPivHouseholderQr().solve(rhs);
  out.chi = sol.head(n);
  out.chi.array() -= out.pi.dot(out.chi);  // squeeze out solver roundoff

  out.residual = (chain.q * out.chi + out.g_centered).cwiseAbs().maxCoeff();
  out.sigma_sq = sigma_pairing(out.g_centered, out.chi, out.pi);
  return out;
}

QuadratureResult corrector_quadrature(const models::Model& m, const Observable& g,
                                      const StatePoint& x, double horizon,
                                      double mesh) {
  require(horizon > 0.0 && mesh > 0.0 && mesh <= horizon,
          "need 0 < mesh <= horizon");
  QuadratureResult out{};
  out.horizon = horizon;
  out.rate = models::contraction_rate(m);

  // Orbit evaluator for the centered observable.
  const double g_mean = models::measure_mean(g, models::invariant_measure(m));
  std::function<double(double)> orbit;
  quad::GaussHermite gh(64);
  if (const auto* chain = std::get_if<models::CtmcModel>(&m)) {
    const int n = chain->n_states();
    Eigen::VectorXd gc = Eigen::Map<const Eigen::VectorXd>(g.values.data(), n);
    gc.array() -= g_mean;
    orbit = [chain, gc, idx = x.index](double s) {
      return chain->apply_transition(s, gc)(idx);
    };
  } else {
    const auto& ou = std::get<models::OuModel>(m);
    orbit = [&ou, &g, &gh, g_mean, x0 = x.x](double s) {
      if (s == 0.0) return g.fn(x0) - g_mean;
      const auto km = ou.kernel(x0, s);
      return gh.expect(km.mean, std::sqrt(km.variance),
                       [&](double y) { return g.fn(y); }) -
             g_mean;
    };
  }

  // Geometric panels: the orbit decays exponentially, so resolution near zero
  // matters most. Each panel gets Simpson plus a two-half refinement; the
  // Richardson-extrapolated value is kept and the correction size recorded.
  double a = 0.0;
  double fa = orbit(0.0);
  double width = mesh;
  while (a < horizon) {
    const double b = std::min(horizon, a + width);
    const double mid = 0.5 * (a + b);
    const double fb = orbit(b);
    const double fm = orbit(mid);
    const double coarse = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double f14 = orbit(a + 0.25 * (b - a));
    const double f34 = orbit(a + 0.75 * (b - a));
    const double fine = (b - a) / 12.0 * (fa + 4.0 * f14 + 2.0 * fm + 4.0 * f34 + fb);
    const double corr = (fine - coarse) / 15.0;
    out.value += fine + corr;
    out.error_est += std::abs(corr);
    ++out.n_panels;
    a = b;
    fa = fb;
    width *= 1.15;
  }

  const double c_prop = v_mean_invariant(m) + 1.0;
  out.tail_bound = c_prop * g.lip_const / out.rate * std::exp(-out.rate * horizon) *
                   (lyapunov_at(m, x) + 1.0);
  return out;
}

double corrector_lipschitz_bound(const Observable& g, double gamma) {
  require(gamma > 0.0, "mixing rate must be positive");
  return g.lip_const / gamma;
}

double sigma_pairing(const Eigen::VectorXd& g_centered, const Eigen::VectorXd& chi,
                     const Eigen::VectorXd& pi) {
  require(g_centered.size() == chi.size() && chi.size() == pi.size(),
          "pairing inputs must have matching sizes");
  const double value = 2.0 * (g_centered.cwiseProduct(chi)).dot(pi);
  const double scale = std::max(1.0, 2.0 * g_centered.cwiseAbs().maxCoeff() *
                                         chi.cwiseAbs().maxCoeff());
  if (value < -1e-10 * scale)
    throw NumericError("asymptotic variance pairing came out negative");
  return std::max(0.0, value);
}

double sigma_pairing(const Observable& g, const std::function<double(double)>& chi,
                     const models::OuModel& model, int quad_nodes) {
  const models::InvariantMeasure mu = models::OuInvariant{model.invariant_sd()};
  const double g_mean = models::measure_mean(g, mu);
  quad::GaussHermite gh(quad_nodes);
  const double value =
      2.0 * gh.expect(0.0, model.invariant_sd(),
                      [&](double y) { return (g.fn(y) - g_mean) * chi(y); });
  if (value < -1e-8 * std::max(1.0, std::abs(value)))
    throw NumericError("asymptotic variance pairing came out negative");
  return std::max(0.0, value);
}

OuCorrectorTable::OuCorrectorTable(const models::OuModel& model, const Observable& g,
                                   double half_width_sds, int n_nodes)
    : model_(model), g_(g) {
  require(g.kind == SpaceKind::continuous_1d, "table needs a scalar observable");
  require(half_width_sds > 0.0 && n_nodes >= 9, "table grid too small");
  const double sd = model.invariant_sd();
  lo_ = -half_width_sds * sd;
  hi_ = half_width_sds * sd;
  step_ = (hi_ - lo_) / static_cast<double>(n_nodes - 1);
  quad_horizon_ = 34.0 / model.gamma;  // exp(-34) tail factor
  quad_mesh_ = 0.02 / model.gamma;
  g_mean_ = models::measure_mean(g, models::OuInvariant{sd});

  values_.resize(static_cast<std::size_t>(n_nodes));
  const models::Model m = model;
  for (int i = 0; i < n_nodes; ++i) {
    const double xi = lo_ + step_ * static_cast<double>(i);
    const auto q = corrector_quadrature(m, g, StatePoint::real(xi), quad_horizon_,
                                        quad_mesh_);
    values_[static_cast<std::size_t>(i)] = q.value;
    node_error_est_ = std::max(node_error_est_, q.error_est + q.tail_bound);
  }
  for (std::size_t i = 0; i + 1 < values_.size(); ++i) {
    lip_estimate_ = std::max(lip_estimate_,
                             std::abs(values_[i + 1] - values_[i]) / step_);
    max_abs_ = std::max(max_abs_, std::abs(values_[i]));
  }
  max_abs_ = std::max(max_abs_, std::abs(values_.back()));
}

double OuCorrectorTable::direct(double x) const {
  const models::Model m = model_;
  return corrector_quadrature(m, g_, StatePoint::real(x), quad_horizon_, quad_mesh_)
      .value;
}

double OuCorrectorTable::operator()(double x) const {
  if (!(x >= lo_ && x <= hi_)) return direct(x);
  const double u = (x - lo_) / step_;
  const auto n = static_cast<long>(values_.size());
  long i = static_cast<long>(std::floor(u));
  i = std::clamp(i, 0L, n - 2);
  const double t = u - static_cast<double>(i);
  auto at = [&](long k) {
    return values_[static_cast<std::size_t>(std::clamp(k, 0L, n - 1))];
  };
  const double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
  // Catmull-Rom on the uniform grid.
  return 0.5 * (2.0 * p1 + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t);
}

}  // namespace lillab::corrector
