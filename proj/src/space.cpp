#include "lillab/space.hpp"

#include <algorithm>
#include <cmath>

namespace lillab {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

StatePoint StatePoint::real(double v) {
  require(finite(v), "state coordinate must be finite");
  StatePoint p;
  p.kind = SpaceKind::continuous_1d;
  p.x = v;
  return p;
}

StatePoint StatePoint::state(int i) {
  require(i >= 0, "state index must be nonnegative");
  StatePoint p;
  p.kind = SpaceKind::discrete;
  p.index = i;
  return p;
}

bool same_point(const StatePoint& a, const StatePoint& b) {
  if (a.kind != b.kind) return false;
  return a.kind == SpaceKind::discrete ? a.index == b.index : a.x == b.x;
}

Metric Metric::euclidean() {
  Metric m;
  m.kind = MetricKind::euclidean_1d;
  return m;
}

Metric Metric::uniform(int n) {
  require(n >= 1, "uniform metric needs at least one state");
  Metric m;
  m.kind = MetricKind::discrete_uniform;
  m.n_states = n;
  return m;
}

Metric Metric::matrix(const Eigen::MatrixXd& rho) {
  const int n = static_cast<int>(rho.rows());
  require(n >= 1 && rho.cols() == n, "metric matrix must be square");
  for (int i = 0; i < n; ++i) {
    require(rho(i, i) == 0.0, "metric diagonal must be zero");
    for (int j = 0; j < n; ++j) {
      require(finite(rho(i, j)) && rho(i, j) >= 0.0, "metric entries must be finite and nonnegative");
      require(std::abs(rho(i, j) - rho(j, i)) <= 1e-12, "metric must be symmetric");
      require(i == j || rho(i, j) > 0.0, "distinct states must be at positive distance");
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        require(rho(i, j) <= rho(i, k) + rho(k, j) + 1e-12, "metric violates the triangle inequality");
  Metric m;
  m.kind = MetricKind::explicit_matrix;
  m.n_states = n;
  m.rho = rho;
  return m;
}

double Metric::at(int i, int j) const {
  require(kind != MetricKind::euclidean_1d, "state-indexed lookup needs a finite-space metric");
  require(i >= 0 && i < n_states && j >= 0 && j < n_states, "state index out of range");
  if (kind == MetricKind::discrete_uniform) return i == j ? 0.0 : 1.0;
  return rho(i, j);
}

double Metric::operator()(const StatePoint& a, const StatePoint& b) const {
  if (kind == MetricKind::euclidean_1d) {
    require(a.kind == SpaceKind::continuous_1d && b.kind == SpaceKind::continuous_1d,
            "euclidean metric expects continuous points");
    return std::abs(a.x - b.x);
  }
  require(a.kind == SpaceKind::discrete && b.kind == SpaceKind::discrete,
          "finite-space metric expects discrete points");
  return at(a.index, b.index);
}

double Observable::operator()(const StatePoint& p) const {
  if (kind == SpaceKind::discrete) {
    require(p.kind == SpaceKind::discrete, "discrete observable applied to a continuous point");
    require(p.index >= 0 && p.index < static_cast<int>(values.size()),
            "state index outside observable table");
    return values[static_cast<std::size_t>(p.index)];
  }
  require(p.kind == SpaceKind::continuous_1d, "continuous observable applied to a discrete point");
  return fn(p.x);
}

double eval_observable(const Observable& g, const StatePoint& x) { return g(x); }

Observable Observable::from_values(std::string name, std::vector<double> vals,
                                   const Metric& metric) {
  require(!vals.empty(), "observable table must be nonempty");
  const int n = static_cast<int>(vals.size());
  require(metric.kind != MetricKind::euclidean_1d && metric.n_states == n,
          "observable table must match the metric's state count");
  Observable g;
  g.kind = SpaceKind::discrete;
  g.name = std::move(name);
  g.values = std::move(vals);
  double sup = 0.0, lip = 0.0;
  for (int i = 0; i < n; ++i) {
    require(finite(g.values[i]), "observable values must be finite");
    sup = std::max(sup, std::abs(g.values[i]));
    for (int j = 0; j < i; ++j)
      lip = std::max(lip, std::abs(g.values[i] - g.values[j]) / metric.at(i, j));
  }
  g.sup_norm = sup;
  g.lip_const = lip;
  return g;
}

Observable Observable::tanh_obs() {
  Observable g;
  g.kind = SpaceKind::continuous_1d;
  g.name = "tanh";
  g.fn = [](double x) { return std::tanh(x); };
  g.sup_norm = 1.0;
  g.lip_const = 1.0;
  return g;
}

Observable Observable::clipped_identity() {
  Observable g;
  g.kind = SpaceKind::continuous_1d;
  g.name = "clipped_identity";
  g.fn = [](double x) { return std::clamp(x, -1.0, 1.0); };
  g.sup_norm = 1.0;
  g.lip_const = 1.0;
  return g;
}

Observable Observable::constant(SpaceKind kind, double c, int n_states) {
  Observable g;
  g.kind = kind;
  g.name = "constant";
  g.sup_norm = std::abs(c);
  g.lip_const = 0.0;
  if (kind == SpaceKind::discrete) {
    require(n_states >= 1, "discrete constant observable needs a state count");
    g.values.assign(static_cast<std::size_t>(n_states), c);
  } else {
    g.fn = [c](double) { return c; };
  }
  return g;
}

Observable Observable::zero(SpaceKind kind, int n_states) {
  Observable g = constant(kind, 0.0, n_states);
  g.name = "zero";
  g.is_centered = true;
  return g;
}

Observable Observable::scaled(const Observable& g, double a) {
  require(finite(a), "scale factor must be finite");
  Observable h = g;
  h.name = g.name + "_scaled";
  h.sup_norm = std::abs(a) * g.sup_norm;
  h.lip_const = std::abs(a) * g.lip_const;
  if (g.kind == SpaceKind::discrete) {
    for (double& v : h.values) v *= a;
  } else {
    auto base = g.fn;
    h.fn = [base, a](double x) { return a * base(x); };
  }
  return h;
}

LyapunovConfig::LyapunovConfig(StatePoint anchor_, double zeta_)
    : anchor(anchor_), zeta(zeta_) {
  require(zeta > 2.0, "moment exponent must exceed 2");
}

EmpiricalMeasure::EmpiricalMeasure(std::vector<Atom> atoms_in) : atoms(std::move(atoms_in)) {
  require(!atoms.empty(), "empirical measure needs at least one atom");
  double total = 0.0;
  const SpaceKind kind = atoms.front().point.kind;
  for (const Atom& a : atoms) {
    require(a.point.kind == kind, "empirical measure atoms must share one space");
    require(finite(a.weight) && a.weight > 0.0, "atom weights must be positive");
    total += a.weight;
  }
  require(finite(total) && total > 0.0, "atom weights must have positive total");
  for (Atom& a : atoms) a.weight /= total;
}

EmpiricalMeasure EmpiricalMeasure::dirac(const StatePoint& p) {
  return EmpiricalMeasure({Atom{p, 1.0}});
}

EmpiricalMeasure EmpiricalMeasure::from_samples(const std::vector<double>& xs) {
  std::vector<Atom> atoms;
  atoms.reserve(xs.size());
  const double w = 1.0 / static_cast<double>(xs.size());
  for (double v : xs) atoms.push_back(Atom{StatePoint::real(v), w});
  return EmpiricalMeasure(std::move(atoms));
}

double EmpiricalMeasure::expect(const std::function<double(const StatePoint&)>& f) const {
  double acc = 0.0;
  for (const Atom& a : atoms) acc += a.weight * f(a.point);
  return acc;
}

double measure_mean(const Observable& g, const EmpiricalMeasure& nu) {
  return nu.expect([&](const StatePoint& p) { return g(p); });
}

Observable center_observable(const Observable& g, const EmpiricalMeasure& nu) {
  const double mean = measure_mean(g, nu);
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

double moment(const EmpiricalMeasure& nu, const LyapunovConfig& cfg, double r,
              const Metric& metric) {
  if (!(r > 0.0)) throw ValidationError("moment order must be positive");
  return nu.expect([&](const StatePoint& p) { return std::pow(metric(cfg.anchor, p), r); });
}

}  // namespace lillab
