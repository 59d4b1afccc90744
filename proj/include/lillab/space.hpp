#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "lillab/error.hpp"

namespace lillab {

enum class SpaceKind { continuous_1d, discrete };

// A point of the state space: either a real coordinate (OU lives on R) or a
// finite-chain state index.
struct StatePoint {
  SpaceKind kind = SpaceKind::continuous_1d;
  double x = 0.0;
  int index = 0;

  static StatePoint real(double v);
  static StatePoint state(int i);
};

bool same_point(const StatePoint& a, const StatePoint& b);

// Ground metric rho. Euclidean |x-y| on R; on finite spaces either the
// uniform 0/1 metric or an explicit matrix validated against the metric
// axioms (exhaustive triangle check; these matrices are small).
enum class MetricKind { euclidean_1d, discrete_uniform, explicit_matrix };

struct Metric {
  MetricKind kind = MetricKind::euclidean_1d;
  int n_states = 0;
  Eigen::MatrixXd rho;  // explicit_matrix only

  static Metric euclidean();
  static Metric uniform(int n);
  static Metric matrix(const Eigen::MatrixXd& m);

  double at(int i, int j) const;
  double operator()(const StatePoint& a, const StatePoint& b) const;
};

// Observable with the metadata every bound in the pipeline needs. Finite-space
// observables are value tables; continuous ones wrap a callable.
struct Observable {
  SpaceKind kind = SpaceKind::continuous_1d;
  std::string name;
  std::vector<double> values;              // discrete table
  std::function<double(double)> fn;        // continuous evaluator
  double sup_norm = 0.0;
  double lip_const = 0.0;
  bool is_centered = false;

  double operator()(const StatePoint& p) const;

  static Observable from_values(std::string name, std::vector<double> values,
                                const Metric& metric);
  static Observable tanh_obs();              // bounded odd; sup 1, Lip 1
  static Observable clipped_identity();      // clamp(x,-1,1); sup 1, Lip 1
  static Observable constant(SpaceKind kind, double c, int n_states = 0);
  static Observable zero(SpaceKind kind, int n_states = 0);
  static Observable scaled(const Observable& g, double a);
};

double eval_observable(const Observable& g, const StatePoint& x);

// V := rho(anchor, .) with moment exponent zeta > 2, the shape of the
// uniform-moment hypothesis.
struct LyapunovConfig {
  StatePoint anchor;
  double zeta = 3.0;

  LyapunovConfig(StatePoint anchor_, double zeta_);
};

// Finitely supported probability measure; weights are normalized on
// construction and must already sum to 1 within 1e-12 of their total.
struct EmpiricalMeasure {
  struct Atom {
    StatePoint point;
    double weight;
  };
  std::vector<Atom> atoms;

  explicit EmpiricalMeasure(std::vector<Atom> atoms_in);
  static EmpiricalMeasure dirac(const StatePoint& p);
  static EmpiricalMeasure from_samples(const std::vector<double>& xs);

  double expect(const std::function<double(const StatePoint&)>& f) const;
};

// Mean under the finitely supported measure; see models.hpp for the exact
// invariant-measure overloads.
double measure_mean(const Observable& g, const EmpiricalMeasure& nu);

// Subtract the mean; sup_norm grows by |mean|, Lipschitz constant unchanged.
Observable center_observable(const Observable& g, const EmpiricalMeasure& nu);

// <V^r, nu> for the finitely supported case.
double moment(const EmpiricalMeasure& nu, const LyapunovConfig& cfg, double r,
              const Metric& metric);

}  // namespace lillab
