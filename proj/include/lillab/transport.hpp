#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "lillab/models.hpp"
#include "lillab/space.hpp"

namespace lillab::transport {

// Exact W1 between equal-weight empirical laws on R (sizes may differ):
// integral of |F_a - F_b| over the merged sample support.
double w1_empirical_1d(const std::vector<double>& a, const std::vector<double>& b);

// Exact Kantorovich cost on a finite space by successive shortest paths with
// potentials. Intended for the small instances this lab uses (<= 1e3 atoms).
double w1_discrete(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu,
                   const Metric& metric);

struct MixingCertificate {
  double gamma_nominal = 0.0;  // rate used in the bound e^{-gamma t} rho(x,y)
  double gamma_hat = 0.0;      // fitted decay rate of the observed distances
  double r_squared = 0.0;      // worst per-pair fit quality
  double max_ratio_violation = 0.0;
  double tol = 0.0;
  struct Triple {
    double x_coord;  // state index for chains
    double y_coord;
    double t;
    double distance;
    double bound;
    double ratio;
  };
  std::vector<Triple> grid;
  struct MeasureCheck {  // measure-level contraction, d_W(nu1 P_t, nu2 P_t)
    double t;
    double distance;
    double bound;  // e^{-gamma t} (<V,nu1> + <V,nu2>)
    double noise_scale;
    bool ok;
  };
  std::vector<MeasureCheck> measure_checks;
  bool passed = false;
};

MixingCertificate certify_contraction(const models::Model& m,
                                      const std::vector<StatePoint>& x_grid,
                                      const std::vector<StatePoint>& y_grid,
                                      const std::vector<double>& t_grid,
                                      int n_kernel_samples = 20000,
                                      double tol = 1e-9,
                                      std::optional<double> gamma_for_bound = std::nullopt,
                                      std::uint64_t seed = 0);

struct ErgodicityReport {
  std::vector<double> times;
  std::vector<double> distances;
  double fitted_slope = 0.0;
  double fitted_intercept = 0.0;
  double fitted_C = 0.0;  // implied prefactor against (<V,nu>+1)
  double v_mean = 0.0;    // <V, nu>
  double noise_floor = 0.0;
  int n_fit_points = 0;
  int samples_per_t = 0;
};

ErgodicityReport certify_ergodicity(const models::Model& m, const EmpiricalMeasure& nu,
                                    const std::vector<double>& t_grid,
                                    int samples_per_t = 20000,
                                    std::uint64_t seed = 0);

struct MomentReport {
  std::vector<double> times;
  std::vector<double> values;  // <V^zeta, mu P_t>
  std::vector<double> std_errors;
  double max_value = 0.0;
  double stationary_level = 0.0;  // <V^zeta, mu*>
  bool exact = false;
  // the gap |value - stationary_level| must decay once past the burn-in,
  // whether the start sits above or below the equilibrium level
  bool settles_after_burnin = false;
  int burnin_index = 0;
};

MomentReport certify_moments(const models::Model& m, const models::InitialLaw& mu,
                             const LyapunovConfig& cfg, const std::vector<double>& t_grid,
                             int samples_per_t = 20000, std::uint64_t seed = 0);

struct CesaroReport {
  std::vector<double> times;
  std::vector<double> averages;  // (1/t) integral of <f, nu P_s> ds
  std::vector<double> gaps;      // |average - <f, mu*>|
  double f_mean_invariant = 0.0;
  double c_fit = 0.0;  // fitted C' with gap <= C'/t on the tail
  bool gap_shrinks = false;
};

CesaroReport cesaro_convergence(const models::Model& m, const EmpiricalMeasure& nu,
                                const Observable& f, double horizon, double mesh,
                                int n_samples = 20000, std::uint64_t seed = 0);

struct BivariateObservable {
  SpaceKind kind = SpaceKind::continuous_1d;
  std::function<double(double, double)> fn;  // continuous
  Eigen::MatrixXd table;                     // discrete: f(i, j)
  double lip1 = 0.0;
  double lip2 = 0.0;
};

struct LipPropReport {
  double bound = 0.0;     // lip1 e^{-gamma s1} + lip2 e^{-gamma s2}
  double estimate = 0.0;  // max divided difference of F over grid pairs
  bool ok = false;
};

LipPropReport lipschitz_propagation_check(const models::Model& m,
                                          const BivariateObservable& f, double s1,
                                          double s2,
                                          const std::vector<StatePoint>& x_grid,
                                          double gamma, double tol = 1e-7);

StatePoint default_anchor(const models::Model& m);

}  // namespace lillab::transport
