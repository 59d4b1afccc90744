#pragma once

#include <functional>
#include <vector>

#include "lillab/models.hpp"
#include "lillab/quadrature.hpp"

// Solvers for the Poisson equation Q chi = -(g - <g, pi>) and its
// continuous-state analogue chi(x) = int_0^inf P_s (g - mean) (x) ds, plus the
// pairing that turns the corrector into an asymptotic variance.
namespace lillab::corrector {

struct CtmcCorrector {
  Eigen::VectorXd chi;         // solution, centered so <chi, pi> = 0
  Eigen::VectorXd g_centered;  // g - <g, pi> on the state space
  Eigen::VectorXd pi;
  double residual;  // max_i |(Q chi + g_centered)(i)|
  double sigma_sq;  // 2 <g_centered * chi, pi>
};

// Direct linear solve of the bordered system [[Q, 1], [pi^T, 0]].
CtmcCorrector corrector_ctmc(const models::CtmcModel& chain, const Observable& g);

struct QuadratureResult {
  double value;       // int_0^T P_s (g - mean)(x) ds
  double error_est;   // accumulated panel-extrapolation error estimate
  double tail_bound;  // bound on the discarded int_T^inf using the mixing rate
  double rate;        // mixing rate used for the tail bound
  double horizon;
  int n_panels;
};

// Truncated time integral of the centered semigroup orbit at x, on geometric
// panels starting at width `mesh`, each integrated by Simpson with one
// Richardson refinement. Works for both model kinds.
QuadratureResult corrector_quadrature(const models::Model& m, const Observable& g,
                                      const StatePoint& x, double horizon, double mesh);

// Lipschitz bound Lip(chi) <= Lip(g) / gamma.
double corrector_lipschitz_bound(const Observable& g, double gamma);

// sigma^2 = 2 <g_centered * chi, mu*>. Throws NumericError if the pairing
// comes out negative beyond numerical tolerance; tiny negatives clamp to 0.
double sigma_pairing(const Eigen::VectorXd& g_centered, const Eigen::VectorXd& chi,
                     const Eigen::VectorXd& pi);
double sigma_pairing(const Observable& g, const std::function<double(double)>& chi,
                     const models::OuModel& model, int quad_nodes = 160);

// Tabulated corrector for the scalar diffusion: values on a symmetric grid of
// +-half_width_sds invariant standard deviations, evaluated by local cubic
// interpolation, with a direct quadrature fallback outside the table.
class OuCorrectorTable {
 public:
  OuCorrectorTable(const models::OuModel& model, const Observable& g,
                   double half_width_sds = 8.0, int n_nodes = 2001);

  double operator()(double x) const;
  double lip_estimate() const { return lip_estimate_; }
  double max_abs() const { return max_abs_; }
  double node_error_est() const { return node_error_est_; }
  double g_mean() const { return g_mean_; }

 private:
  double direct(double x) const;

  models::OuModel model_;
  Observable g_;
  double g_mean_;
  double lo_, hi_, step_;
  double quad_horizon_, quad_mesh_;
  std::vector<double> values_;
  double lip_estimate_ = 0.0;
  double max_abs_ = 0.0;
  double node_error_est_ = 0.0;
};

}  // namespace lillab::corrector
