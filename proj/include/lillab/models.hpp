#pragma once

#include <Eigen/Dense>
#include <variant>

#include "lillab/quadrature.hpp"
#include "lillab/rng.hpp"
#include "lillab/space.hpp"

namespace lillab::models {

// Exact one-step transition law of the process started at x, run for time t.
struct KernelMoments {
  double mean;
  double variance;
};

// dX = -gamma X dt + sigma dW, simulated through its exact Gaussian kernel;
// no Euler scheme anywhere.
struct OuModel {
  double gamma;
  double noise_sigma;

  OuModel(double gamma_, double noise_sigma_);

  double invariant_sd() const;
  KernelMoments kernel(double x, double t) const;
  double transition_variance(double t) const;
};

// Finite-state chain with generator Q, validated (off-diagonal >= 0, zero row
// sums, irreducible via BFS on the support graph both ways).
struct CtmcModel {
  Eigen::MatrixXd q;
  Metric metric;

  CtmcModel(Eigen::MatrixXd q_, Metric metric_);

  int n_states() const { return static_cast<int>(q.rows()); }
  // exp(tQ) by uniformization: Poisson mixture of powers of a stochastic
  // matrix, tail truncated at 1e-14, so entries stay nonnegative.
  Eigen::MatrixXd transition(double t) const;
  Eigen::VectorXd apply_transition(double t, const Eigen::VectorXd& f) const;  // exp(tQ) f
  Eigen::VectorXd invariant_vector() const;
};

using Model = std::variant<OuModel, CtmcModel>;

SpaceKind model_space(const Model& m);

struct OuInvariant {
  double sd;
};
struct CtmcInvariant {
  Eigen::VectorXd pi;
};
using InvariantMeasure = std::variant<OuInvariant, CtmcInvariant>;

InvariantMeasure invariant_measure(const Model& m);

// Initial laws accepted across the lab: a point, a finite mixture, or the
// model's invariant measure.
struct InvariantStart {};
using InitialLaw = std::variant<StatePoint, EmpiricalMeasure, InvariantStart>;

StatePoint sample_initial(const Model& m, const InitialLaw& init, rng::Stream& stream);

double measure_mean(const Observable& g, const InvariantMeasure& mu,
                    int quad_nodes = 128);
Observable center_observable(const Observable& g, const InvariantMeasure& mu,
                             int quad_nodes = 128);
// <V^r, mu> for the exact measures (Gauss-Hermite for OU).
double moment(const InvariantMeasure& mu, const LyapunovConfig& cfg, double r,
              const Metric& metric, int quad_nodes = 128);

// One exact transition of length dt from x (OU: Gaussian kernel draw; CTMC:
// jump chain run for dt). Deterministic given the stream state.
StatePoint sample_step(const Model& m, const StatePoint& x, double dt,
                       rng::Stream& stream);

StatePoint sample_invariant(const Model& m, rng::Stream& stream);

// P_t f(x). CTMC exact; OU by Gauss-Hermite against the closed-form kernel.
double apply_semigroup(const Model& m, const Observable& f, double t,
                       const StatePoint& x, int quad_nodes = 64);

// Kernel-moment continuity at t -> 0+, the numerical stand-in for stochastic
// continuity: max_t |P_t f(x) - f(x)| over the given small-t grid.
double continuity_defect(const Model& m, const Observable& f, const StatePoint& x,
                         const std::vector<double>& t_grid);

// Exponential mixing rate used for tail bounds: the OU drift coefficient, or
// the generator's spectral gap (smallest -Re(lambda) over nonzero eigenvalues).
double contraction_rate(const Model& m);

}  // namespace lillab::models
