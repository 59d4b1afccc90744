#pragma once

#include <vector>

#include "lillab/functionals.hpp"

// Long-horizon asymptotics: the three-way variance estimate, the iterated
// logarithm envelope, the unit-interval interpolation gap, and the scaled
// distributional proxy.
namespace lillab::lil {

// sqrt(2 t ln ln t), the envelope normalizer; defined for t > e.
double envelope_normalizer(double t);

// Three routes to the same variance: the corrector pairing, the martingale
// increment second moment, and the growth rate of E[I_t^2]/t, the last two
// from disjoint path ensembles.
struct SigmaTriple {
  double sigma_pairing = 0.0;
  double sigma_mart = 0.0;
  double sigma_mart_se = 0.0;
  double sigma_growth = 0.0;
  double sigma_growth_se = 0.0;
  std::vector<double> growth_times;
  std::vector<double> growth_values;  // E[I_t^2] / t
  std::vector<double> growth_se;
  std::vector<double> growth_exact;  // chains only, else empty
  double max_pairwise_gap_se = 0.0;  // max |a - b| / joint SE over the pairs
  bool pairwise_consistent = false;  // all pairs within 4 joint SE
  int n_paths = 0;
  double horizon = 0.0;
};

SigmaTriple sigma_triple(const models::Model& m, const Observable& g,
                         const functionals::Corrector& corr,
                         const models::InitialLaw& init, int n_paths, double horizon,
                         double mesh, std::uint64_t seed, int threads);

// Unit-interval interpolation gap G_n = sup over t in [n, n+1) of
// |I_t / a_t - I_n / a_n|, with the per-path analytic ceiling
// sup|g| / a_n + |I_n| (1/a_n - 1/a_{n+1}).
struct DiscretizationReport {
  std::vector<int> ns;
  std::vector<double> gap_median;
  std::vector<double> gap_q90;
  std::vector<double> ceiling_median;
  bool ceiling_ok = false;  // every measured gap under its own ceiling
  bool median_decreasing = false;
  bool terminal_halved = false;  // terminal median < half the first median
  bool passed = false;
  int n_paths = 0;
  double horizon = 0.0;
};

DiscretizationReport discretization_gap(const std::vector<functionals::PathRecord>& traces,
                                        const Observable& g);

// Envelope tracking of |I_n| / (sigma a_n) and its running supremum, plus the
// same for the martingale part and the boundary remainder.
struct LilEnvelopeReport {
  std::vector<int> ns;  // checkpoints, starting at the first n with a_n defined
  std::vector<double> ratio_median;
  std::vector<double> sup_median;
  std::vector<double> sup_q10;
  std::vector<double> sup_q90;
  std::vector<double> mart_sup_median;
  double remainder_median_terminal = 0.0;
  double envelope_level = 0.0;  // 1 + delta
  int envelope_start_n = 0;     // exceedance counted from here on
  double exceed_fraction = 0.0;
  double exceed_limit = 0.05;
  double sup_terminal_median = 0.0;
  double sup_at_10_median = 0.0;
  bool exceed_ok = false;
  bool sup_grows = false;
  bool degenerate = false;  // sigma below resolution; nothing to normalize
  bool passed = false;
  double sigma = 0.0;
  double delta = 0.0;
  int n_paths = 0;
  double horizon = 0.0;
};

LilEnvelopeReport lil_envelope(const models::Model& m, const Observable& g, double sigma,
                               const models::InitialLaw& init, int n_paths,
                               double horizon, double delta, double mesh,
                               std::uint64_t seed, int threads);

// One-sample Kolmogorov-Smirnov distance to the standard normal.
double ks_statistic_standard_normal(std::vector<double> samples);

// I_t / (sigma sqrt(t)) across paths against N(0, 1) at the 1% level.
struct CltProxyReport {
  double ks_stat = 0.0;
  double ks_critical = 0.0;
  double sample_mean = 0.0;
  double sample_var = 0.0;
  double t_eval = 0.0;
  double sigma = 0.0;
  int n_paths = 0;
  bool passed = false;
};

CltProxyReport clt_proxy(const functionals::EnsembleSpec& spec, const Observable& g,
                         double sigma, double t_eval);

}  // namespace lillab::lil
