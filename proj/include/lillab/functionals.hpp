#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lillab/corrector.hpp"
#include "lillab/models.hpp"
#include "lillab/parallel.hpp"

// Sample paths, time integrals along them, and the martingale decomposition
// of the integral together with its diagnostics.
namespace lillab::functionals {

using CorrectorFn = std::function<double(const StatePoint&)>;

// Model-agnostic corrector handle. For chains this wraps the linear solve;
// for the diffusion it wraps an interpolation table kept alive by the handle.
struct Corrector {
  CorrectorFn chi;
  double sigma_sq = 0.0;   // pairing value 2 <g_centered chi, mu*>
  double lip_bound = 0.0;  // Lip(g) / rate
  double rate = 0.0;
  double fidelity = 0.0;  // linear-solve residual, or table error estimate
  double g_mean = 0.0;
  Eigen::VectorXd chi_vec;  // chain case only
  std::shared_ptr<const corrector::OuCorrectorTable> table;
};

Corrector make_corrector(const models::Model& m, const Observable& g);

// A realized trajectory on an aligned time grid. Diffusion paths store the
// grid states; chain paths store the exact jump record.
struct PathRecord {
  bool is_chain = false;
  double mesh = 0.0;
  double horizon = 0.0;
  long steps_per_unit = 0;
  long n_steps = 0;
  std::vector<double> xs;          // diffusion states, size n_steps + 1
  std::vector<int> hold_states;    // chain: visited states, jumps.size() + 1
  std::vector<double> jump_times;  // chain: strictly increasing, all < horizon

  StatePoint state_at(double t) const;
};

// The mesh must divide unit time; the horizon must sit on the grid.
PathRecord simulate_path(const models::Model& m, const StatePoint& init, double horizon,
                         double mesh, rng::Stream& stream);

// int_0^horizon g(path_s) ds: exact sojourn sums for chains, left endpoint
// rule on the stored grid for the diffusion.
double additive_functional(const PathRecord& path, const Observable& g);

// Partial integrals I_n at n = 0..floor(horizon).
std::vector<double> integral_at_integers(const PathRecord& path, const Observable& g);

// One path advanced block by block without storing the trajectory. Chain
// jumps are carried across block boundaries, so the realized path does not
// depend on how the advance calls are sliced.
class PathWalker {
 public:
  PathWalker(const models::Model& m, const StatePoint& init, double mesh,
             rng::Stream stream);

  // Returns int_{t}^{t+dt} g(path_s) ds and moves the walker. For the
  // diffusion dt must be a whole number of mesh steps.
  double advance(const Observable& g, double dt);
  const StatePoint& position() const { return pos_; }
  double time() const { return t_; }

 private:
  const models::Model* model_;
  rng::Stream stream_;
  StatePoint pos_;
  double t_ = 0.0;
  double mesh_;
  // diffusion step constants
  double step_factor_ = 0.0, step_sd_ = 0.0;
  // chain bookkeeping
  double next_jump_ = 0.0;
  void arm_next_jump();
};

// M_n = chi(path_n) - chi(path_0) + I_n on integer times, with increments
// stored as differences of the stored M values.
struct MartingaleTrace {
  std::vector<double> phi;     // position coordinate at integer times
  std::vector<int> states;     // chain states at integer times (chains only)
  std::vector<double> i_vals;  // I_n
  std::vector<double> chi_vals;
  std::vector<double> m_vals;  // size N + 1, m_vals[0] = 0
  std::vector<double> z;       // z[k] = m_vals[k+1] - m_vals[k]

  StatePoint point_at(std::size_t n) const;
};

MartingaleTrace martingale_decompose(const PathRecord& path, const Observable& g,
                                     const CorrectorFn& chi);

struct FeatureMap {
  std::string name;
  std::function<double(const StatePoint&)> fn;
};

std::vector<FeatureMap> default_feature_maps(const models::Model& m);

// Orthogonality check E[Z_{n+1} h(path_n)] = 0 for every feature h and lag n.
struct MartingaleCheck {
  struct Cell {
    std::string feature;
    int n;
    double mean;
    double se;
    double ratio;  // |mean| / se
    bool ok;
  };
  std::vector<Cell> cells;
  int n_paths = 0;
  double threshold = 4.0;  // pass iff |mean| <= threshold * se everywhere
  bool passed = false;
};

MartingaleCheck martingale_property_test(const std::vector<MartingaleTrace>& traces,
                                         const std::vector<FeatureMap>& features);

// Path ensemble description used by the streaming diagnostics: paths are
// regenerated on demand from (seed, lane, path index), never materialized.
struct EnsembleSpec {
  models::Model model;
  models::InitialLaw init;
  double mesh = 0.01;
  double horizon = 0.0;
  int n_paths = 0;
  std::uint64_t seed = 0;
  std::uint64_t lane = rng::lane::kPaths;
  int threads = 1;
};

// Square-function and truncation diagnostics for the increment array Z_n.
struct HeydeScottReport {
  std::vector<int> checkpoints;
  std::vector<double> s_sq_over_n;     // s_n^2 / n, s_n^2 = sum_k E[Z_k^2]
  std::vector<double> s_sq_over_n_se;  // standard error of that mean
  std::vector<double> b1_median;       // per-path (1/n) sum_k Z_k^2 quartiles
  std::vector<double> b1_q25;
  std::vector<double> b1_q75;
  std::vector<double> b3_partial;               // truncated fourth-moment series
  std::vector<std::vector<double>> b4_partial;  // tail first-moment series, per epsilon
  std::vector<double> epsilons;
  double delta = 0.0;
  double sigma_ref = 0.0;
  int n_paths = 0;
  double horizon = 0.0;
  double b2_terminal = 0.0;
  double b2_terminal_se = 0.0;
  bool b1_ok = false;
  bool b2_ok = false;
  bool b3_ok = false;
  bool b4_ok = false;
  bool passed = false;
};

HeydeScottReport heyde_scott_diagnostics(const EnsembleSpec& spec, const Observable& g,
                                         double sigma_ref,
                                         const std::vector<double>& epsilons,
                                         double delta);

// E_x[(int_0^t g ds)^2] for a chain, in closed form via the eigensystem of
// the generator. Throws NumericError when the generator resists a clean
// eigendecomposition; second_moment_quadrature is the slow general route.
double exact_second_moment_ctmc(const models::CtmcModel& chain, const Observable& g,
                                int x, double t);

// Nested product quadrature of 2 int_0^t int_0^s P_u(g P_{s-u} g)(x) du ds.
double second_moment_quadrature(const models::CtmcModel& chain, const Observable& g,
                                int x, double t, int nodes = 48);

struct SecondMomentMc {
  double mean = 0.0;
  double se = 0.0;
  int n_paths = 0;
};

SecondMomentMc second_moment_mc(const EnsembleSpec& spec, const Observable& g, double t);

}  // namespace lillab::functionals
