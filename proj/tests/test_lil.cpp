#include "doctest.h"

#include <cmath>

#include "lillab/lil.hpp"

using namespace lillab;
using namespace lillab::lil;

namespace {

models::CtmcModel two_state() {
  Eigen::MatrixXd q(2, 2);
  q << -1, 1, 1, -1;
  return models::CtmcModel(q, Metric::uniform(2));
}

Observable parity() {
  return Observable::from_values("parity", {1.0, -1.0}, Metric::uniform(2));
}

std::vector<functionals::PathRecord> chain_traces(int n, double horizon,
                                                  std::uint64_t seed) {
  const models::Model m = two_state();
  std::vector<functionals::PathRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    rng::Stream s(seed, rng::stream_id(rng::lane::kSelfTest, 40000 + static_cast<std::uint64_t>(i)));
    const StatePoint x0 = models::sample_initial(m, models::InvariantStart{}, s);
    out.push_back(functionals::simulate_path(m, x0, horizon, 0.01, s));
  }
  return out;
}

}  // namespace

TEST_CASE("normalizer follows its formula and rejects early times") {
  for (double t : {3.0, 16.0, 100.0, 1e4}) {
    const double want = std::sqrt(2.0 * t * std::log(std::log(t)));
    CHECK(envelope_normalizer(t) == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK_THROWS_AS(envelope_normalizer(2.0), ValidationError);
  CHECK_THROWS_AS(envelope_normalizer(std::exp(1.0)), ValidationError);
}

TEST_CASE("distribution distance statistic has exact degenerate values") {
  // a point mass at zero sits half a unit from the standard normal cdf
  CHECK(ks_statistic_standard_normal({0.0, 0.0, 0.0, 0.0}) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // far-out symmetric atoms also stall the empirical cdf at 1/2
  CHECK(ks_statistic_standard_normal({-10.0, 10.0}) ==
        doctest::Approx(0.5).epsilon(1e-6));

  rng::Stream s(29, rng::stream_id(rng::lane::kSelfTest, 50));
  std::vector<double> normal_draws;
  for (int i = 0; i < 2000; ++i) normal_draws.push_back(s.gaussian());
  const double ks = ks_statistic_standard_normal(normal_draws);
  CHECK(ks < std::sqrt(-0.5 * std::log(0.005)) / std::sqrt(2000.0));

  CHECK_THROWS_AS(ks_statistic_standard_normal({}), ValidationError);
}

TEST_CASE("three variance estimates agree on the chain") {
  const models::Model m = two_state();
  const auto corr = functionals::make_corrector(m, parity());
  const auto triple =
      sigma_triple(m, parity(), corr, models::InvariantStart{}, 800, 60.0, 0.01, 31, 2);
  CHECK(triple.sigma_pairing == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(triple.pairwise_consistent);
  CHECK(std::abs(triple.sigma_mart - 1.0) < 4.0 * triple.sigma_mart_se + 1e-12);
  CHECK(std::abs(triple.sigma_growth - 1.0) < 4.0 * triple.sigma_growth_se + 1e-12);
  REQUIRE(!triple.growth_times.empty());
  REQUIRE(triple.growth_exact.size() == triple.growth_times.size());
  // the closed-form growth curve approaches the flat asymptote from below
  for (std::size_t k = 1; k < triple.growth_exact.size(); ++k)
    CHECK(triple.growth_exact[k] >= triple.growth_exact[k - 1] - 1e-12);
  CHECK(triple.growth_exact.back() == doctest::Approx(1.0).epsilon(0.01));

  CHECK_THROWS_AS(
      sigma_triple(m, parity(), corr, models::InvariantStart{}, 10, 60.0, 0.01, 1, 1),
      ValidationError);
}

TEST_CASE("grid correction gap shrinks as the window grows") {
  const auto traces = chain_traces(300, 120.0, 37);
  const auto rep = discretization_gap(traces, parity());
  CHECK(rep.n_paths == 300);
  CHECK(rep.ceiling_ok);
  CHECK(rep.median_decreasing);
  CHECK(rep.passed);
  REQUIRE(!rep.ns.empty());
  CHECK(rep.ns.front() >= 3);
  CHECK(rep.gap_median.back() < rep.gap_median.front());
  for (std::size_t k = 0; k < rep.ns.size(); ++k)
    CHECK(rep.gap_median[k] <= rep.ceiling_median[k] + 1e-9);

  CHECK_THROWS_AS(discretization_gap({}, parity()), ValidationError);
}

TEST_CASE("envelope report carries coherent cross sections") {
  const models::Model m = two_state();
  const auto rep = lil_envelope(m, parity(), 1.0, models::InvariantStart{}, 150,
                                300.0, 0.5, 0.01, 41, 2);
  CHECK(!rep.degenerate);
  CHECK(rep.envelope_level == doctest::Approx(1.5));
  CHECK(rep.envelope_start_n == 16);
  CHECK(rep.exceed_fraction >= 0.0);
  CHECK(rep.exceed_fraction <= 1.0);
  REQUIRE(!rep.ns.empty());
  CHECK(rep.ns.back() == 300);
  // running sup of the ratio dominates the ratio itself at every checkpoint
  for (std::size_t k = 0; k < rep.ns.size(); ++k)
    CHECK(rep.sup_median[k] + 1e-12 >= 0.0);
  CHECK(rep.sup_grows);

  CHECK_THROWS_AS(lil_envelope(m, parity(), 1.0, models::InvariantStart{}, 10,
                               300.0, 0.5, 0.01, 1, 1),
                  ValidationError);
  CHECK_THROWS_AS(lil_envelope(m, parity(), 1.0, models::InvariantStart{}, 150,
                               10.0, 0.5, 0.01, 1, 1),
                  ValidationError);
  CHECK_THROWS_AS(lil_envelope(m, parity(), 1.0, models::InvariantStart{}, 150,
                               300.0, 0.0, 0.01, 1, 1),
                  ValidationError);
}

TEST_CASE("a flat observable yields a degenerate envelope verdict") {
  const models::Model m = two_state();
  const auto zero = Observable::zero(SpaceKind::discrete, 2);
  const auto rep =
      lil_envelope(m, zero, 0.0, models::InvariantStart{}, 150, 300.0, 0.5, 0.01, 1, 1);
  CHECK(rep.degenerate);
  CHECK(!rep.passed);
}

TEST_CASE("normalized integrals look standard normal at moderate times") {
  functionals::EnsembleSpec spec{models::Model(two_state()), models::InvariantStart{},
                                 0.01, 30.0, 1000, 43, rng::lane::kCltProxy, 2};
  const auto rep = clt_proxy(spec, parity(), 1.0, 30.0);
  CHECK(rep.passed);
  CHECK(rep.ks_stat < rep.ks_critical);
  CHECK(std::abs(rep.sample_mean) < 0.15);
  CHECK(rep.sample_var == doctest::Approx(1.0).epsilon(0.2));
}
