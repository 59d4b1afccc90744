#include "doctest.h"

#include <cmath>

#include "lillab/corrector.hpp"

using namespace lillab;
using namespace lillab::corrector;

namespace {

models::CtmcModel two_state() {
  Eigen::MatrixXd q(2, 2);
  q << -1, 1, 1, -1;
  return models::CtmcModel(q, Metric::uniform(2));
}

Observable parity() {
  return Observable::from_values("parity", {1.0, -1.0}, Metric::uniform(2));
}

Observable coordinate() {
  Observable g;
  g.kind = SpaceKind::continuous_1d;
  g.name = "x";
  g.fn = [](double x) { return x; };
  g.sup_norm = 50.0;
  g.lip_const = 1.0;
  return g;
}

}  // namespace

TEST_CASE("two-state potential solve is exact") {
  const auto sol = corrector_ctmc(two_state(), parity());
  CHECK(std::abs(sol.chi(0) - 0.5) < 1e-12);
  CHECK(std::abs(sol.chi(1) + 0.5) < 1e-12);
  CHECK(sol.residual < 1e-12);
  CHECK(std::abs(sol.pi.dot(sol.chi)) < 1e-13);
  CHECK(sol.sigma_sq == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("potential solve inverts the generator on centered data") {
  Eigen::MatrixXd q(4, 4);
  q << -3.0, 1.0, 1.5, 0.5,
        0.7, -2.0, 0.3, 1.0,
        0.2, 0.8, -1.5, 0.5,
        1.1, 0.4, 0.5, -2.0;
  const models::CtmcModel chain(q, Metric::uniform(4));
  const auto g = Observable::from_values("f", {2.0, -1.0, 0.5, 3.0}, chain.metric);
  const auto sol = corrector_ctmc(chain, g);
  CHECK(sol.residual < 1e-11);
  CHECK((q * sol.chi + sol.g_centered).cwiseAbs().maxCoeff() < 1e-11);
  CHECK(std::abs(sol.pi.dot(sol.g_centered)) < 1e-12);
  CHECK(sol.sigma_sq >= 0.0);
}

TEST_CASE("orbit quadrature reproduces the linear-solve potential") {
  const auto chain = two_state();
  const auto sol = corrector_ctmc(chain, parity());
  for (int x : {0, 1}) {
    const auto quad = corrector_quadrature(models::Model(chain), parity(),
                                           StatePoint::state(x), 17.0, 0.01);
    CHECK(std::abs(quad.value - sol.chi(x)) <
          quad.error_est + quad.tail_bound + 1e-8);
  }
}

TEST_CASE("orbit quadrature matches the closed form for the linear observable") {
  // integral of P_t x dt = x / gamma, already centered for the symmetric law
  const models::Model ou = models::OuModel(1.0, std::sqrt(2.0));
  const auto quad =
      corrector_quadrature(ou, coordinate(), StatePoint::real(0.7), 34.0, 0.02);
  CHECK(std::abs(quad.value - 0.7) < quad.error_est + quad.tail_bound + 1e-6);

  const models::Model ou2 = models::OuModel(2.5, 1.0);
  const auto quad2 =
      corrector_quadrature(ou2, coordinate(), StatePoint::real(-1.2), 14.0, 0.008);
  CHECK(std::abs(quad2.value + 1.2 / 2.5) < quad2.error_est + quad2.tail_bound + 1e-6);
}

TEST_CASE("pairing variance is clamped and guarded") {
  Eigen::VectorXd pi(2), gc(2), chi(2);
  pi << 0.5, 0.5;
  gc << 1.0, -1.0;
  chi << 0.5, -0.5;
  CHECK(sigma_pairing(gc, chi, pi) == doctest::Approx(1.0).epsilon(1e-14));

  Eigen::VectorXd anti(2);
  anti << -1.0, 1.0;
  CHECK_THROWS_AS(sigma_pairing(gc, anti, pi), NumericError);

  Eigen::VectorXd tiny_g(2), tiny_chi(2);
  tiny_g << 1e-8, -1e-8;
  tiny_chi << -1e-8, 1e-8;
  CHECK(sigma_pairing(tiny_g, tiny_chi, pi) == 0.0);
}

TEST_CASE("pairing variance for the linear observable has a closed form") {
  // chi = x / gamma, so sigma^2 = 2 <x^2/gamma, mu*> = 2 sd^2 / gamma
  const models::OuModel ou(1.0, std::sqrt(2.0));
  const double got = sigma_pairing(coordinate(), [](double x) { return x; }, ou);
  CHECK(got == doctest::Approx(2.0).epsilon(1e-10));

  const models::OuModel ou2(2.0, 1.0);  // invariant variance 1/4
  const double got2 =
      sigma_pairing(coordinate(), [](double x) { return x / 2.0; }, ou2);
  CHECK(got2 == doctest::Approx(0.25).epsilon(1e-10));
}

TEST_CASE("interpolation table agrees with direct quadrature") {
  const models::OuModel ou(1.0, std::sqrt(2.0));
  const auto g = Observable::tanh_obs();
  const OuCorrectorTable table(ou, g, 6.0, 301);
  CHECK(std::abs(table.g_mean()) < 1e-10);
  for (double x : {0.0, 0.5, -1.3, 2.7}) {
    const auto direct =
        corrector_quadrature(models::Model(ou), g, StatePoint::real(x), 34.0, 0.02);
    CHECK(std::abs(table(x) - direct.value) <
          table.node_error_est() + direct.error_est + direct.tail_bound + 1e-4);
  }
  // the potential of a 1-Lipschitz observable is 1/gamma-Lipschitz, and it
  // vanishes at the origin here, so the cone |x| Lip/gamma caps the table
  CHECK(table.lip_estimate() <= 1.0 + 1e-3);
  CHECK(table.max_abs() <= 6.0 + 1e-6);
  CHECK(table(1.3) == doctest::Approx(-table(-1.3)).epsilon(1e-6));
  // far outside the grid the handle falls back to direct integration
  CHECK(std::isfinite(table(9.5)));
}

TEST_CASE("potential slope bound is the observable slope over the rate") {
  CHECK(corrector_lipschitz_bound(Observable::tanh_obs(), 2.0) == doctest::Approx(0.5));
  const auto p = parity();
  CHECK(corrector_lipschitz_bound(p, 2.0) == doctest::Approx(1.0));
}
