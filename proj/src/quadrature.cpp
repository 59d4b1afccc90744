#include "lillab/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "lillab/error.hpp"

namespace lillab::quad {

namespace {

// Nodes are eigenvalues of the symmetric tridiagonal Jacobi matrix; weights
// are mu0 * (first eigenvector component)^2.
void golub_welsch(const Eigen::VectorXd& offdiag, double mu0,
                  Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  const int n = static_cast<int>(offdiag.size()) + 1;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n - 1; ++k) {
    jacobi(k, k + 1) = offdiag(k);
    jacobi(k + 1, k) = offdiag(k);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  if (es.info() != Eigen::Success) throw NumericError("quadrature eigensolve failed");
  nodes = es.eigenvalues();
  weights.resize(n);
  for (int k = 0; k < n; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    weights(k) = mu0 * v0 * v0;
  }
}

}  // namespace

GaussHermite::GaussHermite(int n) {
  if (n < 1) throw ValidationError("quadrature rule needs at least one node");
  Eigen::VectorXd off(n - 1);
  for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(0.5 * k);
  golub_welsch(off, std::sqrt(M_PI), nodes_, weights_);
}

double GaussHermite::expect(double mean, double sd,
                            const std::function<double(double)>& f) const {
  const double scale = std::sqrt(2.0) * sd;
  double acc = 0.0;
  for (int i = 0; i < nodes_.size(); ++i)
    acc += weights_(i) * f(mean + scale * nodes_(i));
  return acc / std::sqrt(M_PI);
}

GaussLegendre::GaussLegendre(int n) {
  if (n < 1) throw ValidationError("quadrature rule needs at least one node");
  Eigen::VectorXd off(n - 1);
  for (int k = 1; k < n; ++k) off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  golub_welsch(off, 2.0, nodes_, weights_);
}

double GaussLegendre::integrate(double a, double b,
                                const std::function<double(double)>& f) const {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double acc = 0.0;
  for (int i = 0; i < nodes_.size(); ++i)
    acc += weights_(i) * f(mid + half * nodes_(i));
  return half * acc;
}

}  // namespace lillab::quad
