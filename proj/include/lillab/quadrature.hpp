#pragma once

#include <Eigen/Dense>
#include <functional>

namespace lillab::quad {

// Gauss-Hermite rule (weight e^{-u^2}), nodes/weights from the Golub-Welsch
// eigenproblem of the Jacobi matrix. expect() integrates f against a Normal
// law: E f(N(mean, sd^2)) = pi^{-1/2} sum_i w_i f(mean + sqrt(2) sd u_i).
class GaussHermite {
 public:
  explicit GaussHermite(int n);
  double expect(double mean, double sd, const std::function<double(double)>& f) const;
  int size() const { return static_cast<int>(nodes_.size()); }
  const Eigen::VectorXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  Eigen::VectorXd nodes_, weights_;
};

// Gauss-Legendre rule on [a, b], same Golub-Welsch construction.
class GaussLegendre {
 public:
  explicit GaussLegendre(int n);
  double integrate(double a, double b, const std::function<double(double)>& f) const;
  const Eigen::VectorXd& nodes() const { return nodes_; }    // on [-1, 1]
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  Eigen::VectorXd nodes_, weights_;
};

}  // namespace lillab::quad
