#include "itepred/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "itepred/error.hpp"

namespace itepred {

GaussHermite gauss_hermite(int n) {
  if (n < 1) fail(ErrorCode::InvalidSpec, "quadrature order must be >= 1");
  // Golub-Welsch: the Jacobi matrix of the (physicists') Hermite recurrence
  // has zero diagonal and off-diagonal sqrt(k/2); nodes are its eigenvalues
  // and weights are sqrt(pi) * v0^2 from the normalized eigenvectors.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success) fail(ErrorCode::Singular, "Hermite eigenproblem failed");

  const double mu0 = std::sqrt(M_PI);
  GaussHermite rule;
  rule.nodes = solver.eigenvalues();
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = solver.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v0 * v0;
  }
  return rule;
}

}  // namespace itepred
