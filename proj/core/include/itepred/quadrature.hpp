#pragma once

#include <Eigen/Dense>

namespace itepred {

/// Gauss-Hermite rule for weight exp(-t^2) on (-inf, inf), computed by
/// Golub-Welsch from the Hermite recurrence. sum(weights) = sqrt(pi).
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

GaussHermite gauss_hermite(int n);

/// E[f(mu + sigma Z)] for Z ~ N(0,1) via a Gauss-Hermite rule.
template <typename F>
double gauss_hermite_expectation(const GaussHermite& rule, double mu, double sigma, F&& f) {
  constexpr double inv_sqrt_pi = 0.56418958354775628695;
  constexpr double sqrt2 = 1.41421356237309504880;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
    acc += rule.weights[i] * f(mu + sqrt2 * sigma * rule.nodes[i]);
  }
  return acc * inv_sqrt_pi;
}

}  // namespace itepred
