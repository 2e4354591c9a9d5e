#include "itepred/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "itepred/rng.hpp"

namespace itepred {

namespace {

constexpr double kKktTol = 1e-8;       // elastic net target (post: <= 1e-7)
constexpr double kGroupKktTol = 5e-7;  // HGL target (post: <= 1e-6)
constexpr int kOuterCap = 100;
constexpr int kInnerCap = 10000;

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

double log1pexp(double e) {
  return e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
}

/// -(1/n) * Bernoulli log-likelihood at linear predictor eta.
double negloglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    acc += log1pexp(eta[i]) - y[i] * eta[i];
  }
  return acc / static_cast<double>(eta.size());
}

Eigen::VectorXd penalty_factors(const DesignMatrix& design, const PenaltyConfig& config) {
  Eigen::VectorXd pf = Eigen::VectorXd::Ones(design.cols());
  pf[0] = 0.0;
  if (!config.penalize_treatment_main) {
    int tcol = design.treatment_column();
    if (tcol >= 0) pf[tcol] = 0.0;
  }
  return pf;
}

double en_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& offset, const Eigen::VectorXd& beta, double lambda,
                    double alpha, const Eigen::VectorXd& pf) {
  double value = negloglik(x * beta + offset, y);
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    value += lambda * pf[j] *
             (alpha * std::abs(beta[j]) + 0.5 * (1.0 - alpha) * beta[j] * beta[j]);
  }
  return value;
}

/// Mean response of the null model (unpenalized columns only), used for
/// lambda_max. With everything penalized this is the intercept-only model,
/// i.e. mu = ybar.
Eigen::VectorXd null_model_mu(const DesignMatrix& design, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& pf) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    if (pf[j] == 0.0) cols.push_back(j);
  }
  Eigen::VectorXd offset =
      design.offset ? *design.offset : Eigen::VectorXd::Zero(design.n());
  if (cols.size() == 1) {
    const double ybar = y.mean();
    if (ybar <= 0.0 || ybar >= 1.0) fail(ErrorCode::Separation, "single-class outcome");
    if (!design.offset) {
      return Eigen::VectorXd::Constant(design.n(), ybar);
    }
  }
  Eigen::MatrixXd x0(design.n(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) x0.col(static_cast<Eigen::Index>(k)) = design.stored.col(cols[k]);
  RawFit fit = fit_logistic_matrix(x0, y, offset, Eigen::VectorXd::Ones(x0.cols()));
  Eigen::VectorXd eta = x0 * fit.beta + offset;
  return eta.unaryExpr([](double e) { return expit(e); });
}

/// Exact solution for lambda >= lambda_max of a selection penalty: the
/// unpenalized columns are fitted, everything else is exactly zero.
Eigen::VectorXd null_fit_beta(const DesignMatrix& design, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& pf) {
  Eigen::VectorXd offset =
      design.offset ? *design.offset : Eigen::VectorXd::Zero(design.n());
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    if (pf[j] == 0.0) cols.push_back(j);
  }
  Eigen::MatrixXd x0(design.n(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    x0.col(static_cast<Eigen::Index>(k)) = design.stored.col(cols[k]);
  }
  RawFit fit = fit_logistic_matrix(x0, y, offset, Eigen::VectorXd::Ones(x0.cols()));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(design.cols());
  for (std::size_t k = 0; k < cols.size(); ++k) beta[cols[k]] = fit.beta[static_cast<Eigen::Index>(k)];
  return beta;
}

FitResult finalize_fit(const DesignMatrix& design, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& beta, int iterations) {
  Eigen::VectorXd offset =
      design.offset ? *design.offset : Eigen::VectorXd::Zero(design.n());
  FitResult result;
  result.beta_fit = beta;
  result.coefficients = unstandardize_coefficients(beta, design);
  result.log_likelihood =
      -negloglik(design.stored * beta + offset, y) * static_cast<double>(design.n());
  result.deviance = -2.0 * result.log_likelihood;
  result.iterations = iterations;
  result.converged = true;
  result.n = static_cast<int>(design.n());
  result.p_effective = static_cast<int>((beta.array() != 0.0).count());
  return result;
}

void require_standardized(const DesignMatrix& design, const char* where) {
  if (!design.scaling.standardized) {
    fail(ErrorCode::InvalidSpec, std::string(where) + " requires a standardized design");
  }
}

// ---------------------------------------------------------------------------
// Hierarchical group lasso: latent overlapped-group parametrization.
//
// Latent vector theta = [b0, bt, bm_1..bm_p, (phi_t, phi_m, phi_z) per
// interaction candidate]. Latent coordinates share stored design columns, so
// eta = X * collapse(theta) and the latent gradient is the per-column
// gradient replicated through the same map.
// ---------------------------------------------------------------------------

struct HglLayout {
  int p = 0;           // number of main effects in the design
  int q = 0;           // number of interaction candidates
  int tcol = -1;       // design column of the treatment main effect
  std::vector<int> main_cols;    // design column per main effect
  std::vector<int> inter_cols;   // design column per interaction
  std::vector<int> inter_main;   // latent main index per interaction candidate

  int dim() const { return 2 + p + 3 * q; }
  int group_offset(int j) const { return 2 + p + 3 * j; }
};

HglLayout make_layout(const DesignMatrix& design) {
  HglLayout layout;
  layout.tcol = design.treatment_column();
  if (layout.tcol < 0) {
    fail(ErrorCode::InvalidSpec, "hierarchical group lasso requires a treatment column");
  }
  std::vector<int> main_latent_of_covariate(
      design.spec.main_columns.empty()
          ? 0
          : *std::max_element(design.spec.main_columns.begin(), design.spec.main_columns.end()) + 1,
      -1);
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    const ColumnInfo& info = design.columns[j];
    if (info.role == ColumnRole::Main) {
      main_latent_of_covariate[info.covariate] = layout.p;
      layout.main_cols.push_back(static_cast<int>(j));
      ++layout.p;
    }
  }
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    const ColumnInfo& info = design.columns[j];
    if (info.role == ColumnRole::Interaction) {
      layout.inter_cols.push_back(static_cast<int>(j));
      layout.inter_main.push_back(main_latent_of_covariate[info.covariate]);
      ++layout.q;
    }
  }
  if (layout.q == 0) {
    fail(ErrorCode::InvalidSpec, "hierarchical group lasso requires interaction candidates");
  }
  return layout;
}

/// collapse latent -> per-design-column coefficients.
Eigen::VectorXd hgl_collapse(const HglLayout& layout, const Eigen::VectorXd& theta,
                             Eigen::Index d) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
  c[0] = theta[0];
  c[layout.tcol] = theta[1];
  for (int m = 0; m < layout.p; ++m) c[layout.main_cols[m]] = theta[2 + m];
  for (int j = 0; j < layout.q; ++j) {
    const int off = layout.group_offset(j);
    c[layout.tcol] += theta[off + 0];
    c[layout.main_cols[layout.inter_main[j]]] += theta[off + 1];
    c[layout.inter_cols[j]] = theta[off + 2];
  }
  return c;
}

/// Per-column gradient lifted back to latent coordinates.
Eigen::VectorXd hgl_lift(const HglLayout& layout, const Eigen::VectorXd& g_cols) {
  Eigen::VectorXd g(layout.dim());
  g[0] = g_cols[0];
  g[1] = g_cols[layout.tcol];
  for (int m = 0; m < layout.p; ++m) g[2 + m] = g_cols[layout.main_cols[m]];
  for (int j = 0; j < layout.q; ++j) {
    const int off = layout.group_offset(j);
    g[off + 0] = g_cols[layout.tcol];
    g[off + 1] = g_cols[layout.main_cols[layout.inter_main[j]]];
    g[off + 2] = g_cols[layout.inter_cols[j]];
  }
  return g;
}

struct HglPenalty {
  double lambda = 0.0;
  double group_weight = std::sqrt(3.0);
  bool penalize_treatment = true;
};

Eigen::VectorXd hgl_prox(const HglLayout& layout, const Eigen::VectorXd& theta, double step,
                         const HglPenalty& pen) {
  Eigen::VectorXd out = theta;
  // intercept unpenalized
  out[1] = pen.penalize_treatment ? soft_threshold(theta[1], step * pen.lambda) : theta[1];
  for (int m = 0; m < layout.p; ++m) {
    out[2 + m] = soft_threshold(theta[2 + m], step * pen.lambda);
  }
  const double gt = step * pen.lambda * pen.group_weight;
  for (int j = 0; j < layout.q; ++j) {
    const int off = layout.group_offset(j);
    const double norm = std::sqrt(theta[off] * theta[off] + theta[off + 1] * theta[off + 1] +
                                  theta[off + 2] * theta[off + 2]);
    const double scale = norm > gt ? 1.0 - gt / norm : 0.0;
    out[off] = theta[off] * scale;
    out[off + 1] = theta[off + 1] * scale;
    out[off + 2] = theta[off + 2] * scale;
  }
  return out;
}

double hgl_penalty_value(const HglLayout& layout, const Eigen::VectorXd& theta,
                         const HglPenalty& pen) {
  double value = 0.0;
  if (pen.penalize_treatment) value += std::abs(theta[1]);
  for (int m = 0; m < layout.p; ++m) value += std::abs(theta[2 + m]);
  for (int j = 0; j < layout.q; ++j) {
    const int off = layout.group_offset(j);
    value += pen.group_weight *
             std::sqrt(theta[off] * theta[off] + theta[off + 1] * theta[off + 1] +
                       theta[off + 2] * theta[off + 2]);
  }
  return pen.lambda * value;
}

/// Max-norm KKT residual of the overlapped-group objective.
double hgl_kkt(const HglLayout& layout, const Eigen::VectorXd& theta,
               const Eigen::VectorXd& g_latent, const HglPenalty& pen) {
  double worst = std::abs(g_latent[0]);  // intercept: plain stationarity
  auto l1_resid = [&](double g, double b) {
    if (b != 0.0) return std::abs(g + pen.lambda * (b > 0 ? 1.0 : -1.0));
    return std::max(0.0, std::abs(g) - pen.lambda);
  };
  worst = std::max(worst, pen.penalize_treatment ? l1_resid(g_latent[1], theta[1])
                                                 : std::abs(g_latent[1]));
  for (int m = 0; m < layout.p; ++m) {
    worst = std::max(worst, l1_resid(g_latent[2 + m], theta[2 + m]));
  }
  const double gw = pen.lambda * pen.group_weight;
  for (int j = 0; j < layout.q; ++j) {
    const int off = layout.group_offset(j);
    Eigen::Vector3d g{g_latent[off], g_latent[off + 1], g_latent[off + 2]};
    Eigen::Vector3d b{theta[off], theta[off + 1], theta[off + 2]};
    const double bnorm = b.norm();
    if (bnorm > 0.0) {
      worst = std::max(worst, (g + gw * b / bnorm).cwiseAbs().maxCoeff());
    } else {
      worst = std::max(worst, std::max(0.0, g.norm() - gw));
    }
  }
  return worst;
}

struct HglSolution {
  Eigen::VectorXd theta;
  int iterations = 0;
};

/// FISTA with backtracking and function restarts on the latent objective.
/// Accepted iterates decrease the objective monotonically.
HglSolution hgl_solve(const DesignMatrix& design, const Eigen::VectorXd& y,
                      const HglLayout& layout, const HglPenalty& pen,
                      const Eigen::VectorXd* theta_init) {
  const Eigen::Index n = design.n();
  const Eigen::MatrixXd& x = design.stored;
  Eigen::VectorXd offset = design.offset ? *design.offset : Eigen::VectorXd::Zero(n);

  const int dim = layout.dim();
  Eigen::VectorXd theta =
      theta_init && theta_init->size() == dim ? *theta_init : Eigen::VectorXd::Zero(dim);

  auto smooth = [&](const Eigen::VectorXd& th, Eigen::VectorXd* eta_out = nullptr) {
    Eigen::VectorXd eta = x * hgl_collapse(layout, th, x.cols()) + offset;
    if (eta_out) *eta_out = eta;
    return negloglik(eta, y);
  };
  auto gradient = [&](const Eigen::VectorXd& eta) {
    Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
    Eigen::VectorXd g_cols = x.transpose() * (mu - y) / static_cast<double>(n);
    return hgl_lift(layout, g_cols);
  };

  // Duplicated columns at most double the spectral bound of X'X.
  double lipschitz =
      0.25 * 2.0 * (x.transpose() * x).operatorNorm() / static_cast<double>(n);
  const double step0 = 1.0 / std::max(lipschitz, 1e-12);
  double step = step0;

  Eigen::VectorXd eta;
  double f_x = smooth(theta, &eta);
  double obj_x = f_x + hgl_penalty_value(layout, theta, pen);

  Eigen::VectorXd momentum = theta;  // extrapolation point
  double t_k = 1.0;
  const int max_iter = 50000;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    Eigen::VectorXd eta_y;
    const double f_y = smooth(momentum, &eta_y);
    Eigen::VectorXd g_y = gradient(eta_y);

    // Backtracking on the majorization at the extrapolation point.
    Eigen::VectorXd candidate;
    double f_candidate = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      candidate = hgl_prox(layout, momentum - step * g_y, step, pen);
      Eigen::VectorXd diff = candidate - momentum;
      f_candidate = smooth(candidate);
      const double quad = f_y + g_y.dot(diff) + 0.5 / step * diff.squaredNorm();
      if (f_candidate <= quad + 1e-15) break;
      step *= 0.5;
    }
    double obj_candidate = f_candidate + hgl_penalty_value(layout, candidate, pen);

    if (obj_candidate > obj_x + 1e-15) {
      // Momentum overshot: restart from the last accepted point.
      t_k = 1.0;
      momentum = theta;
      Eigen::VectorXd eta_x;
      smooth(theta, &eta_x);
      Eigen::VectorXd g_x = gradient(eta_x);
      for (int bt = 0; bt < 60; ++bt) {
        candidate = hgl_prox(layout, theta - step * g_x, step, pen);
        Eigen::VectorXd diff = candidate - theta;
        f_candidate = smooth(candidate);
        const double quad = f_x + g_x.dot(diff) + 0.5 / step * diff.squaredNorm();
        if (f_candidate <= quad + 1e-15) break;
        step *= 0.5;
      }
      obj_candidate = f_candidate + hgl_penalty_value(layout, candidate, pen);
    }

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_k * t_k));
    momentum = candidate + ((t_k - 1.0) / t_next) * (candidate - theta);
    t_k = t_next;
    theta = candidate;
    f_x = f_candidate;
    obj_x = obj_candidate;
    step = std::min(step * 1.1, step0);  // recover from early backtracks

    if (iter % 10 == 0 || iter > max_iter - 2) {
      Eigen::VectorXd eta_x;
      smooth(theta, &eta_x);
      if (hgl_kkt(layout, theta, gradient(eta_x), pen) <= kGroupKktTol) {
        return {theta, iter + 1};
      }
    }
  }
  Eigen::VectorXd eta_x;
  smooth(theta, &eta_x);
  if (hgl_kkt(layout, theta, gradient(eta_x), pen) <= kGroupKktTol) return {theta, iter};
  fail(ErrorCode::NoConvergence, "hierarchical group lasso did not reach the KKT tolerance");
}

}  // namespace

const char* penalty_family_name(PenaltyFamily family) noexcept {
  switch (family) {
    case PenaltyFamily::Ridge: return "ridge";
    case PenaltyFamily::Lasso: return "lasso";
    case PenaltyFamily::ElasticNet: return "elastic_net";
    case PenaltyFamily::HierarchicalGroupLasso: return "hgl";
  }
  return "unknown";
}

double PenaltyConfig::mixing() const {
  switch (family) {
    case PenaltyFamily::Ridge: return 0.0;
    case PenaltyFamily::Lasso: return 1.0;
    case PenaltyFamily::ElasticNet: return alpha;
    case PenaltyFamily::HierarchicalGroupLasso: return 0.0;
  }
  return alpha;
}

double elastic_net_kkt(const DesignMatrix& design, const Eigen::VectorXd& outcome,
                       const PenaltyConfig& config, const Eigen::VectorXd& beta_fit) {
  const Eigen::Index n = design.n();
  const double alpha = config.mixing();
  const double lambda = config.lambda;
  Eigen::VectorXd pf = penalty_factors(design, config);
  Eigen::VectorXd offset = design.offset ? *design.offset : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd eta = design.stored * beta_fit + offset;
  Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
  Eigen::VectorXd g = design.stored.transpose() * (mu - outcome) / static_cast<double>(n);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta_fit.size(); ++j) {
    const double gj = g[j] + lambda * (1.0 - alpha) * pf[j] * beta_fit[j];
    double resid;
    if (pf[j] == 0.0 || beta_fit[j] != 0.0) {
      const double sign = beta_fit[j] > 0 ? 1.0 : (beta_fit[j] < 0 ? -1.0 : 0.0);
      resid = std::abs(gj + lambda * alpha * pf[j] * sign);
    } else {
      resid = std::max(0.0, std::abs(gj) - lambda * alpha * pf[j]);
    }
    worst = std::max(worst, resid);
  }
  return worst;
}

FitResult fit_elastic_net(const DesignMatrix& design, const Eigen::VectorXd& outcome,
                          const PenaltyConfig& config, const Eigen::VectorXd* warm_start) {
  require_standardized(design, "fit_elastic_net");
  if (!(config.lambda >= 0.0) || !std::isfinite(config.lambda)) {
    fail(ErrorCode::InvalidSpec, "lambda must be finite and nonnegative");
  }
  if (config.lambda == 0.0) {
    FitResult ml = fit_ml(design, outcome);
    ml.p_effective = static_cast<int>((ml.beta_fit.array() != 0.0).count());
    return ml;
  }

  const Eigen::Index n = design.n();
  const Eigen::Index d = design.cols();
  const Eigen::MatrixXd& x = design.stored;
  const double alpha = config.mixing();
  const double lambda = config.lambda;
  Eigen::VectorXd pf = penalty_factors(design, config);
  Eigen::VectorXd offset = design.offset ? *design.offset : Eigen::VectorXd::Zero(n);

  // At or above lambda_max the null model solves the problem exactly; this
  // keeps the selection-penalty zeros exact at the head of a path.
  if (alpha > 0.0 && lambda >= lambda_max(design, outcome, config)) {
    return finalize_fit(design, outcome, null_fit_beta(design, outcome, pf), 0);
  }

  Eigen::VectorXd beta =
      warm_start && warm_start->size() == d ? *warm_start : Eigen::VectorXd::Zero(d);
  double obj = en_objective(x, outcome, offset, beta, lambda, alpha, pf);

  int outer = 0;
  for (; outer < kOuterCap; ++outer) {
    if (elastic_net_kkt(design, outcome, config, beta) <= kKktTol) {
      return finalize_fit(design, outcome, beta, outer);
    }

    // IRLS working response at the current beta.
    Eigen::VectorXd eta = x * beta + offset;
    Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
    Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).max(1e-9).matrix();
    Eigen::VectorXd z = (eta - offset) + ((outcome - mu).array() / w.array()).matrix();

    Eigen::VectorXd wx2(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      wx2[j] = (w.array() * x.col(j).array().square()).sum() / static_cast<double>(n);
    }

    // Cyclic coordinate descent on the penalized weighted least squares.
    Eigen::VectorXd res = z - x * beta;
    Eigen::VectorXd beta_cd = beta;
    for (int sweep = 0; sweep < kInnerCap; ++sweep) {
      double max_delta = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double num =
            (w.array() * x.col(j).array() * res.array()).sum() / static_cast<double>(n) +
            wx2[j] * beta_cd[j];
        const double den = wx2[j] + lambda * (1.0 - alpha) * pf[j];
        const double updated = soft_threshold(num, lambda * alpha * pf[j]) / den;
        const double delta = updated - beta_cd[j];
        if (delta != 0.0) {
          res -= delta * x.col(j);
          beta_cd[j] = updated;
          max_delta = std::max(max_delta, std::abs(delta));
        }
      }
      if (max_delta <= 1e-12) break;
    }

    // Safeguard: back off toward the previous iterate if the true objective
    // got worse (possible when the quadratic model is poor far from the
    // optimum).
    double obj_cd = en_objective(x, outcome, offset, beta_cd, lambda, alpha, pf);
    double t = 1.0;
    while (obj_cd > obj + 1e-15 && t > 1e-8) {
      t *= 0.5;
      Eigen::VectorXd blended = beta + t * (beta_cd - beta);
      obj_cd = en_objective(x, outcome, offset, blended, lambda, alpha, pf);
      if (obj_cd <= obj + 1e-15) {
        beta_cd = blended;
        break;
      }
    }
    beta = beta_cd;
    obj = obj_cd;
  }
  if (elastic_net_kkt(design, outcome, config, beta) <= kKktTol) {
    return finalize_fit(design, outcome, beta, outer);
  }
  fail(ErrorCode::NoConvergence, "elastic net did not reach the KKT tolerance");
}

FitResult fit_hgl(const DesignMatrix& design, const Eigen::VectorXd& outcome,
                  const PenaltyConfig& config, const Eigen::VectorXd* warm_start) {
  require_standardized(design, "fit_hgl");
  if (config.lambda == 0.0) {
    FitResult ml = fit_ml(design, outcome);
    ml.p_effective = static_cast<int>((ml.beta_fit.array() != 0.0).count());
    return ml;
  }
  HglLayout layout = make_layout(design);
  if (config.lambda >= lambda_max(design, outcome, config)) {
    Eigen::VectorXd pf = penalty_factors(design, config);
    return finalize_fit(design, outcome, null_fit_beta(design, outcome, pf), 0);
  }
  HglPenalty pen{config.lambda, std::sqrt(3.0), config.penalize_treatment_main};
  HglSolution solution = hgl_solve(design, outcome, layout, pen, warm_start);
  Eigen::VectorXd beta = hgl_collapse(layout, solution.theta, design.cols());
  FitResult result = finalize_fit(design, outcome, beta, solution.iterations);
  return result;
}

double lambda_max(const DesignMatrix& design, const Eigen::VectorXd& outcome,
                  const PenaltyConfig& config) {
  require_standardized(design, "lambda_max");
  const Eigen::Index n = design.n();
  Eigen::VectorXd pf = penalty_factors(design, config);
  Eigen::VectorXd mu0 = null_model_mu(design, outcome, pf);
  Eigen::VectorXd g = design.stored.transpose() * (outcome - mu0) / static_cast<double>(n);

  if (config.family == PenaltyFamily::HierarchicalGroupLasso) {
    HglLayout layout = make_layout(design);
    double worst = 0.0;
    if (config.penalize_treatment_main) worst = std::abs(g[layout.tcol]);
    for (int m = 0; m < layout.p; ++m) worst = std::max(worst, std::abs(g[layout.main_cols[m]]));
    const double gw = std::sqrt(3.0);
    for (int j = 0; j < layout.q; ++j) {
      Eigen::Vector3d gg{g[layout.tcol], g[layout.main_cols[layout.inter_main[j]]],
                         g[layout.inter_cols[j]]};
      worst = std::max(worst, gg.norm() / gw);
    }
    return worst;
  }

  double worst = 0.0;
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    if (pf[j] > 0.0) worst = std::max(worst, std::abs(g[j]));
  }
  // Ridge has no finite all-zero threshold; the glmnet convention divides by
  // a floor mixing value instead.
  return worst / std::max(config.mixing(), 1e-3);
}

namespace {

using PathFitter = FitResult (*)(const DesignMatrix&, const Eigen::VectorXd&,
                                 const PenaltyConfig&, const Eigen::VectorXd*);

/// Warm-started fits along a fixed lambda grid; failures recorded per lambda.
struct PathState {
  std::vector<FitResult> fits;
  std::vector<bool> ok;
};

PathState path_fits(const DesignMatrix& design, const Eigen::VectorXd& outcome,
                    const PenaltyConfig& config, const std::vector<double>& lambdas) {
  const bool hgl = config.family == PenaltyFamily::HierarchicalGroupLasso;
  PathState state;
  state.fits.resize(lambdas.size());
  state.ok.assign(lambdas.size(), false);

  Eigen::VectorXd warm;  // stored-scale beta (EN) or latent theta (HGL)
  bool have_warm = false;

  // For HGL the warm chain lives in latent coordinates; keep it across
  // lambdas by re-solving with the final theta of the previous fit.
  HglLayout layout;
  double own_lmax = 0.0;
  if (hgl) {
    layout = make_layout(design);
    try {
      own_lmax = lambda_max(design, outcome, config);
    } catch (const Error&) {
      own_lmax = std::numeric_limits<double>::infinity();
    }
  }

  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    PenaltyConfig point = config;
    point.lambda = lambdas[i];
    try {
      if (hgl) {
        if (point.lambda == 0.0) {
          state.fits[i] = fit_hgl(design, outcome, point, nullptr);
        } else if (point.lambda >= own_lmax) {
          Eigen::VectorXd pf = penalty_factors(design, point);
          Eigen::VectorXd beta0 = null_fit_beta(design, outcome, pf);
          state.fits[i] = finalize_fit(design, outcome, beta0, 0);
          warm = Eigen::VectorXd::Zero(layout.dim());
          warm[0] = beta0[0];
          if (!point.penalize_treatment_main) warm[1] = beta0[layout.tcol];
          have_warm = true;
        } else {
          HglPenalty pen{point.lambda, std::sqrt(3.0), point.penalize_treatment_main};
          HglSolution sol = hgl_solve(design, outcome, layout, pen, have_warm ? &warm : nullptr);
          Eigen::VectorXd beta = hgl_collapse(layout, sol.theta, design.cols());
          state.fits[i] = finalize_fit(design, outcome, beta, sol.iterations);
          warm = sol.theta;
          have_warm = true;
        }
      } else {
        state.fits[i] = fit_elastic_net(design, outcome, point, have_warm ? &warm : nullptr);
        warm = state.fits[i].beta_fit;
        have_warm = true;
      }
      state.ok[i] = true;
    } catch (const Error&) {
      state.ok[i] = false;
      have_warm = false;
    }
  }
  return state;
}

std::vector<double> lambda_grid(double lmax, int length, double min_ratio) {
  std::vector<double> grid(length);
  if (length == 1) {
    grid[0] = lmax;
    return grid;
  }
  const double log_max = std::log(lmax);
  const double log_min = std::log(lmax * min_ratio);
  for (int i = 0; i < length; ++i) {
    grid[i] = std::exp(log_max + (log_min - log_max) * i / (length - 1));
  }
  return grid;
}

}  // namespace

LambdaPath lambda_path(const DesignMatrix& design, const Eigen::VectorXd& outcome,
                       const PenaltyConfig& config) {
  if (config.path_length < 2) fail(ErrorCode::InvalidSpec, "path_length must be >= 2");
  if (!(config.lambda_min_ratio > 0.0 && config.lambda_min_ratio < 1.0)) {
    fail(ErrorCode::InvalidSpec, "lambda_min_ratio must be in (0,1)");
  }
  const double lmax = lambda_max(design, outcome, config);
  LambdaPath path;
  path.lambdas = lambda_grid(lmax, config.path_length, config.lambda_min_ratio);
  PathState state = path_fits(design, outcome, config, path.lambdas);
  path.fits = std::move(state.fits);
  path.ok = std::move(state.ok);
  return path;
}

CvResult cv_select(const DesignMatrix& design, const Eigen::VectorXd& outcome,
                   const PenaltyConfig& config, int k, std::uint64_t seed) {
  const int n = static_cast<int>(design.n());
  if (k < 2) fail(ErrorCode::InvalidSpec, "cross-validation needs k >= 2");
  if (n < k) fail(ErrorCode::InvalidSpec, "cross-validation needs n >= k");

  // Full-data path defines the lambda grid and the candidate final fits.
  LambdaPath full = lambda_path(design, outcome, config);
  const std::size_t L = full.lambdas.size();

  // Seeded permutation into k near-equal blocks (first n%k folds one larger).
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 engine(seed);
  std::shuffle(perm.begin(), perm.end(), engine);
  std::vector<int> fold_of_row(n);
  {
    int pos = 0;
    const int base = n / k;
    const int rem = n % k;
    for (int f = 0; f < k; ++f) {
      const int size = base + (f < rem ? 1 : 0);
      for (int s = 0; s < size; ++s) fold_of_row[perm[pos++]] = f + 1;
    }
  }

  std::vector<double> total_deviance(L, 0.0);
  std::vector<bool> valid(L, true);

  for (int f = 1; f <= k; ++f) {
    std::vector<int> train_rows;
    std::vector<int> test_rows;
    for (int i = 0; i < n; ++i) {
      (fold_of_row[i] == f ? test_rows : train_rows).push_back(i);
    }
    DesignMatrix train = subset_design(design, train_rows);
    Eigen::VectorXd y_train(static_cast<Eigen::Index>(train_rows.size()));
    for (std::size_t i = 0; i < train_rows.size(); ++i) y_train[static_cast<Eigen::Index>(i)] = outcome[train_rows[i]];

    PathState state = path_fits(train, y_train, config, full.lambdas);

    for (std::size_t l = 0; l < L; ++l) {
      if (!state.ok[l]) {
        valid[l] = false;  // DegenerateFold and friends: +inf for this lambda
        continue;
      }
      // Held-out deviance from raw-scale coefficients on the raw rows.
      Eigen::VectorXd beta_raw = unscale_coefficients(state.fits[l].beta_fit, train.scaling);
      double dev = 0.0;
      for (int row : test_rows) {
        double eta = design.raw.row(row).dot(beta_raw);
        if (design.offset) eta += (*design.offset)[row];
        const double mu = std::clamp(expit(eta), kRiskClamp, 1.0 - kRiskClamp);
        dev += -2.0 * (outcome[row] * std::log(mu) + (1.0 - outcome[row]) * std::log(1.0 - mu));
      }
      total_deviance[l] += dev;
    }
  }

  CvResult result;
  result.fold_assignments = std::move(fold_of_row);
  result.lambdas = full.lambdas;
  result.mean_deviance.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    result.mean_deviance[l] =
        valid[l] ? total_deviance[l] / n : std::numeric_limits<double>::infinity();
  }

  // Minimum mean deviance; ties keep the larger lambda (earlier index).
  std::size_t best = L;
  for (std::size_t l = 0; l < L; ++l) {
    if (!std::isfinite(result.mean_deviance[l]) || !full.ok[l]) continue;
    if (best == L || result.mean_deviance[l] < result.mean_deviance[best]) best = l;
  }
  if (best == L) {
    fail(ErrorCode::NoConvergence, "no lambda produced a valid cross-validated fit");
  }
  result.chosen_lambda = full.lambdas[best];
  result.chosen_fit = full.fits[best];
  return result;
}

}  // namespace itepred
