#pragma once

// Gibbs simulation step: conditional draws of the inclusion indicators, the
// sparsity weight, the slab ratio, and the missing covariates.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "abslope/rng.hpp"
#include "abslope/types.hpp"

namespace abslope {

/// Posterior inclusion probability of a single coefficient,
///
///   theta c e^{-c lam |b|/sigma} / [(1-theta) e^{-lam |b|/sigma}
///                                   + theta c e^{-c lam |b|/sigma}],
///
/// evaluated with log-sum-exp stabilization. rank_penalty is the lambda value
/// at the coefficient's rank in W beta.
inline double gamma_inclusion_prob(double beta_j, double rank_penalty, double sigma,
                                   double c, double theta) {
    if (!(c > 0.0 && c <= 1.0)) throw std::domain_error("gamma_inclusion_prob: c must lie in (0, 1]");
    if (!(theta > 0.0 && theta < 1.0)) throw std::domain_error("gamma_inclusion_prob: theta must lie in (0, 1)");
    if (!(sigma > 0.0)) throw std::domain_error("gamma_inclusion_prob: sigma must be positive");

    const double scaled = rank_penalty * std::abs(beta_j) / sigma;
    const double log_slab = std::log(theta) + std::log(c) - c * scaled;
    const double log_spike = std::log1p(-theta) - scaled;
    const double prob = std::exp(log_slab - log_sum_exp(log_spike, log_slab));
    // Keep the open interval even where the exact value rounds to 0 or 1.
    return std::min(std::max(prob, 1e-300), 1.0 - 2.3e-16);
}

/// Rank-penalty lookup for every coordinate: lambda at the rank of w_j beta_j
/// within |W beta| sorted descending.
inline VectorXd rank_penalties(const VectorXd& beta, const VectorXd& w, const LambdaSequence& lambda) {
    const auto ranks = magnitude_ranks(w.cwiseProduct(beta));
    VectorXd out(beta.size());
    for (Index j = 0; j < beta.size(); ++j) {
        out[j] = lambda[ranks[static_cast<std::size_t>(j)]];
    }
    return out;
}

/// Independent Bernoulli draws with ranks frozen at the previous iteration's
/// weight matrix.
inline VectorXd sample_gamma(const ModelState& state, const LambdaSequence& lambda, Rng& rng) {
    const VectorXd penalties = rank_penalties(state.beta, state.weights(), lambda);
    VectorXd gamma(state.beta.size());
    for (Index j = 0; j < gamma.size(); ++j) {
        const double prob = gamma_inclusion_prob(state.beta[j], penalties[j], state.sigma,
                                                 state.c, state.theta);
        gamma[j] = rng.bernoulli(prob) ? 1.0 : 0.0;
    }
    return gamma;
}

/// Beta(a + #active, b + #inactive), clamped away from {0, 1}.
inline double sample_theta(const VectorXd& gamma, double a, double b, Rng& rng) {
    if (!(a > 0.0 && b > 0.0)) throw std::domain_error("sample_theta: a and b must be positive");
    const double active = gamma.sum();
    const double inactive = static_cast<double>(gamma.size()) - active;
    double theta = rng.beta(a + active, b + inactive);
    constexpr double eps = 1e-12;
    return std::min(std::max(theta, eps), 1.0 - eps);
}

namespace detail {

/// Gamma(shape, rate) truncated to [0, 1]. Rejection from the untruncated
/// distribution when most mass already sits inside; inverse cdf on the
/// regularized incomplete gamma otherwise. A vanishing rate turns the density
/// into x^{shape-1} on [0, 1], sampled in closed form.
inline double sample_truncated_gamma(double shape, double rate, Rng& rng) {
    if (!(shape >= 1.0)) throw std::domain_error("sample_truncated_gamma: shape must be >= 1");
    if (rate < 1e-12) {
        return std::pow(rng.uniform_pos(), 1.0 / shape);
    }
    const double mass = gamma_p(shape, rate);  // P(X <= 1) for X ~ Gamma(shape, rate)
    if (mass > 0.99) {
        for (;;) {
            const double x = rng.gamma(shape) / rate;
            if (x <= 1.0) return x;
        }
    }
    const double u = rng.uniform_pos() * mass;
    return std::min(gamma_p_inverse(shape, u) / rate, 1.0);
}

} // namespace detail

/// Slab-ratio draw: Gamma(1 + #active, sum of active |beta_j| lambda / sigma)
/// truncated to [0, 1]; ranks come from the previous iteration's weights.
/// The result is clamped into (0, 1].
inline double sample_c(const VectorXd& gamma, const VectorXd& beta, double sigma,
                       const LambdaSequence& lambda, const VectorXd& w_prev, Rng& rng) {
    if (!(sigma > 0.0)) throw std::domain_error("sample_c: sigma must be positive");
    const VectorXd penalties = rank_penalties(beta, w_prev, lambda);
    double shape = 1.0;
    double rate = 0.0;
    for (Index j = 0; j < gamma.size(); ++j) {
        if (gamma[j] != 0.0) {
            shape += 1.0;
            rate += std::abs(beta[j]) * penalties[j] / sigma;
        }
    }
    const double c = detail::sample_truncated_gamma(shape, rate, rng);
    return std::min(std::max(c, 1e-12), 1.0);
}

/// Conditional law of the missing block of one row given its observed
/// covariates and response. In the transformed variable z_i = tau_i x_i the
/// precision is B with unit diagonal and the mean solves B mu~ = rhs.
struct MissingConditional {
    std::vector<Index> indices;   // missing coordinates, ascending
    VectorXd mu_tilde;
    MatrixXd B;
    VectorXd tau;

    VectorXd mean() const { return mu_tilde.cwiseQuotient(tau); }

    MatrixXd covariance() const {
        const Index m = tau.size();
        MatrixXd cov = robust_llt(B, "MissingConditional").solve(MatrixXd::Identity(m, m));
        for (Index i = 0; i < m; ++i) {
            for (Index j = 0; j < m; ++j) {
                cov(i, j) /= tau[i] * tau[j];
            }
        }
        return cov;
    }
};

/// Builds the conditional from a precomputed precision matrix (Sigma^{-1}),
/// which callers factor once per iteration and reuse across rows.
template <typename MaskRow>
inline MissingConditional missing_conditional_with_precision(
    const VectorXd& x_row, const MaskRow& miss, double y_i, const VectorXd& beta,
    double sigma, const VectorXd& mu, const MatrixXd& precision) {
    const Index p = x_row.size();
    std::vector<Index> missing;
    for (Index j = 0; j < p; ++j) {
        if (miss[j]) missing.push_back(j);
    }
    if (missing.empty()) {
        throw std::invalid_argument("missing_conditional: row has no missing entries");
    }
    const Index m = static_cast<Index>(missing.size());
    const double inv_s2 = 1.0 / (sigma * sigma);

    double r = y_i;
    for (Index k = 0; k < p; ++k) {
        if (!miss[k]) r -= x_row[k] * beta[k];
    }

    MissingConditional cond;
    cond.indices = missing;
    cond.tau.resize(m);
    VectorXd rhs(m);
    for (Index a = 0; a < m; ++a) {
        const Index i = missing[static_cast<std::size_t>(a)];
        const double m_i = precision.row(i).dot(mu);
        double u_i = 0.0;
        for (Index k = 0; k < p; ++k) {
            if (!miss[k]) u_i += x_row[k] * precision(i, k);
        }
        cond.tau[a] = std::sqrt(precision(i, i) + beta[i] * beta[i] * inv_s2);
        rhs[a] = (r * beta[i] * inv_s2 + m_i - u_i) / cond.tau[a];
    }

    cond.B.resize(m, m);
    for (Index a = 0; a < m; ++a) {
        cond.B(a, a) = 1.0;
        const Index i = missing[static_cast<std::size_t>(a)];
        for (Index b = a + 1; b < m; ++b) {
            const Index j = missing[static_cast<std::size_t>(b)];
            const double value = (beta[i] * beta[j] * inv_s2 + precision(i, j)) /
                                 (cond.tau[a] * cond.tau[b]);
            cond.B(a, b) = value;
            cond.B(b, a) = value;
        }
    }

    cond.mu_tilde = robust_llt(cond.B, "missing_conditional").solve(rhs);
    return cond;
}

template <typename MaskRow>
inline MissingConditional missing_conditional(const VectorXd& x_row, const MaskRow& miss,
                                              double y_i, const VectorXd& beta, double sigma,
                                              const VectorXd& mu, const MatrixXd& Sigma) {
    const MatrixXd precision =
        robust_llt(Sigma, "missing_conditional (Sigma)")
            .solve(MatrixXd::Identity(Sigma.rows(), Sigma.cols()));
    return missing_conditional_with_precision(x_row, miss, y_i, beta, sigma, mu, precision);
}

/// Draw z ~ N(mu~, B^{-1}) through the Cholesky factor of B, return z / tau.
inline VectorXd sample_missing(const MissingConditional& cond, Rng& rng) {
    const Index m = cond.tau.size();
    VectorXd w(m);
    for (Index i = 0; i < m; ++i) w[i] = rng.normal();
    const Eigen::LLT<MatrixXd> llt = robust_llt(cond.B, "sample_missing");
    // v = L^{-T} w has covariance (L L^T)^{-1} = B^{-1}.
    const VectorXd v = llt.matrixU().solve(w);
    return (cond.mu_tilde + v).cwiseQuotient(cond.tau);
}

struct GibbsResult {
    VectorXd gamma;
    double theta = 0.0;
    double c = 0.0;
    MatrixXd X;   // imputations refreshed at masked cells
};

/// One full sweep in the order gamma, theta, c, missing covariates. Rows
/// without missing entries are untouched; each row draws from its own seeded
/// stream so the sweep is reproducible regardless of traversal order.
inline GibbsResult gibbs_sweep(const ModelState& state, const Dataset& data,
                               const LambdaSequence& lambda, const Hyperparams& hyper, Rng& rng) {
    GibbsResult out;
    out.gamma = sample_gamma(state, lambda, rng);
    out.theta = sample_theta(out.gamma, hyper.a, hyper.b, rng);
    out.c = sample_c(out.gamma, state.beta, state.sigma, lambda, state.weights(), rng);
    out.X = data.X;

    const bool any_missing = data.mask.any();
    if (any_missing) {
        const MatrixXd precision =
            robust_llt(state.Sigma, "gibbs_sweep (Sigma)")
                .solve(MatrixXd::Identity(state.Sigma.rows(), state.Sigma.cols()));
        const std::uint64_t row_base = rng.raw();
        for (Index i = 0; i < data.n(); ++i) {
            if (!data.mask.row(i).any()) continue;
            Rng row_rng(derive_seed(row_base, static_cast<std::uint64_t>(i)));
            const auto cond = missing_conditional_with_precision(
                VectorXd(out.X.row(i)), data.mask.row(i), data.y[i], state.beta, state.sigma,
                state.mu, precision);
            const VectorXd draw = sample_missing(cond, row_rng);
            for (std::size_t a = 0; a < cond.indices.size(); ++a) {
                out.X(i, cond.indices[a]) = draw[static_cast<Index>(a)];
            }
        }
    }
    return out;
}

} // namespace abslope
