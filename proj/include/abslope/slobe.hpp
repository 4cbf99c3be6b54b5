#pragma once

// Deterministic fast variant: every draw of the simulation step is replaced
// by its conditional expectation, and the M-step output is assigned directly.

#include <Eigen/Dense>

#include <cmath>

#include "abslope/saem.hpp"
#include "abslope/sampler.hpp"

namespace abslope {

/// Inclusion probabilities, computed jointly from the previous iteration's
/// weight matrix (Jacobi update). Same arithmetic as the sampler, no draw.
inline VectorXd expected_gamma(const ModelState& state, const LambdaSequence& lambda) {
    const VectorXd penalties = rank_penalties(state.beta, state.weights(), lambda);
    VectorXd pi(state.beta.size());
    for (Index j = 0; j < pi.size(); ++j) {
        pi[j] = gamma_inclusion_prob(state.beta[j], penalties[j], state.sigma, state.c, state.theta);
    }
    return pi;
}

/// (a + sum of inclusions) / (a + b + p); accepts soft inclusion weights.
inline double expected_theta(const VectorXd& gamma_surrogate, double a, double b, Index p) {
    if (!(a > 0.0 && b > 0.0)) throw std::domain_error("expected_theta: a and b must be positive");
    return (a + gamma_surrogate.sum()) / (a + b + static_cast<double>(p));
}

/// Posterior mean of the slab ratio,
///   E[c] = int_0^1 x^{a'} e^{-b'x} dx / int_0^1 x^{a'-1} e^{-b'x} dx.
/// Two complementary routes: the series form of the lower incomplete gamma
/// (exact at b' -> 0, overflows once b' - a' grows past ~700) and the
/// regularized-incomplete-gamma ratio (stable for large b', 0/0 at small b').
inline double expected_c_moments(double a_prime, double b_prime) {
    if (!(a_prime >= 1.0)) throw std::domain_error("expected_c: a' must be >= 1");
    if (b_prime < 0.0) throw std::domain_error("expected_c: b' must be nonnegative");
    if (b_prime > a_prime + 40.0) {
        return (a_prime / b_prime) * gamma_p(a_prime + 1.0, b_prime) / gamma_p(a_prime, b_prime);
    }
    const double s1 = lower_gamma_series_factor(a_prime + 1.0, b_prime);
    const double s0 = lower_gamma_series_factor(a_prime, b_prime);
    return a_prime / (a_prime + 1.0) * (s1 / s0);
}

/// Slab-ratio expectation with soft inclusion weights plugged into the count
/// and rate; ranks come from the previous iteration's weight matrix.
inline double expected_c(const VectorXd& gamma_surrogate, const VectorXd& beta, double sigma,
                         const LambdaSequence& lambda, const VectorXd& w_prev) {
    if (!(sigma > 0.0)) throw std::domain_error("expected_c: sigma must be positive");
    const VectorXd penalties = rank_penalties(beta, w_prev, lambda);
    double a_prime = 1.0;
    double b_prime = 0.0;
    for (Index j = 0; j < gamma_surrogate.size(); ++j) {
        a_prime += gamma_surrogate[j];
        b_prime += gamma_surrogate[j] * std::abs(beta[j]) * penalties[j] / sigma;
    }
    return expected_c_moments(a_prime, b_prime);
}

/// Mean of the missing-covariate conditional; shares the construction with
/// the sampler.
template <typename MaskRow>
inline VectorXd expected_missing(const VectorXd& x_row, const MaskRow& miss, double y_i,
                                 const VectorXd& beta, double sigma, const VectorXd& mu,
                                 const MatrixXd& Sigma) {
    return missing_conditional(x_row, miss, y_i, beta, sigma, mu, Sigma).mean();
}

/// Deterministic fit: expectation-imputation of the latent variables followed
/// by the full M-step. The seed only affects the initializer's CV folds; the
/// iteration itself has no randomness. Selected support thresholds the final
/// inclusion probabilities at 1/2.
inline FitResult fit_slobe_with_lambda(const Dataset& data, const Hyperparams& hyper,
                                       const LambdaSequence& lambda, std::uint64_t seed) {
    const Index n = data.n();
    const Index p = data.p();
    if (lambda.size() != p) throw std::invalid_argument("fit_slobe: lambda length must equal p");
    Initialization init = initialize(data, hyper, lambda, derive_seed(seed, 0));
    const bool shrink = p > n / 2;

    MatrixXd X = std::move(init.X);
    const VectorXd y = init.y;
    ScalingInfo scaling = init.scaling;
    ModelState state = init.state;

    FitResult fit;
    VectorXd pi = state.gamma;
    double final_rss = (y - X * state.beta).squaredNorm();

    for (int t = 1; t <= hyper.max_iter; ++t) {
        pi = expected_gamma(state, lambda);
        const double theta = expected_theta(pi, hyper.a, hyper.b, p);
        const double c = expected_c(pi, state.beta, state.sigma, lambda, state.weights());

        if (data.mask.any()) {
            const MatrixXd precision =
                robust_llt(state.Sigma, "fit_slobe (Sigma)")
                    .solve(MatrixXd::Identity(p, p));
            for (Index i = 0; i < n; ++i) {
                if (!data.mask.row(i).any()) continue;
                const auto cond = missing_conditional_with_precision(
                    VectorXd(X.row(i)), data.mask.row(i), y[i], state.beta, state.sigma,
                    state.mu, precision);
                const VectorXd mean = cond.mean();
                for (std::size_t a = 0; a < cond.indices.size(); ++a) {
                    X(i, cond.indices[a]) = mean[static_cast<Index>(a)];
                }
            }
        }

        RescaledMatrix rescaled = rescale_iteration(X, scaling);
        X = std::move(rescaled.X);
        scaling = rescaled.scaling;

        const VectorXd w = VectorXd::Ones(p) - (1.0 - c) * pi;
        const auto step = detail::m_step(X, y, lambda, w, state.sigma, shrink);

        const double delta2 = (step.mle.beta - state.beta).squaredNorm();
        state.beta = step.mle.beta;
        state.sigma = step.mle.sigma;
        state.mu = step.mle.mu;
        state.Sigma = step.mle.Sigma;
        state.gamma = pi;
        state.theta = std::min(std::max(theta, 1e-12), 1.0 - 1e-12);
        state.c = std::min(std::max(c, 1e-12), 1.0);
        final_rss = step.rss;

        TraceRow row;
        row.iteration = t;
        row.eta = 1.0;
        row.beta = state.beta;
        row.sigma = state.sigma;
        row.theta = state.theta;
        row.c = state.c;
        {
            Dataset snapshot = data;
            snapshot.X = X;
            snapshot.y = y;
            snapshot.centered = true;
            row.objective = complete_log_likelihood(state, snapshot, lambda);
        }
        fit.trace.push_back(std::move(row));
        fit.iterations = t;

        if (delta2 < hyper.tol) {
            fit.converged = true;
            break;
        }
    }

    fit.beta = state.beta;
    fit.gamma = (pi.array() >= 0.5).cast<double>();
    fit.sigma = state.sigma;
    fit.theta = state.theta;
    fit.c = state.c;
    fit.mu = state.mu;
    fit.Sigma = state.Sigma;
    fit.scaling = scaling;
    fit.gamma_freq = pi;
    fit.sigma_naive = std::sqrt(final_rss / static_cast<double>(n));
    fit.n_train = n;
    return fit;
}

/// Deterministic fit with the BH sequence at the requested FDR level.
inline FitResult fit_slobe(const Dataset& data, const Hyperparams& hyper, std::uint64_t seed) {
    return fit_slobe_with_lambda(data, hyper, bh_lambda(data.p(), hyper.q), seed);
}

} // namespace abslope
