#pragma once

// The full stochastic-approximation EM fit: simulation step, M-step blocks,
// step-size schedule, and the driver loop.

#include <Eigen/Dense>

#include <cmath>
#include <utility>
#include <vector>

#include "abslope/lasso.hpp"
#include "abslope/sampler.hpp"
#include "abslope/slope.hpp"
#include "abslope/standardize.hpp"
#include "abslope/types.hpp"

namespace abslope {

/// Penalized complete-data log-likelihood: multivariate normal covariate
/// term, regression term, Bernoulli inclusion terms, and the weighted
/// sorted-l1 penalty. gamma may hold soft inclusion weights.
inline double complete_log_likelihood(const ModelState& state, const Dataset& data,
                                      const LambdaSequence& lambda) {
    const Index n = data.n();
    const Index p = data.p();
    const MatrixXd& X = data.X;

    const Eigen::LLT<MatrixXd> llt = robust_llt(state.Sigma, "complete_log_likelihood");
    const MatrixXd L = llt.matrixL();
    double log_det = 0.0;
    for (Index j = 0; j < p; ++j) log_det += 2.0 * std::log(L(j, j));

    double quad = 0.0;
    for (Index i = 0; i < n; ++i) {
        const VectorXd centered = X.row(i).transpose() - state.mu;
        quad += centered.dot(llt.solve(centered));
    }
    const double gaussian = -0.5 * static_cast<double>(n) *
                                (static_cast<double>(p) * std::log(2.0 * std::numbers::pi) + log_det) -
                            0.5 * quad;

    const double rss = (data.y - X * state.beta).squaredNorm();
    const double regression = -static_cast<double>(n) * std::log(state.sigma) -
                              rss / (2.0 * state.sigma * state.sigma);

    const double active = state.gamma.sum();
    const double bernoulli = active * std::log(state.theta) +
                             (static_cast<double>(p) - active) * std::log1p(-state.theta);

    const VectorXd w = state.weights();
    const VectorXd penalties = rank_penalties(state.beta, w, lambda);
    double penalty = 0.0;
    for (Index j = 0; j < p; ++j) {
        penalty += w[j] * std::abs(state.beta[j]) * penalties[j];
    }
    return gaussian + regression + bernoulli - penalty / state.sigma;
}

/// Noise-sd update: the positive root of n sigma^2 - P sigma - RSS = 0 with
/// P the weighted sorted-l1 penalty value.
inline double update_sigma(const VectorXd& beta, const VectorXd& w, const LambdaSequence& lambda,
                           double rss, Index n) {
    if (rss < 0.0) throw std::domain_error("update_sigma: rss must be nonnegative");
    if (n < 1) throw std::domain_error("update_sigma: n must be at least 1");
    const VectorXd penalties = rank_penalties(beta, w, lambda);
    double P = 0.0;
    for (Index j = 0; j < beta.size(); ++j) {
        P += penalties[j] * w[j] * std::abs(beta[j]);
    }
    const double dn = static_cast<double>(n);
    return (P + std::sqrt(P * P + 4.0 * dn * rss)) / (2.0 * dn);
}

/// Ledoit-Wolf linear shrinkage toward the identity: Sigma = rho1 I + rho2 S
/// with coefficients minimizing expected quadratic risk.
inline MatrixXd ledoit_wolf(const MatrixXd& X, double* rho1_out = nullptr, double* rho2_out = nullptr) {
    const Index n = X.rows();
    const Index p = X.cols();
    const VectorXd mean = X.colwise().mean();
    MatrixXd centered = X.rowwise() - mean.transpose();
    const MatrixXd S = centered.transpose() * centered / static_cast<double>(n);

    const double m = S.trace() / static_cast<double>(p);
    const double d2 = (S - m * MatrixXd::Identity(p, p)).squaredNorm() / static_cast<double>(p);
    if (d2 < 1e-14) {
        // Sample covariance already (numerically) a multiple of the identity.
        const double value = std::max(m, 1e-8);
        if (rho1_out) *rho1_out = value;
        if (rho2_out) *rho2_out = 0.0;
        return value * MatrixXd::Identity(p, p);
    }

    double b_bar2 = 0.0;
    for (Index i = 0; i < n; ++i) {
        const VectorXd row = centered.row(i);
        b_bar2 += (row * row.transpose() - S).squaredNorm() / static_cast<double>(p);
    }
    b_bar2 /= static_cast<double>(n) * static_cast<double>(n);
    const double b2 = std::min(b_bar2, d2);
    const double a2 = d2 - b2;

    const double rho1 = b2 / d2 * m;
    const double rho2 = a2 / d2;
    if (rho1_out) *rho1_out = rho1;
    if (rho2_out) *rho2_out = rho2;
    return rho1 * MatrixXd::Identity(p, p) + rho2 * S;
}

/// Empirical mean and covariance of the imputed matrix; the covariance block
/// switches to Ledoit-Wolf shrinkage when requested.
inline std::pair<VectorXd, MatrixXd> update_mu_sigma(const MatrixXd& X, bool shrink) {
    if (X.rows() < 2) throw std::invalid_argument("update_mu_sigma: need at least two rows");
    const VectorXd mu = X.colwise().mean();
    if (shrink) {
        return {mu, ledoit_wolf(X)};
    }
    const MatrixXd centered = X.rowwise() - mu.transpose();
    MatrixXd S = centered.transpose() * centered / static_cast<double>(X.rows());
    return {mu, std::move(S)};
}

struct ParamBundle {
    VectorXd beta;
    double sigma = 1.0;
    VectorXd mu;
    MatrixXd Sigma;
};

/// Robbins-Monro style interpolation psi <- psi + eta (psi_mle - psi). The
/// endpoints return the bundles unchanged, not up to rounding.
inline ParamBundle sa_update(const ParamBundle& prev, const ParamBundle& mle, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw std::domain_error("sa_update: eta must lie in [0, 1]");
    if (eta == 1.0) return mle;
    if (eta == 0.0) return prev;
    ParamBundle out;
    out.beta = prev.beta + eta * (mle.beta - prev.beta);
    out.sigma = prev.sigma + eta * (mle.sigma - prev.sigma);
    out.mu = prev.mu + eta * (mle.mu - prev.mu);
    out.Sigma = prev.Sigma + eta * (mle.Sigma - prev.Sigma);
    return out;
}

/// Unit steps through the burn-in, then 1/(t - t0).
inline double step_size(int t, int t0) {
    if (t < 1) throw std::domain_error("step_size: t must be at least 1");
    return t <= t0 ? 1.0 : 1.0 / static_cast<double>(t - t0);
}

struct TraceRow {
    int iteration = 0;
    double eta = 0.0;
    VectorXd beta;
    double sigma = 0.0;
    double theta = 0.0;
    double c = 0.0;
    double objective = 0.0;
};

struct FitResult {
    VectorXd beta;        // model (standardized) scale
    VectorXd gamma;       // selected support, 0/1
    double sigma = 0.0;
    double theta = 0.0;
    double c = 0.0;
    VectorXd mu;          // covariate moments in model scale
    MatrixXd Sigma;
    ScalingInfo scaling;
    bool converged = false;
    int iterations = 0;
    std::vector<TraceRow> trace;
    VectorXd gamma_freq;  // inclusion frequency after burn-in (or final probabilities)
    double sigma_naive = 0.0;  // sqrt(RSS/n) at the final iterate
    Index n_train = 0;

    /// Coefficients mapped back to the original column scale.
    VectorXd beta_original() const {
        const double sqrt_n = std::sqrt(static_cast<double>(n_train));
        return beta.array() / (sqrt_n * scaling.s.array());
    }

    double intercept_original() const {
        return scaling.y_mean - scaling.m.dot(beta_original());
    }
};

struct Initialization {
    ModelState state;
    MatrixXd X;           // mean-imputed, standardized
    VectorXd y;           // centered
    ScalingInfo scaling;
};

/// Starting values: LASSO coefficients on mean-imputed data, empirical
/// covariate moments, residual-sd noise level, and the slab ratio derived
/// from the average fitted magnitude.
inline Initialization initialize(const Dataset& data, const Hyperparams& hyper,
                                 const LambdaSequence& lambda, std::uint64_t seed) {
    hyper.validate();
    const StandardizedData std_data = initial_standardize(data);
    const Index n = data.n();
    const Index p = data.p();

    Initialization init;
    init.X = std_data.data.X;
    init.y = std_data.data.y;
    init.scaling = std_data.scaling;

    ModelState& state = init.state;
    state.beta = lasso_cv(init.X, init.y, seed);
    state.sigma = (init.y - init.X * state.beta).norm() / std::sqrt(static_cast<double>(n - 1));
    if (!(state.sigma > 0.0)) state.sigma = 1e-8;

    const bool shrink = p > n / 2;
    auto [mu, Sigma] = update_mu_sigma(init.X, shrink);
    state.mu = std::move(mu);
    state.Sigma = std::move(Sigma);

    // The slab ratio is the inverse average signal magnitude, so the signal
    // set feeding it must not be diluted by the many near-zero coefficients a
    // CV-tuned LASSO keeps; count as signals only coefficients clearing the
    // top penalty sigma * lambda_1.
    const double threshold = state.sigma * lambda[0];
    state.gamma = (state.beta.cwiseAbs().array() > threshold).cast<double>();
    const double support = state.gamma.sum();
    if (support > 0.0) {
        double magnitude = 0.0;
        for (Index j = 0; j < p; ++j) {
            if (state.gamma[j] != 0.0) magnitude += std::abs(state.beta[j]);
        }
        const double avg = magnitude / (support + 1.0);
        state.c = std::min(state.sigma * lambda[0] / avg, 1.0);
    } else {
        state.c = 1.0;
    }
    state.c = std::max(state.c, 1e-6);
    state.theta = (support + hyper.a) / (static_cast<double>(p) + hyper.b);
    state.theta = std::min(std::max(state.theta, 1e-8), 1.0 - 1e-8);
    return init;
}

/// Convenience overload with the BH sequence at the requested FDR level.
inline Initialization initialize(const Dataset& data, const Hyperparams& hyper, std::uint64_t seed) {
    return initialize(data, hyper, bh_lambda(data.p(), hyper.q), seed);
}

namespace detail {

struct IterationOutput {
    ParamBundle mle;
    double rss = 0.0;
};

/// Shared M-step: weighted SLOPE for beta with the previous sigma, the
/// closed-form sigma root, and covariate moments.
inline IterationOutput m_step(const MatrixXd& X, const VectorXd& y, const LambdaSequence& lambda,
                              const VectorXd& w, double sigma_prev, bool shrink) {
    IterationOutput out;
    const SlopeSolution sol = solve_weighted_slope(X, y, lambda, w, sigma_prev);
    out.mle.beta = sol.beta;
    out.rss = (y - X * sol.beta).squaredNorm();
    out.mle.sigma = update_sigma(sol.beta, w, lambda, out.rss, X.rows());
    auto [mu, Sigma] = update_mu_sigma(X, shrink);
    out.mle.mu = std::move(mu);
    out.mle.Sigma = std::move(Sigma);
    return out;
}

} // namespace detail

/// SAEM driver with an explicit penalty sequence. Each iteration draws the
/// latent variables, refreshes the standardization, maximizes the completed
/// likelihood, and interpolates the parameters with the step-size schedule.
/// The selected support is the final sweep's draw.
inline FitResult fit_abslope_with_lambda(const Dataset& data, const Hyperparams& hyper,
                                         const LambdaSequence& lambda, std::uint64_t seed) {
    const Index n = data.n();
    const Index p = data.p();
    if (lambda.size() != p) throw std::invalid_argument("fit_abslope: lambda length must equal p");
    Initialization init = initialize(data, hyper, lambda, derive_seed(seed, 0));
    const bool shrink = p > n / 2;

    Dataset work = data;
    work.X = std::move(init.X);
    work.y = init.y;
    work.centered = true;
    ScalingInfo scaling = init.scaling;
    ModelState state = init.state;

    Rng rng(derive_seed(seed, 1));
    FitResult fit;
    fit.trace.reserve(static_cast<std::size_t>(hyper.max_iter));
    VectorXd gamma_freq = VectorXd::Zero(p);
    int freq_count = 0;
    double final_rss = (work.y - work.X * state.beta).squaredNorm();

    for (int t = 1; t <= hyper.max_iter; ++t) {
        const GibbsResult sim = gibbs_sweep(state, work, lambda, hyper, rng);

        RescaledMatrix rescaled = rescale_iteration(sim.X, scaling);
        work.X = std::move(rescaled.X);
        scaling = rescaled.scaling;

        const VectorXd w = VectorXd::Ones(p) - (1.0 - sim.c) * sim.gamma;
        const auto step = detail::m_step(work.X, work.y, lambda, w, state.sigma, shrink);

        const double eta = step_size(t, hyper.t0);
        ParamBundle prev{state.beta, state.sigma, state.mu, state.Sigma};
        ParamBundle next = sa_update(prev, step.mle, eta);

        const double delta2 = (next.beta - state.beta).squaredNorm();
        state.beta = std::move(next.beta);
        state.sigma = next.sigma;
        state.mu = std::move(next.mu);
        state.Sigma = std::move(next.Sigma);
        state.gamma = sim.gamma;
        state.theta = sim.theta;
        state.c = sim.c;
        final_rss = (work.y - work.X * state.beta).squaredNorm();

        if (t > hyper.t0) {
            gamma_freq += sim.gamma;
            ++freq_count;
        }

        TraceRow row;
        row.iteration = t;
        row.eta = eta;
        row.beta = state.beta;
        row.sigma = state.sigma;
        row.theta = state.theta;
        row.c = state.c;
        row.objective = complete_log_likelihood(state, work, lambda);
        fit.trace.push_back(std::move(row));
        fit.iterations = t;

        if (delta2 < hyper.tol) {
            fit.converged = true;
            break;
        }
    }

    fit.beta = state.beta;
    fit.gamma = state.gamma;
    fit.sigma = state.sigma;
    fit.theta = state.theta;
    fit.c = state.c;
    fit.mu = state.mu;
    fit.Sigma = state.Sigma;
    fit.scaling = scaling;
    fit.gamma_freq = freq_count > 0 ? VectorXd(gamma_freq / freq_count) : VectorXd::Zero(p);
    fit.sigma_naive = std::sqrt(final_rss / static_cast<double>(n));
    fit.n_train = n;
    return fit;
}

/// SAEM fit with the BH sequence at the requested FDR level.
inline FitResult fit_abslope(const Dataset& data, const Hyperparams& hyper, std::uint64_t seed) {
    return fit_abslope_with_lambda(data, hyper, bh_lambda(data.p(), hyper.q), seed);
}

} // namespace abslope
