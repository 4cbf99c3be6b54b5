#pragma once

// Sorted-l1 proximal operator and the (weighted) solver for
//
//   min_beta  1/2 ||y - X beta||^2 + sigma * sum_j lambda_j |beta|_(j),
//
// with |beta|_(1) >= ... >= |beta|_(p). The weighted variant reuses the plain
// solver through the change of variables z = W beta, X~ = X W^{-1}.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "abslope/types.hpp"

namespace abslope {

struct SlopeSolution {
    VectorXd beta;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective_trace;  // filled only when requested
};

struct SlopeOptions {
    double rho = 1.0;            // initial ADMM penalty parameter
    double tol_scale = 1e-6;     // residual threshold is tol_scale * sqrt(p)
    int max_iter = 5000;
    bool record_objectives = false;
};

inline double sorted_l1_norm(const VectorXd& beta, const LambdaSequence& lambda) {
    if (beta.size() != lambda.size()) {
        throw std::invalid_argument("sorted_l1_norm: beta and lambda lengths differ");
    }
    VectorXd mags = beta.cwiseAbs();
    std::sort(mags.data(), mags.data() + mags.size(), std::greater<double>());
    return mags.dot(lambda.values);
}

/// Prox of the sorted-l1 penalty: argmin_b 1/2||b - v||^2 + sum lambda_j |b|_(j).
/// Works on |v| sorted descending: subtract lambda, pool adjacent violators so
/// the pooled means are non-increasing, truncate at zero, then undo the sort
/// and signs.
inline VectorXd prox_sorted_l1(const VectorXd& v, const LambdaSequence& lambda) {
    const Index p = v.size();
    if (p != lambda.size()) {
        throw std::invalid_argument("prox_sorted_l1: v and lambda lengths differ");
    }

    std::vector<Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return std::abs(v[a]) > std::abs(v[b]);
    });

    // Stack of blocks [start, end] with running sum and pooled mean.
    std::vector<Index> start(static_cast<std::size_t>(p)), end(static_cast<std::size_t>(p));
    std::vector<double> sum(static_cast<std::size_t>(p)), mean(static_cast<std::size_t>(p));
    Index k = 0;
    for (Index i = 0; i < p; ++i) {
        start[k] = i;
        end[k] = i;
        sum[k] = std::abs(v[order[static_cast<std::size_t>(i)]]) - lambda[i];
        mean[k] = sum[k];
        while (k > 0 && mean[k - 1] <= mean[k]) {
            --k;
            end[k] = i;
            sum[k] += sum[k + 1];
            mean[k] = sum[k] / static_cast<double>(i - start[k] + 1);
        }
        ++k;
    }

    VectorXd out(p);
    for (Index blk = 0; blk < k; ++blk) {
        const double value = std::max(mean[blk], 0.0);
        for (Index i = start[blk]; i <= end[blk]; ++i) {
            const Index j = order[static_cast<std::size_t>(i)];
            out[j] = v[j] < 0.0 ? -value : value;
        }
    }
    return out;
}

namespace detail {

inline double slope_objective(const MatrixXd& X, const VectorXd& y, const VectorXd& beta,
                              const LambdaSequence& lambda, double sigma) {
    return 0.5 * (y - X * beta).squaredNorm() + sigma * sorted_l1_norm(beta, lambda);
}

} // namespace detail

/// ADMM solve of the SLOPE problem. Splitting beta = z with the prox applied
/// to z; the penalty parameter rescales by 2 whenever the primal/dual
/// residual ratio exceeds 10.
inline SlopeSolution solve_slope(const MatrixXd& X, const VectorXd& y,
                                 const LambdaSequence& lambda, double sigma,
                                 const SlopeOptions& opts = {}) {
    const Index n = X.rows();
    const Index p = X.cols();
    if (y.size() != n) throw std::invalid_argument("solve_slope: y length must equal rows of X");
    if (lambda.size() != p) throw std::invalid_argument("solve_slope: lambda length must equal cols of X");
    if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("solve_slope: non-finite input");
    if (!(sigma > 0.0)) throw std::invalid_argument("solve_slope: sigma must be positive");

    SlopeSolution sol;
    if (lambda.values.maxCoeff() == 0.0) {
        // Penalty-free case: plain least squares.
        sol.beta = X.colPivHouseholderQr().solve(y);
        sol.objective = detail::slope_objective(X, y, sol.beta, lambda, sigma);
        sol.converged = true;
        return sol;
    }

    const MatrixXd XtX = X.transpose() * X;
    const VectorXd Xty = X.transpose() * y;

    double rho = opts.rho;
    auto factorize = [&](double r) {
        MatrixXd A = XtX;
        A.diagonal().array() += r;
        return Eigen::LLT<MatrixXd>(A);
    };
    Eigen::LLT<MatrixXd> llt = factorize(rho);
    LambdaSequence scaled;
    scaled.values = lambda.values * (sigma / rho);

    VectorXd z = VectorXd::Zero(p);
    VectorXd u = VectorXd::Zero(p);
    VectorXd beta = VectorXd::Zero(p);

    const double tol = opts.tol_scale * std::sqrt(static_cast<double>(p));
    int it = 0;
    bool converged = false;
    for (; it < opts.max_iter; ++it) {
        beta = llt.solve(Xty + rho * (z - u));
        const VectorXd z_old = z;
        z = prox_sorted_l1(beta + u, scaled);
        u += beta - z;

        const double r_primal = (beta - z).norm();
        const double r_dual = rho * (z - z_old).norm();
        if (opts.record_objectives) {
            sol.objective_trace.push_back(detail::slope_objective(X, y, z, lambda, sigma));
        }
        if (r_primal < tol && r_dual < tol) {
            converged = true;
            ++it;
            break;
        }
        if (r_primal > 10.0 * r_dual && rho < 1e8) {
            rho *= 2.0;
            u /= 2.0;
            llt = factorize(rho);
            scaled.values = lambda.values * (sigma / rho);
        } else if (r_dual > 10.0 * r_primal && rho > 1e-8) {
            rho /= 2.0;
            u *= 2.0;
            llt = factorize(rho);
            scaled.values = lambda.values * (sigma / rho);
        }
    }

    sol.beta = z;   // exact zeros from the prox
    sol.objective = detail::slope_objective(X, y, sol.beta, lambda, sigma);
    sol.iterations = it;
    sol.converged = converged;
    return sol;
}

/// Weighted problem: min 1/2||y - X beta||^2 + sigma * sum_j w_j |beta_j|
/// lambda_{r(W beta, j)} for weights w_j in (0, 1]. Solved as plain SLOPE on
/// the reweighted design X W^{-1} followed by beta = W^{-1} z.
inline SlopeSolution solve_weighted_slope(const MatrixXd& X, const VectorXd& y,
                                          const LambdaSequence& lambda, const VectorXd& w,
                                          double sigma, const SlopeOptions& opts = {}) {
    const Index p = X.cols();
    if (w.size() != p) throw std::invalid_argument("solve_weighted_slope: weight length must equal cols of X");
    for (Index j = 0; j < p; ++j) {
        if (!(w[j] > 0.0 && w[j] <= 1.0)) {
            throw std::invalid_argument("solve_weighted_slope: weights must lie in (0, 1]");
        }
    }

    MatrixXd Xw = X;
    for (Index j = 0; j < p; ++j) Xw.col(j) /= w[j];

    SlopeSolution sol = solve_slope(Xw, y, lambda, sigma, opts);
    sol.beta = sol.beta.cwiseQuotient(w);
    // Objective value is unchanged by the change of variables; recompute from
    // the returned coordinates for the record.
    const auto ranks = magnitude_ranks(w.cwiseProduct(sol.beta));
    double penalty = 0.0;
    for (Index j = 0; j < p; ++j) {
        penalty += w[j] * std::abs(sol.beta[j]) * lambda[ranks[static_cast<std::size_t>(j)]];
    }
    sol.objective = 0.5 * (y - X * sol.beta).squaredNorm() + sigma * penalty;
    return sol;
}

} // namespace abslope
