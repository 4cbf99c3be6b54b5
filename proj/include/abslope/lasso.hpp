#pragma once

// Coordinate-descent LASSO with a small cross-validated grid. Only used to
// seed the main fits from mean-imputed data.

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <vector>

#include "abslope/rng.hpp"
#include "abslope/types.hpp"

namespace abslope {

namespace detail {

inline double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

/// Cyclic coordinate descent for 1/2||y - X b||^2 + alpha ||b||_1.
inline VectorXd lasso_cd(const MatrixXd& X, const VectorXd& y, double alpha,
                         VectorXd beta, int max_sweeps = 1000, double tol = 1e-8) {
    const Index p = X.cols();
    VectorXd col_sq(p);
    for (Index j = 0; j < p; ++j) col_sq[j] = X.col(j).squaredNorm();
    VectorXd residual = y - X * beta;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (Index j = 0; j < p; ++j) {
            if (col_sq[j] <= 0.0) continue;
            const double old = beta[j];
            const double rho = X.col(j).dot(residual) + col_sq[j] * old;
            const double updated = soft_threshold(rho, alpha) / col_sq[j];
            if (updated != old) {
                residual += X.col(j) * (old - updated);
                beta[j] = updated;
                max_delta = std::max(max_delta, std::abs(updated - old));
            }
        }
        if (max_delta < tol) break;
    }
    return beta;
}

} // namespace detail

/// LASSO fit with alpha picked by 5-fold cross validation over a fixed
/// log-spaced grid below ||X^T y||_inf. The seed only controls fold
/// assignment.
inline VectorXd lasso_cv(const MatrixXd& X, const VectorXd& y, std::uint64_t seed,
                         int grid_size = 15, int folds = 5) {
    const Index n = X.rows();
    const Index p = X.cols();
    const double alpha_max = (X.transpose() * y).cwiseAbs().maxCoeff();
    if (!(alpha_max > 0.0)) return VectorXd::Zero(p);

    std::vector<double> grid(static_cast<std::size_t>(grid_size));
    const double ratio = std::pow(0.02, 1.0 / (grid_size - 1));
    for (int g = 0; g < grid_size; ++g) grid[static_cast<std::size_t>(g)] = alpha_max * std::pow(ratio, g);

    // Shuffled fold assignment.
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    Rng rng(derive_seed(seed, 0x1a550));
    for (Index i = n - 1; i > 0; --i) {
        const Index j = static_cast<Index>(rng.raw() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }

    std::vector<double> cv_error(static_cast<std::size_t>(grid_size), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<Index> train, test;
        for (Index i = 0; i < n; ++i) {
            if (static_cast<int>(i) % folds == f) {
                test.push_back(perm[static_cast<std::size_t>(i)]);
            } else {
                train.push_back(perm[static_cast<std::size_t>(i)]);
            }
        }
        MatrixXd Xtr(static_cast<Index>(train.size()), p);
        VectorXd ytr(static_cast<Index>(train.size()));
        for (std::size_t i = 0; i < train.size(); ++i) {
            Xtr.row(static_cast<Index>(i)) = X.row(train[i]);
            ytr[static_cast<Index>(i)] = y[train[i]];
        }
        VectorXd warm = VectorXd::Zero(p);
        for (int g = 0; g < grid_size; ++g) {
            warm = detail::lasso_cd(Xtr, ytr, grid[static_cast<std::size_t>(g)], warm);
            double err = 0.0;
            for (Index t : test) {
                const double r = y[t] - X.row(t).dot(warm);
                err += r * r;
            }
            cv_error[static_cast<std::size_t>(g)] += err;
        }
    }

    int best = 0;
    for (int g = 1; g < grid_size; ++g) {
        if (cv_error[static_cast<std::size_t>(g)] < cv_error[static_cast<std::size_t>(best)]) best = g;
    }

    VectorXd warm = VectorXd::Zero(p);
    for (int g = 0; g <= best; ++g) {
        warm = detail::lasso_cd(X, y, grid[static_cast<std::size_t>(g)], warm);
    }
    return warm;
}

} // namespace abslope
