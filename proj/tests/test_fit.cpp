#include <catch2/catch_amalgamated.hpp>

#include "abslope/saem.hpp"
#include "abslope/simulate.hpp"
#include "abslope/slobe.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace abslope;

namespace {

ModelState random_state(Index p, Rng& rng) {
    ModelState s;
    s.beta = oracle::random_vector(p, rng, 1.5);
    s.sigma = 0.5 + rng.uniform();
    s.gamma = VectorXd::Zero(p);
    for (Index j = 0; j < p; ++j) s.gamma[j] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    s.c = 0.2 + 0.7 * rng.uniform();
    s.theta = 0.1 + 0.8 * rng.uniform();
    s.mu = oracle::random_vector(p, rng);
    s.Sigma = oracle::random_spd(p, rng);
    return s;
}

Dataset random_complete_data(Index n, Index p, Rng& rng) {
    Dataset d;
    d.X = oracle::random_matrix(n, p, rng);
    d.y = oracle::random_vector(n, rng, 2.0);
    d.mask = MaskMatrix::Constant(n, p, false);
    return d;
}

// Independent term-by-term recomputation of the penalized complete-data
// log-likelihood.
double reference_likelihood(const ModelState& s, const Dataset& d, const LambdaSequence& lambda) {
    const Index n = d.n();
    const Index p = d.p();
    const MatrixXd Sinv = s.Sigma.inverse();
    double gauss = 0.0;
    const double logdet = std::log(s.Sigma.determinant());
    for (Index i = 0; i < n; ++i) {
        const VectorXd dev = d.X.row(i).transpose() - s.mu;
        gauss += -0.5 * (p * std::log(2.0 * std::numbers::pi) + logdet) - 0.5 * dev.dot(Sinv * dev);
    }
    const double reg = -static_cast<double>(n) * std::log(s.sigma) -
                       (d.y - d.X * s.beta).squaredNorm() / (2.0 * s.sigma * s.sigma);
    double bern = 0.0;
    for (Index j = 0; j < p; ++j) {
        bern += s.gamma[j] * std::log(s.theta) + (1.0 - s.gamma[j]) * std::log(1.0 - s.theta);
    }
    const VectorXd w = s.weights();
    const VectorXd z = w.cwiseProduct(s.beta);
    const auto ranks = magnitude_ranks(z);
    double pen = 0.0;
    for (Index j = 0; j < p; ++j) {
        pen += w[j] * std::abs(s.beta[j]) * lambda[ranks[static_cast<std::size_t>(j)]];
    }
    return gauss + reg + bern - pen / s.sigma;
}

} // namespace

TEST_CASE("complete_log_likelihood reduces to the regression term at beta = gamma = 0") {
    Rng rng(3);
    const Index n = 15, p = 4;
    Dataset d = random_complete_data(n, p, rng);
    ModelState s = random_state(p, rng);
    s.beta = VectorXd::Zero(p);
    s.gamma = VectorXd::Zero(p);

    const LambdaSequence lambda = bh_lambda(p, 0.1);
    const double value = complete_log_likelihood(s, d, lambda);

    // Penalty vanishes, so value = gaussian + regression + bernoulli.
    const MatrixXd Sinv = s.Sigma.inverse();
    double gauss = 0.0;
    const double logdet = std::log(s.Sigma.determinant());
    for (Index i = 0; i < n; ++i) {
        const VectorXd dev = d.X.row(i).transpose() - s.mu;
        gauss += -0.5 * (p * std::log(2.0 * std::numbers::pi) + logdet) - 0.5 * dev.dot(Sinv * dev);
    }
    const double bern = p * std::log1p(-s.theta);
    const double regression = value - gauss - bern;
    CHECK(regression ==
          Catch::Approx(-n * std::log(s.sigma) - d.y.squaredNorm() / (2.0 * s.sigma * s.sigma))
              .margin(1e-8));
}

TEST_CASE("complete_log_likelihood Bernoulli terms are gamma-free at theta = 1/2") {
    Rng rng(5);
    const Index p = 5;
    Dataset d = random_complete_data(12, p, rng);
    ModelState s = random_state(p, rng);
    s.theta = 0.5;
    s.c = 1.0;  // weights are gamma-free, isolating the Bernoulli terms
    const LambdaSequence lambda = bh_lambda(p, 0.1);

    ModelState s2 = s;
    s2.gamma = VectorXd::Ones(p) - s.gamma;
    CHECK(complete_log_likelihood(s, d, lambda) ==
          Catch::Approx(complete_log_likelihood(s2, d, lambda)).margin(1e-10));
}

TEST_CASE("complete_log_likelihood matches an independent recomputation") {
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        const Index n = 10, p = 4;
        Dataset d = random_complete_data(n, p, rng);
        const ModelState s = random_state(p, rng);
        const LambdaSequence lambda = bh_lambda(p, 0.15);
        CHECK(complete_log_likelihood(s, d, lambda) ==
              Catch::Approx(reference_likelihood(s, d, lambda)).margin(1e-10));
    }
}

TEST_CASE("update_sigma closed form") {
    Rng rng(11);
    const Index p = 6, n = 50;
    // P = 0: classical MLE.
    CHECK(update_sigma(VectorXd::Zero(p), VectorXd::Ones(p), bh_lambda(p, 0.1), 12.5, n) ==
          Catch::Approx(std::sqrt(12.5 / n)).margin(1e-14));
    // RSS = 0: quadratic collapses to P/n.
    {
        VectorXd beta = oracle::random_vector(p, rng);
        VectorXd w = VectorXd::Ones(p) * 0.7;
        const LambdaSequence lambda = bh_lambda(p, 0.1);
        const VectorXd penalties = rank_penalties(beta, w, lambda);
        double P = 0.0;
        for (Index j = 0; j < p; ++j) P += penalties[j] * w[j] * std::abs(beta[j]);
        CHECK(update_sigma(beta, w, lambda, 0.0, n) == Catch::Approx(P / n).margin(1e-12));
    }
    // Random instance: positive root of n sigma^2 - P sigma - RSS = 0.
    for (int rep = 0; rep < 20; ++rep) {
        VectorXd beta = oracle::random_vector(p, rng, 2.0);
        VectorXd w(p);
        for (Index j = 0; j < p; ++j) w[j] = 0.2 + 0.8 * rng.uniform();
        const LambdaSequence lambda = bh_lambda(p, 0.1);
        const double rss = 3.0 * rng.uniform();
        const double sigma = update_sigma(beta, w, lambda, rss, n);
        const VectorXd penalties = rank_penalties(beta, w, lambda);
        double P = 0.0;
        for (Index j = 0; j < p; ++j) P += penalties[j] * w[j] * std::abs(beta[j]);
        CHECK(std::abs(n * sigma * sigma - P * sigma - rss) < 1e-10);
        CHECK(sigma > 0.0);
    }
}

TEST_CASE("update_mu_sigma: moments, degenerate shrinkage, and eigenvalue floor") {
    {
        // Identical rows: S = 0, shrunk matrix is a positive multiple of I.
        MatrixXd X = MatrixXd::Ones(8, 3);
        auto [mu, Sigma] = update_mu_sigma(X, true);
        CHECK((mu - VectorXd::Ones(3)).cwiseAbs().maxCoeff() < 1e-14);
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Sigma);
        CHECK(eig.eigenvalues().minCoeff() > 0.0);
        CHECK((Sigma - Sigma(0, 0) * MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
    }
    {
        // Consistency on N(0, I) draws.
        Rng rng(13);
        const MatrixXd X = oracle::random_matrix(1000, 5, rng);
        auto [mu_plain, S_plain] = update_mu_sigma(X, false);
        auto [mu_shrunk, S_shrunk] = update_mu_sigma(X, true);
        CHECK((S_plain - MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 0.1);
        CHECK((S_shrunk - MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 0.1);
        CHECK(mu_plain == mu_shrunk);
        // Plain path equals the textbook formula.
        const MatrixXd centered = X.rowwise() - mu_plain.transpose();
        const MatrixXd direct = centered.transpose() * centered / 1000.0;
        CHECK((S_plain - direct).cwiseAbs().maxCoeff() < 1e-12);
    }
    {
        // Shrinkage never lowers the smallest eigenvalue.
        Rng rng(17);
        for (int rep = 0; rep < 10; ++rep) {
            const Index n = 12, p = 6;
            const MatrixXd X = oracle::random_matrix(n, p, rng);
            auto [mu, S_plain] = update_mu_sigma(X, false);
            auto [mu2, S_shrunk] = update_mu_sigma(X, true);
            Eigen::SelfAdjointEigenSolver<MatrixXd> plain(S_plain), shrunk(S_shrunk);
            CHECK(shrunk.eigenvalues().minCoeff() >= plain.eigenvalues().minCoeff() - 1e-12);
        }
    }
}

TEST_CASE("sa_update endpoints and midpoint") {
    Rng rng(19);
    const Index p = 3;
    ParamBundle prev{oracle::random_vector(p, rng), 1.0, oracle::random_vector(p, rng),
                     oracle::random_spd(p, rng)};
    ParamBundle mle{oracle::random_vector(p, rng), 2.0, oracle::random_vector(p, rng),
                    oracle::random_spd(p, rng)};

    const ParamBundle at_one = sa_update(prev, mle, 1.0);
    CHECK(at_one.beta == mle.beta);
    CHECK(at_one.sigma == mle.sigma);
    CHECK(at_one.Sigma == mle.Sigma);

    const ParamBundle at_zero = sa_update(prev, mle, 0.0);
    CHECK(at_zero.beta == prev.beta);
    CHECK(at_zero.sigma == prev.sigma);

    ParamBundle a = prev, b = mle;
    a.beta.resize(2);
    a.beta << 0.0, 2.0;
    b.beta.resize(2);
    b.beta << 2.0, 0.0;
    const ParamBundle mid = sa_update(a, b, 0.5);
    CHECK(mid.beta[0] == Catch::Approx(1.0));
    CHECK(mid.beta[1] == Catch::Approx(1.0));
}

TEST_CASE("step_size schedule") {
    CHECK(step_size(5, 20) == 1.0);
    CHECK(step_size(20, 20) == 1.0);
    CHECK(step_size(21, 20) == 1.0);
    CHECK(step_size(30, 20) == Catch::Approx(0.1));
    CHECK_THROWS_AS(step_size(0, 20), std::domain_error);
}

TEST_CASE("initialize: moments, sigma formula, and zero-support guard") {
    Rng rng(23);
    {
        const Index n = 40, p = 6;
        Dataset d = random_complete_data(n, p, rng);
        Hyperparams hyper = Hyperparams::defaults(p);
        const Initialization init = initialize(d, hyper, 1);

        // Complete data: no imputation, moments are plain sample moments.
        auto [mu, Sigma] = update_mu_sigma(init.X, p > n / 2);
        CHECK((init.state.mu - mu).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((init.state.Sigma - Sigma).cwiseAbs().maxCoeff() < 1e-14);

        const double expected_sigma =
            (init.y - init.X * init.state.beta).norm() / std::sqrt(static_cast<double>(n - 1));
        CHECK(init.state.sigma == Catch::Approx(std::max(expected_sigma, 1e-8)).margin(1e-12));

        const double support = (init.state.beta.array() != 0.0).cast<double>().sum();
        CHECK(init.state.theta ==
              Catch::Approx((support + hyper.a) / (p + hyper.b)).margin(1e-12));
        CHECK(init.state.c > 0.0);
        CHECK(init.state.c <= 1.0);
    }
    {
        // Constant response: centered y is zero, LASSO returns beta = 0, and
        // the zero-support guard sets c = 1.
        const Index n = 20, p = 4;
        Dataset d = random_complete_data(n, p, rng);
        d.y = VectorXd::Constant(n, 3.7);
        Hyperparams hyper = Hyperparams::defaults(p);
        const Initialization init = initialize(d, hyper, 1);
        CHECK(init.state.beta.cwiseAbs().maxCoeff() == 0.0);
        CHECK(init.state.c == 1.0);
        CHECK(init.state.theta == Catch::Approx(hyper.a / (p + hyper.b)).margin(1e-12));
    }
}

TEST_CASE("M-step weakly increases the likelihood blocks it maximizes") {
    Rng rng(29);
    const Index n = 30, p = 5;
    Dataset d = random_complete_data(n, p, rng);
    const auto std_data = initial_standardize(d);
    const LambdaSequence lambda = bh_lambda(p, 0.1);

    for (int rep = 0; rep < 5; ++rep) {
        VectorXd w(p);
        for (Index j = 0; j < p; ++j) w[j] = rng.uniform() < 0.4 ? 0.3 : 1.0;
        const double sigma_prev = 0.5 + rng.uniform();
        const VectorXd beta_prev = oracle::random_vector(p, rng);

        auto q1 = [&](const VectorXd& beta) {
            const VectorXd penalties = rank_penalties(beta, w, lambda);
            double pen = 0.0;
            for (Index j = 0; j < p; ++j) pen += w[j] * std::abs(beta[j]) * penalties[j];
            const double rss = (std_data.data.y - std_data.data.X * beta).squaredNorm();
            return -rss / (2.0 * sigma_prev * sigma_prev) - pen / sigma_prev;
        };
        const SlopeSolution sol = solve_weighted_slope(std_data.data.X, std_data.data.y, lambda,
                                                       w, sigma_prev);
        CHECK(q1(sol.beta) >= q1(beta_prev) - 1e-10);

        auto q2 = [&](double sigma) {
            const VectorXd penalties = rank_penalties(sol.beta, w, lambda);
            double pen = 0.0;
            for (Index j = 0; j < p; ++j) pen += w[j] * std::abs(sol.beta[j]) * penalties[j];
            const double rss = (std_data.data.y - std_data.data.X * sol.beta).squaredNorm();
            return -n * std::log(sigma) - rss / (2.0 * sigma * sigma) - pen / sigma;
        };
        const double rss = (std_data.data.y - std_data.data.X * sol.beta).squaredNorm();
        const double sigma_new = update_sigma(sol.beta, w, lambda, rss, n);
        CHECK(q2(sigma_new) >= q2(sigma_prev) - 1e-10);
    }
}

TEST_CASE("fit_abslope with zero penalty on complete data reaches least squares") {
    Rng rng(31);
    const Index n = 40, p = 2;
    Dataset d;
    d.X = oracle::random_matrix(n, p, rng);
    d.mask = MaskMatrix::Constant(n, p, false);
    Hyperparams hyper = Hyperparams::defaults(p);
    hyper.max_iter = 200;

    // Well-separated design; response from a linear model.
    VectorXd beta_true(p);
    beta_true << 2.0, -1.0;
    d.y = d.X * beta_true + 0.05 * oracle::random_vector(n, rng);

    const LambdaSequence zero = LambdaSequence::from(VectorXd::Zero(p));
    const FitResult fit = fit_abslope_with_lambda(d, hyper, zero, 7);

    const auto std_data = initial_standardize(d);
    const VectorXd ols = (std_data.data.X.transpose() * std_data.data.X)
                             .ldlt()
                             .solve(std_data.data.X.transpose() * std_data.data.y);
    CHECK((fit.beta - ols).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("fit_abslope is bitwise reproducible under a fixed seed") {
    SimScenario sc;
    sc.n = 40;
    sc.p = 20;
    sc.k = 3;
    sc.c0 = 3.0;
    sc.reps = 1;
    sc.seed = 5;
    Rng rng(derive_seed(sc.seed, 1));
    const MatrixXd X = generate_design(sc.n, sc.p, 0.0, rng);
    const auto gen = generate_response(X, sc.k, sc.c0, 1.0, rng);
    const MaskMatrix mask = ampute(X, 0.1, Mechanism::MCAR, rng);
    Dataset d;
    d.X = X;
    d.y = gen.y;
    d.mask = mask;
    for (Index i = 0; i < sc.n; ++i) {
        for (Index j = 0; j < sc.p; ++j) {
            if (mask(i, j)) d.X(i, j) = std::numeric_limits<double>::quiet_NaN();
        }
    }
    Hyperparams hyper = Hyperparams::defaults(sc.p);
    hyper.max_iter = 60;

    const FitResult a = fit_abslope(d, hyper, 99);
    const FitResult b = fit_abslope(d, hyper, 99);
    REQUIRE(a.iterations == b.iterations);
    CHECK(a.beta == b.beta);
    CHECK(a.gamma == b.gamma);
    CHECK(a.sigma == b.sigma);
    for (std::size_t t = 0; t < a.trace.size(); ++t) {
        REQUIRE(a.trace[t].beta == b.trace[t].beta);
        REQUIRE(a.trace[t].objective == b.trace[t].objective);
    }
    CHECK(a.trace.size() == static_cast<std::size_t>(a.iterations));
}

TEST_CASE("expected_gamma matches the sampler probabilities coordinatewise") {
    Rng rng(37);
    ModelState s = random_state(6, rng);
    const LambdaSequence lambda = bh_lambda(6, 0.1);
    const VectorXd pi = expected_gamma(s, lambda);
    const VectorXd penalties = rank_penalties(s.beta, s.weights(), lambda);
    for (Index j = 0; j < 6; ++j) {
        CHECK(pi[j] == gamma_inclusion_prob(s.beta[j], penalties[j], s.sigma, s.c, s.theta));
        CHECK(pi[j] > 0.0);
        CHECK(pi[j] < 1.0);
    }
    s.c = 1.0;
    const VectorXd flat = expected_gamma(s, lambda);
    for (Index j = 0; j < 6; ++j) CHECK(flat[j] == Catch::Approx(s.theta).margin(1e-14));
}

TEST_CASE("expected_theta closed form") {
    VectorXd two_active = VectorXd::Zero(10);
    two_active[0] = two_active[7] = 1.0;
    CHECK(expected_theta(two_active, 1.0, 10.0, 10) == Catch::Approx(3.0 / 21.0).margin(1e-15));
    CHECK(expected_theta(VectorXd::Zero(10), 1.0, 1.0, 10) == Catch::Approx(1.0 / 12.0).margin(1e-15));
    CHECK(expected_theta(VectorXd::Ones(10), 1.0, 1.0, 10) ==
          Catch::Approx(11.0 / 12.0).margin(1e-15));
}

TEST_CASE("expected_c moments: limits, oracle agreement, strict interior") {
    CHECK(expected_c_moments(1.0, 0.0) == Catch::Approx(0.5).margin(1e-14));
    CHECK(expected_c_moments(2.0, 0.0) == Catch::Approx(2.0 / 3.0).margin(1e-14));
    CHECK(expected_c_moments(3.0, 5.0) ==
          Catch::Approx(oracle::expected_c_quadrature(3.0, 5.0)).margin(1e-9));
    for (double a = 1.0; a <= 10.0; a += 1.0) {
        for (double b : {0.0, 0.1, 1.0, 5.0, 50.0}) {
            const double value = expected_c_moments(a, b);
            CHECK(value > 0.0);
            CHECK(value < 1.0);
            CHECK(value == Catch::Approx(oracle::expected_c_quadrature(a, b)).margin(1e-9));
        }
    }
    // Large a' (soft counts near p) stays finite and interior.
    const double big = expected_c_moments(501.0, 3.0);
    CHECK(big > 0.0);
    CHECK(big < 1.0);
}

TEST_CASE("expected_c agrees with the incomplete-gamma ratio route") {
    for (double a : {1.0, 2.0, 4.0, 9.0}) {
        for (double b : {0.5, 2.0, 20.0}) {
            const double via_ratio = (a / b) * gamma_p(a + 1.0, b) / gamma_p(a, b);
            CHECK(expected_c_moments(a, b) == Catch::Approx(via_ratio).epsilon(1e-10));
        }
    }
}

TEST_CASE("expected_missing equals the conditional mean and the sampler average") {
    {
        // Sigma = I, beta = 0: mean is mu restricted to the missing block.
        VectorXd mu(3);
        mu << 0.3, -1.2, 0.8;
        Eigen::Array<bool, Eigen::Dynamic, 1> miss(3);
        miss << true, false, true;
        VectorXd x = VectorXd::Zero(3);
        x[1] = 0.5;
        const VectorXd mean = expected_missing(x, miss, 0.7, VectorXd::Zero(3), 1.0, mu,
                                               MatrixXd::Identity(3, 3));
        CHECK(mean[0] == Catch::Approx(mu[0]).margin(1e-10));
        CHECK(mean[1] == Catch::Approx(mu[2]).margin(1e-10));
    }
    {
        Rng rng(41);
        const Index p = 4;
        const VectorXd mu = oracle::random_vector(p, rng);
        const MatrixXd Sigma = oracle::random_spd(p, rng);
        const VectorXd beta = oracle::random_vector(p, rng);
        VectorXd x = oracle::random_vector(p, rng);
        Eigen::Array<bool, Eigen::Dynamic, 1> miss(p);
        miss << true, false, true, false;
        const double y = 0.4, sigma = 0.9;

        const VectorXd mean = expected_missing(x, miss, y, beta, sigma, mu, Sigma);
        const auto cond = missing_conditional(x, miss, y, beta, sigma, mu, Sigma);

        Rng draw_rng(4321);
        VectorXd avg = VectorXd::Zero(2);
        const int draws = 1000000;
        for (int s = 0; s < draws; ++s) avg += sample_missing(cond, draw_rng);
        avg /= static_cast<double>(draws);
        const MatrixXd cov = cond.covariance();
        for (Index a = 0; a < 2; ++a) {
            const double se = std::sqrt(cov(a, a) / draws);
            CHECK(std::abs(avg[a] - mean[a]) < 3.0 * se);
        }
    }
}

TEST_CASE("fit_slobe is deterministic and agrees with fit_abslope on an easy instance") {
    Rng rng(43);
    const Index n = 60, p = 12, k = 3;
    const MatrixXd X = generate_design(n, p, 0.0, rng);
    const auto gen = generate_response(X, k, 3.0, 1.0, rng);
    Dataset d;
    d.X = X;
    d.y = gen.y;
    d.mask = MaskMatrix::Constant(n, p, false);

    Hyperparams hyper = Hyperparams::defaults(p);
    hyper.max_iter = 200;

    const FitResult s1 = fit_slobe(d, hyper, 11);
    const FitResult s2 = fit_slobe(d, hyper, 11);
    CHECK(s1.beta == s2.beta);
    CHECK(s1.gamma == s2.gamma);
    CHECK(s1.iterations == s2.iterations);

    const FitResult a = fit_abslope(d, hyper, 11);
    CHECK((s1.gamma - a.gamma).cwiseAbs().maxCoeff() == 0.0);
    for (Index j = 0; j < k; ++j) CHECK(s1.gamma[j] == 1.0);

    CHECK(s1.converged);
    CHECK(s1.trace.size() == static_cast<std::size_t>(s1.iterations));
}

TEST_CASE("beta trace stabilizes within 300 iterations on a scenario-1 style instance") {
    SimScenario sc;
    sc.n = 100;
    sc.p = 100;
    sc.k = 10;
    sc.c0 = 3.0;
    sc.miss_frac = 0.1;
    sc.seed = 21;
    Rng rng(derive_seed(sc.seed, 1));
    const MatrixXd X = generate_design(sc.n, sc.p, 0.0, rng);
    const auto gen = generate_response(X, sc.k, sc.c0, 1.0, rng);
    const MaskMatrix mask = ampute(X, sc.miss_frac, Mechanism::MCAR, rng);
    Dataset d;
    d.X = X;
    d.y = gen.y;
    d.mask = mask;
    for (Index i = 0; i < sc.n; ++i) {
        for (Index j = 0; j < sc.p; ++j) {
            if (mask(i, j)) d.X(i, j) = std::numeric_limits<double>::quiet_NaN();
        }
    }
    Hyperparams hyper = Hyperparams::defaults(sc.p);
    hyper.max_iter = 300;
    const FitResult fit = fit_abslope(d, hyper, 1);
    CHECK(fit.converged);
    CHECK(fit.iterations <= 300);
    // Inclusion frequency after burn-in concentrates on the true support.
    for (Index j = 0; j < sc.k; ++j) CHECK(fit.gamma_freq[j] > 0.8);
}
