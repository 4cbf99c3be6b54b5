#pragma once

// Data generation, amputation, evaluation metrics, and the replication runner
// for power/FDR/estimation-error experiments.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "abslope/rng.hpp"
#include "abslope/saem.hpp"
#include "abslope/slobe.hpp"
#include "abslope/types.hpp"

namespace abslope {

enum class Mechanism { MCAR, MAR };
enum class Method { Abslope, Slobe, SlopeBaseline };

struct SimScenario {
    Index n = 100;
    Index p = 100;
    Index k = 10;
    double c0 = 3.0;          // signal magnitude is c0 * sqrt(2 log p)
    double rho = 0.0;         // Toeplitz correlation
    double miss_frac = 0.1;
    Mechanism mechanism = Mechanism::MCAR;
    double sigma_true = 1.0;
    double q = 0.1;
    int reps = 200;
    std::uint64_t seed = 1;

    void validate() const {
        if (n < 2 || p < 1) throw std::invalid_argument("SimScenario: n and p out of range");
        if (k < 0 || k > p) throw std::invalid_argument("SimScenario: k must lie in [0, p]");
        if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("SimScenario: rho must lie in [0, 1)");
        if (!(miss_frac >= 0.0 && miss_frac < 1.0)) {
            throw std::invalid_argument("SimScenario: miss fraction must lie in [0, 1)");
        }
        if (!(sigma_true > 0.0)) throw std::invalid_argument("SimScenario: sigma must be positive");
        if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("SimScenario: q must lie in (0, 1)");
        if (reps < 1) throw std::invalid_argument("SimScenario: reps must be at least 1");
    }
};

struct Metrics {
    double power = 0.0;
    double fdr = 0.0;
    std::optional<double> mse_beta;
    std::optional<double> pred_err;
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

/// Rows i.i.d. N(0, Sigma) with Sigma_ij = rho^|i-j| (built by the AR(1)
/// recursion), then centered and scaled to unit l2 columns.
inline MatrixXd generate_design(Index n, Index p, double rho, Rng& rng) {
    if (!(rho >= 0.0 && rho < 1.0)) throw std::domain_error("generate_design: rho must lie in [0, 1)");
    MatrixXd X(n, p);
    const double noise = std::sqrt(1.0 - rho * rho);
    for (Index i = 0; i < n; ++i) {
        double prev = rng.normal();
        X(i, 0) = prev;
        for (Index j = 1; j < p; ++j) {
            prev = rho * prev + noise * rng.normal();
            X(i, j) = prev;
        }
    }
    const double sqrt_n = std::sqrt(static_cast<double>(n));
    for (Index j = 0; j < p; ++j) {
        const double mean = X.col(j).mean();
        const double sd = std::sqrt((X.col(j).array() - mean).square().sum() / static_cast<double>(n));
        if (!(sd > 0.0)) throw std::runtime_error("generate_design: degenerate column");
        X.col(j) = (X.col(j).array() - mean) / (sqrt_n * sd);
    }
    return X;
}

struct GeneratedResponse {
    VectorXd y;
    VectorXd beta_true;
};

/// First k coefficients set to c0 sqrt(2 log p), the rest zero; Gaussian
/// noise with the given sd.
inline GeneratedResponse generate_response(const MatrixXd& X, Index k, double c0,
                                           double sigma_true, Rng& rng) {
    const Index p = X.cols();
    if (k > p) throw std::domain_error("generate_response: k must not exceed p");
    GeneratedResponse out;
    out.beta_true = VectorXd::Zero(p);
    const double magnitude = c0 * std::sqrt(2.0 * std::log(static_cast<double>(p)));
    for (Index j = 0; j < k; ++j) out.beta_true[j] = magnitude;
    out.y = X * out.beta_true;
    for (Index i = 0; i < out.y.size(); ++i) out.y[i] += sigma_true * rng.normal();
    return out;
}

/// Masks cells under the requested mechanism. MCAR masks each cell
/// independently; MAR drives the masking probability of columns 1..p-1
/// through a logistic function of column 0 (always observed), with the
/// intercept calibrated by bisection to hit the requested overall fraction.
/// Rows that lose every entry are re-drawn, up to 100 times.
inline MaskMatrix ampute(const MatrixXd& X, double frac, Mechanism mechanism, Rng& rng) {
    const Index n = X.rows();
    const Index p = X.cols();
    if (!(frac >= 0.0 && frac < 1.0)) throw std::domain_error("ampute: fraction must lie in [0, 1)");
    MaskMatrix mask = MaskMatrix::Constant(n, p, false);
    if (frac == 0.0) return mask;

    VectorXd cell_prob;  // per-row masking probability for target columns (MAR)
    if (mechanism == Mechanism::MAR) {
        if (p < 2) throw std::invalid_argument("ampute: MAR needs at least two columns");
        const double mean = X.col(0).mean();
        double sd = std::sqrt((X.col(0).array() - mean).square().sum() / static_cast<double>(n));
        if (!(sd > 0.0)) sd = 1.0;
        const VectorXd driver = (X.col(0).array() - mean) / sd;
        const double target = frac * static_cast<double>(p) / static_cast<double>(p - 1);
        auto realized = [&](double alpha) {
            double total = 0.0;
            for (Index i = 0; i < n; ++i) {
                total += 1.0 / (1.0 + std::exp(-(alpha + 3.0 * driver[i])));
            }
            return total / static_cast<double>(n);
        };
        double lo = -40.0, hi = 40.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (realized(mid) < target ? lo : hi) = mid;
        }
        const double alpha = 0.5 * (lo + hi);
        cell_prob.resize(n);
        for (Index i = 0; i < n; ++i) {
            cell_prob[i] = 1.0 / (1.0 + std::exp(-(alpha + 3.0 * driver[i])));
        }
    }

    for (Index i = 0; i < n; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            Index masked = 0;
            if (mechanism == Mechanism::MCAR) {
                for (Index j = 0; j < p; ++j) {
                    mask(i, j) = rng.bernoulli(frac);
                    masked += mask(i, j) ? 1 : 0;
                }
            } else {
                mask(i, 0) = false;
                for (Index j = 1; j < p; ++j) {
                    mask(i, j) = rng.bernoulli(cell_prob[i]);
                    masked += mask(i, j) ? 1 : 0;
                }
            }
            ok = masked < p;
        }
        if (!ok) throw std::runtime_error("ampute: row " + std::to_string(i) +
                                          " lost all entries after 100 retries");
    }
    return mask;
}

/// Support metrics from the selected vector plus relative estimation and
/// prediction errors on the complete true design.
inline Metrics evaluate(const VectorXd& beta_hat, const VectorXd& gamma_hat,
                        const VectorXd& beta_true, const MatrixXd& X_true) {
    const Index p = beta_true.size();
    if (beta_hat.size() != p || gamma_hat.size() != p || X_true.cols() != p) {
        throw std::invalid_argument("evaluate: dimension mismatch");
    }
    Metrics m;
    for (Index j = 0; j < p; ++j) {
        const bool selected = gamma_hat[j] != 0.0;
        const bool truth = beta_true[j] != 0.0;
        if (selected && truth) ++m.tp;
        if (selected && !truth) ++m.fp;
        if (!selected && truth) ++m.fn;
    }
    m.power = (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.fdr = static_cast<double>(m.fp) / std::max(static_cast<double>(m.fp + m.tp), 1.0);
    const double signal2 = beta_true.squaredNorm();
    if (signal2 > 0.0) {
        m.mse_beta = (beta_hat - beta_true).squaredNorm() / signal2;
        m.pred_err = (X_true * (beta_hat - beta_true)).squaredNorm() / (X_true * beta_true).squaredNorm();
    }
    return m;
}

struct RepRecord {
    int rep = 0;
    bool ok = false;
    Metrics metrics;
    double sigma_hat = 0.0;
    double sigma_naive = 0.0;
    double runtime_ms = 0.0;
    std::string error;
};

struct ScenarioResult {
    std::vector<RepRecord> reps;

    template <typename Getter>
    double mean(Getter get) const {
        double total = 0.0;
        int count = 0;
        for (const auto& r : reps) {
            if (!r.ok) continue;
            total += get(r);
            ++count;
        }
        return count > 0 ? total / count : 0.0;
    }

    template <typename Getter>
    double standard_error(Getter get) const {
        const double mu = mean(get);
        double ss = 0.0;
        int count = 0;
        for (const auto& r : reps) {
            if (!r.ok) continue;
            const double d = get(r) - mu;
            ss += d * d;
            ++count;
        }
        return count > 1 ? std::sqrt(ss / (count - 1) / count) : 0.0;
    }

    int failures() const {
        int c = 0;
        for (const auto& r : reps) c += r.ok ? 0 : 1;
        return c;
    }
};

namespace detail {

/// Mean imputation + SLOPE with the true noise sd, then OLS on the selected
/// support. Comparator only.
inline FitResult fit_slope_baseline(const Dataset& data, const Hyperparams& hyper, double sigma_true) {
    const StandardizedData std_data = initial_standardize(data);
    const Index p = data.p();
    const LambdaSequence lambda = bh_lambda(p, hyper.q);
    const SlopeSolution sol = solve_slope(std_data.data.X, std_data.data.y, lambda, sigma_true);

    FitResult fit;
    fit.gamma = (sol.beta.array() != 0.0).cast<double>();
    fit.beta = VectorXd::Zero(p);
    std::vector<Index> support;
    for (Index j = 0; j < p; ++j) {
        if (sol.beta[j] != 0.0) support.push_back(j);
    }
    if (!support.empty()) {
        MatrixXd Xs(data.n(), static_cast<Index>(support.size()));
        for (std::size_t a = 0; a < support.size(); ++a) {
            Xs.col(static_cast<Index>(a)) = std_data.data.X.col(support[a]);
        }
        const VectorXd coef = Xs.colPivHouseholderQr().solve(std_data.data.y);
        for (std::size_t a = 0; a < support.size(); ++a) {
            fit.beta[support[a]] = coef[static_cast<Index>(a)];
        }
    }
    const double rss = (std_data.data.y - std_data.data.X * fit.beta).squaredNorm();
    fit.sigma = std::sqrt(rss / static_cast<double>(data.n()));
    fit.sigma_naive = fit.sigma;
    fit.theta = 0.0;
    fit.c = 1.0;
    fit.mu = std_data.data.X.colwise().mean();
    fit.Sigma = MatrixXd::Identity(p, p);
    fit.scaling = std_data.scaling;
    fit.converged = sol.converged;
    fit.iterations = sol.iterations;
    fit.gamma_freq = fit.gamma;
    fit.n_train = data.n();
    return fit;
}

inline RepRecord run_replication(const SimScenario& sc, Method method, int rep) {
    RepRecord record;
    record.rep = rep;
    const auto start = std::chrono::steady_clock::now();
    try {
        Rng rng(derive_seed(sc.seed, static_cast<std::uint64_t>(rep)));
        const MatrixXd X_true = generate_design(sc.n, sc.p, sc.rho, rng);
        const GeneratedResponse gen = generate_response(X_true, sc.k, sc.c0, sc.sigma_true, rng);
        const MaskMatrix mask = ampute(X_true, sc.miss_frac, sc.mechanism, rng);

        Dataset data;
        data.X = X_true;
        data.y = gen.y;
        data.mask = mask;
        for (Index i = 0; i < data.n(); ++i) {
            for (Index j = 0; j < data.p(); ++j) {
                if (mask(i, j)) data.X(i, j) = std::numeric_limits<double>::quiet_NaN();
            }
        }

        Hyperparams hyper = Hyperparams::defaults(sc.p);
        hyper.q = sc.q;

        FitResult fit;
        const std::uint64_t fit_seed = derive_seed(sc.seed, 0x9000 + static_cast<std::uint64_t>(rep));
        switch (method) {
            case Method::Abslope: fit = fit_abslope(data, hyper, fit_seed); break;
            case Method::Slobe: fit = fit_slobe(data, hyper, fit_seed); break;
            case Method::SlopeBaseline: fit = fit_slope_baseline(data, hyper, sc.sigma_true); break;
        }

        record.metrics = evaluate(fit.beta_original(), fit.gamma, gen.beta_true, X_true);
        record.sigma_hat = fit.sigma;
        record.sigma_naive = fit.sigma_naive;
        record.ok = true;
    } catch (const std::exception& e) {
        record.ok = false;
        record.error = e.what();
    }
    record.runtime_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start).count();
    return record;
}

} // namespace detail

/// Runs the replications of one scenario, each on its own derived seed, in a
/// parallel map. Failed replications are recorded and excluded from the
/// aggregates.
inline ScenarioResult run_scenario(const SimScenario& sc, Method method, int threads = 0) {
    sc.validate();
    if (threads <= 0) {
        threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads <= 0) threads = 1;
    }
    threads = std::min<int>(threads, sc.reps);

    ScenarioResult result;
    result.reps.resize(static_cast<std::size_t>(sc.reps));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int rep = next.fetch_add(1);
            if (rep >= sc.reps) return;
            result.reps[static_cast<std::size_t>(rep)] = detail::run_replication(sc, method, rep + 1);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return result;
}

inline Method parse_method(const std::string& name) {
    if (name == "abslope") return Method::Abslope;
    if (name == "slobe") return Method::Slobe;
    if (name == "slope") return Method::SlopeBaseline;
    throw std::invalid_argument("unknown method '" + name + "' (expected abslope, slobe, or slope)");
}

/// Flat key=value scenario format; '#' starts a comment. Keys: n, p, k, c0,
/// rho, miss, mech, q, reps, seed, and optionally sigma.
inline SimScenario parse_scenario(std::istream& in) {
    SimScenario sc;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto is_space = [](unsigned char ch) { return std::isspace(ch); };
        line.erase(line.begin(), std::find_if_not(line.begin(), line.end(), is_space));
        line.erase(std::find_if_not(line.rbegin(), line.rend(), is_space).base(), line.end());
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("scenario line " + std::to_string(lineno) + ": expected key=value");
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        key.erase(std::find_if_not(key.rbegin(), key.rend(), is_space).base(), key.end());
        value.erase(value.begin(), std::find_if_not(value.begin(), value.end(), is_space));
        try {
            if (key == "n") sc.n = std::stol(value);
            else if (key == "p") sc.p = std::stol(value);
            else if (key == "k") sc.k = std::stol(value);
            else if (key == "c0") sc.c0 = std::stod(value);
            else if (key == "rho") sc.rho = std::stod(value);
            else if (key == "miss") sc.miss_frac = std::stod(value);
            else if (key == "mech") {
                if (value == "mcar") sc.mechanism = Mechanism::MCAR;
                else if (value == "mar") sc.mechanism = Mechanism::MAR;
                else throw std::invalid_argument("mech must be mcar or mar");
            }
            else if (key == "q") sc.q = std::stod(value);
            else if (key == "sigma") sc.sigma_true = std::stod(value);
            else if (key == "reps") sc.reps = std::stoi(value);
            else if (key == "seed") sc.seed = std::stoull(value);
            else throw std::invalid_argument("unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("scenario line " + std::to_string(lineno) +
                                        ": bad value for '" + key + "'");
        }
    }
    sc.validate();
    return sc;
}

inline SimScenario read_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path);
    return parse_scenario(in);
}

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace detail

/// Per-replication rows plus mean and standard-error aggregate rows.
inline void write_scenario_csv(const ScenarioResult& result, std::ostream& out) {
    out << "rep,power,fdr,mse,pred,sigma_hat,runtime_ms\n";
    auto opt = [](const std::optional<double>& v) {
        return v ? detail::format_double(*v) : std::string();
    };
    for (const auto& r : result.reps) {
        if (r.ok) {
            out << r.rep << ',' << detail::format_double(r.metrics.power) << ','
                << detail::format_double(r.metrics.fdr) << ',' << opt(r.metrics.mse_beta) << ','
                << opt(r.metrics.pred_err) << ',' << detail::format_double(r.sigma_hat) << ','
                << detail::format_double(r.runtime_ms) << '\n';
        } else {
            out << r.rep << ",,,,,," << detail::format_double(r.runtime_ms) << '\n';
        }
    }
    auto agg = [&](const char* label, auto&& stat) {
        out << label << ',' << detail::format_double(stat([](const RepRecord& r) { return r.metrics.power; }))
            << ',' << detail::format_double(stat([](const RepRecord& r) { return r.metrics.fdr; })) << ','
            << detail::format_double(stat([](const RepRecord& r) { return r.metrics.mse_beta.value_or(0.0); }))
            << ',' << detail::format_double(stat([](const RepRecord& r) { return r.metrics.pred_err.value_or(0.0); }))
            << ',' << detail::format_double(stat([](const RepRecord& r) { return r.sigma_hat; })) << ','
            << detail::format_double(stat([](const RepRecord& r) { return r.runtime_ms; })) << '\n';
    };
    agg("mean", [&](auto get) { return result.mean(get); });
    agg("se", [&](auto get) { return result.standard_error(get); });
}

} // namespace abslope
