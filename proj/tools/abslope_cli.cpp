// Command-line surface: fit a model from CSV, run simulation scenarios,
// predict on incomplete rows, and print BH penalty sequences.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or schema error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "abslope/abslope.hpp"

namespace {

struct SchemaMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_trace_csv(const abslope::FitResult& fit, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open trace file: " + path);
    out << "iteration,eta,sigma,theta,c,beta_nnz,objective\n";
    for (const auto& row : fit.trace) {
        int nnz = 0;
        for (abslope::Index j = 0; j < row.beta.size(); ++j) nnz += row.beta[j] != 0.0 ? 1 : 0;
        out << row.iteration << ',' << format_double(row.eta) << ',' << format_double(row.sigma)
            << ',' << format_double(row.theta) << ',' << format_double(row.c) << ',' << nnz << ','
            << format_double(row.objective) << '\n';
    }
}

int run_fit(const std::string& data_path, const std::string& response, const std::string& method,
            double q, double a, double b, int t0, int max_iter, double tol, std::uint64_t seed,
            const std::string& trace_path, const std::string& out_path) {
    const abslope::LoadedDataset loaded =
        abslope::dataset_from_table(abslope::read_csv_file(data_path), response);

    abslope::Hyperparams hyper = abslope::Hyperparams::defaults(loaded.data.p());
    hyper.q = q;
    if (a > 0.0) hyper.a = a;
    if (b > 0.0) hyper.b = b;
    hyper.t0 = t0;
    hyper.max_iter = max_iter;
    hyper.tol = tol;
    hyper.validate();

    abslope::FitResult fit;
    if (method == "abslope") {
        fit = abslope::fit_abslope(loaded.data, hyper, seed);
    } else if (method == "slobe") {
        fit = abslope::fit_slobe(loaded.data, hyper, seed);
    } else {
        throw CLI::ValidationError("--method", "expected abslope or slobe");
    }

    if (!trace_path.empty()) write_trace_csv(fit, trace_path);

    abslope::Model model;
    model.fit = std::move(fit);
    model.features = loaded.features;
    model.response = loaded.response;
    abslope::write_model_file(model, out_path);
    return 0;
}

int run_simulate(const std::string& scenario_path, const std::string& method_name,
                 const std::string& out_path, int threads) {
    const abslope::SimScenario sc = abslope::read_scenario_file(scenario_path);
    const abslope::Method method = abslope::parse_method(method_name);
    const abslope::ScenarioResult result = abslope::run_scenario(sc, method, threads);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open output file: " + out_path);
    abslope::write_scenario_csv(result, out);
    if (result.failures() > 0) {
        std::cerr << result.failures() << " of " << sc.reps << " replications failed\n";
    }
    return 0;
}

int run_predict(const std::string& model_path, const std::string& data_path, int S,
                std::uint64_t seed, const std::string& out_path) {
    const abslope::Model model = abslope::read_model_file(model_path);
    const abslope::CsvTable table = abslope::read_csv_file(data_path);

    // Map the model's feature columns onto the CSV; every feature must exist.
    std::vector<abslope::Index> col_of_feature;
    for (const auto& name : model.features) {
        abslope::Index found = -1;
        for (std::size_t j = 0; j < table.columns.size(); ++j) {
            if (table.columns[j] == name) {
                found = static_cast<abslope::Index>(j);
                break;
            }
        }
        if (found < 0) throw SchemaMismatch("data csv is missing model feature column '" + name + "'");
        col_of_feature.push_back(found);
    }
    abslope::Index response_col = -1;
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
        if (table.columns[j] == model.response) response_col = static_cast<abslope::Index>(j);
    }

    const auto n = static_cast<abslope::Index>(table.rows.size());
    const auto p = static_cast<abslope::Index>(model.features.size());
    abslope::MatrixXd rows(n, p);
    abslope::MaskMatrix miss = abslope::MaskMatrix::Constant(n, p, false);
    for (abslope::Index i = 0; i < n; ++i) {
        for (abslope::Index j = 0; j < p; ++j) {
            const auto& cell = table.rows[static_cast<std::size_t>(i)]
                                         [static_cast<std::size_t>(col_of_feature[static_cast<std::size_t>(j)])];
            if (cell) {
                rows(i, j) = *cell;
            } else {
                rows(i, j) = std::numeric_limits<double>::quiet_NaN();
                miss(i, j) = true;
            }
        }
    }

    const abslope::VectorXd predictions = abslope::predict_batch(rows, miss, model.fit, S, seed);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open output file: " + out_path);
    out << "row,prediction\n";
    for (abslope::Index i = 0; i < n; ++i) {
        out << (i + 1) << ',' << format_double(predictions[i]) << '\n';
    }

    // Held-out evaluation when the response column is present and complete.
    if (response_col >= 0) {
        abslope::VectorXd y(n);
        bool complete = true;
        for (abslope::Index i = 0; i < n && complete; ++i) {
            const auto& cell = table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(response_col)];
            if (cell) {
                y[i] = *cell;
            } else {
                complete = false;
            }
        }
        if (complete && y.squaredNorm() > 0.0) {
            std::cout << "relative_l2_error=" << format_double(abslope::relative_l2_error(predictions, y))
                      << '\n';
        }
    }
    return 0;
}

int run_lambda(abslope::Index p, double q) {
    const abslope::LambdaSequence lambda = abslope::bh_lambda(p, q);
    for (abslope::Index j = 0; j < lambda.size(); ++j) {
        std::cout << format_double(lambda[j]) << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse linear regression with missing covariates: "
                 "adaptive Bayesian SLOPE and its fast deterministic variant"};
    app.require_subcommand(1);

    // fit
    auto* fit = app.add_subcommand("fit", "Fit a model from a CSV file");
    std::string data_path, response, method = "slobe", trace_path, out_path;
    double q = 0.1, a = 0.0, b = 0.0, tol = 1e-6;
    int t0 = 20, max_iter = 500;
    std::uint64_t seed = 1;
    fit->add_option("--data", data_path, "input CSV (empty or NA cells are missing)")->required();
    fit->add_option("--response", response, "response column name")->required();
    fit->add_option("--method", method, "abslope or slobe")
        ->check(CLI::IsMember({"abslope", "slobe"}));
    fit->add_option("--q", q, "target FDR level for the penalty sequence");
    fit->add_option("--a", a, "Beta prior parameter a (default 2/p)");
    fit->add_option("--b", b, "Beta prior parameter b (default 1 - 2/p)");
    fit->add_option("--t0", t0, "unit-step burn-in length");
    fit->add_option("--max-iter", max_iter, "iteration cap");
    fit->add_option("--tol", tol, "convergence threshold on ||beta_{t+1}-beta_t||^2");
    fit->add_option("--seed", seed, "master seed");
    fit->add_option("--trace", trace_path, "optional per-iteration trace CSV");
    fit->add_option("--out", out_path, "output model JSON")->required();

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Run replications of a scenario file");
    std::string scenario_path, sim_method = "slobe", sim_out;
    int threads = 0;
    simulate->add_option("--scenario", scenario_path, "key=value scenario file")->required();
    simulate->add_option("--method", sim_method, "abslope, slobe, or slope")
        ->check(CLI::IsMember({"abslope", "slobe", "slope"}));
    simulate->add_option("--out", sim_out, "output CSV")->required();
    simulate->add_option("--threads", threads, "replication pool size (default: hardware)");

    // predict
    auto* predict = app.add_subcommand("predict", "Predict responses for (incomplete) rows");
    std::string model_path, predict_data, predict_out;
    int S = 200;
    std::uint64_t predict_seed = 1;
    predict->add_option("--model", model_path, "model JSON from fit")->required();
    predict->add_option("--data", predict_data, "input CSV with the model's feature columns")->required();
    predict->add_option("--S", S, "Monte-Carlo draws per incomplete row");
    predict->add_option("--seed", predict_seed, "master seed");
    predict->add_option("--out", predict_out, "output CSV (row, prediction)")->required();

    // lambda
    auto* lambda_cmd = app.add_subcommand("lambda", "Print the BH penalty sequence");
    abslope::Index lambda_p = 0;
    double lambda_q = 0.1;
    lambda_cmd->add_option("--p", lambda_p, "sequence length")->required();
    lambda_cmd->add_option("--q", lambda_q, "target FDR level");

    try {
        app.parse(argc, argv);
        if (fit->parsed()) {
            return run_fit(data_path, response, method, q, a, b, t0, max_iter, tol, seed,
                           trace_path, out_path);
        }
        if (simulate->parsed()) {
            return run_simulate(scenario_path, sim_method, sim_out, threads);
        }
        if (predict->parsed()) {
            return run_predict(model_path, predict_data, S, predict_seed, predict_out);
        }
        if (lambda_cmd->parsed()) {
            return run_lambda(lambda_p, lambda_q);
        }
        return 2;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    } catch (const SchemaMismatch& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const abslope::ModelSchemaError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
