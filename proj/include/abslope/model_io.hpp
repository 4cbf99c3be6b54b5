#pragma once

// JSON round trip for fitted models. Uses ordered keys so serialization is
// byte-stable for identical fits.

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "abslope/saem.hpp"

namespace abslope {

class ModelSchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline nlohmann::ordered_json vector_to_json(const VectorXd& v) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

inline nlohmann::ordered_json matrix_to_json(const MatrixXd& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline VectorXd vector_from_json(const nlohmann::json& arr, const char* key) {
    if (!arr.is_array()) throw ModelSchemaError(std::string("model json: '") + key + "' must be an array");
    VectorXd v(static_cast<Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) throw ModelSchemaError(std::string("model json: '") + key + "' must be numeric");
        v[static_cast<Index>(i)] = arr[i].get<double>();
    }
    return v;
}

inline MatrixXd matrix_from_json(const nlohmann::json& arr, const char* key) {
    if (!arr.is_array() || arr.empty()) {
        throw ModelSchemaError(std::string("model json: '") + key + "' must be a non-empty array of rows");
    }
    const Index rows = static_cast<Index>(arr.size());
    const Index cols = static_cast<Index>(arr[0].size());
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        if (!arr[static_cast<std::size_t>(i)].is_array() ||
            static_cast<Index>(arr[static_cast<std::size_t>(i)].size()) != cols) {
            throw ModelSchemaError(std::string("model json: '") + key + "' rows have inconsistent widths");
        }
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = arr[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
        }
    }
    return m;
}

} // namespace detail

struct Model {
    FitResult fit;
    std::vector<std::string> features;
    std::string response;
};

inline nlohmann::ordered_json model_to_json(const Model& model) {
    nlohmann::ordered_json j;
    j["beta"] = detail::vector_to_json(model.fit.beta);
    j["gamma"] = detail::vector_to_json(model.fit.gamma);
    j["sigma"] = model.fit.sigma;
    j["theta"] = model.fit.theta;
    j["c"] = model.fit.c;
    j["scaling"] = {
        {"m", detail::vector_to_json(model.fit.scaling.m)},
        {"s", detail::vector_to_json(model.fit.scaling.s)},
        {"y_mean", model.fit.scaling.y_mean},
    };
    j["converged"] = model.fit.converged;
    j["iterations"] = model.fit.iterations;
    j["mu"] = detail::vector_to_json(model.fit.mu);
    j["Sigma"] = detail::matrix_to_json(model.fit.Sigma);
    j["n"] = model.fit.n_train;
    j["features"] = model.features;
    j["response"] = model.response;
    return j;
}

inline Model model_from_json(const nlohmann::json& j) {
    for (const char* key : {"beta", "gamma", "sigma", "theta", "c", "scaling", "converged",
                            "iterations", "mu", "Sigma", "n", "features", "response"}) {
        if (!j.contains(key)) throw ModelSchemaError(std::string("model json: missing key '") + key + "'");
    }
    Model model;
    model.fit.beta = detail::vector_from_json(j["beta"], "beta");
    model.fit.gamma = detail::vector_from_json(j["gamma"], "gamma");
    model.fit.sigma = j["sigma"].get<double>();
    model.fit.theta = j["theta"].get<double>();
    model.fit.c = j["c"].get<double>();
    const auto& scaling = j["scaling"];
    for (const char* key : {"m", "s", "y_mean"}) {
        if (!scaling.contains(key)) {
            throw ModelSchemaError(std::string("model json: scaling is missing '") + key + "'");
        }
    }
    model.fit.scaling.m = detail::vector_from_json(scaling["m"], "scaling.m");
    model.fit.scaling.s = detail::vector_from_json(scaling["s"], "scaling.s");
    model.fit.scaling.y_mean = scaling["y_mean"].get<double>();
    model.fit.converged = j["converged"].get<bool>();
    model.fit.iterations = j["iterations"].get<int>();
    model.fit.mu = detail::vector_from_json(j["mu"], "mu");
    model.fit.Sigma = detail::matrix_from_json(j["Sigma"], "Sigma");
    model.fit.n_train = j["n"].get<Index>();
    model.features = j["features"].get<std::vector<std::string>>();
    model.response = j["response"].get<std::string>();

    const Index p = model.fit.beta.size();
    if (model.fit.gamma.size() != p || model.fit.mu.size() != p ||
        model.fit.scaling.m.size() != p || model.fit.scaling.s.size() != p ||
        model.fit.Sigma.rows() != p || model.fit.Sigma.cols() != p ||
        static_cast<Index>(model.features.size()) != p) {
        throw ModelSchemaError("model json: inconsistent dimensions");
    }
    if (model.fit.n_train < 1) throw ModelSchemaError("model json: 'n' must be positive");
    return model;
}

inline void write_model_file(const Model& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << model_to_json(model).dump(2) << '\n';
}

inline Model read_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ModelSchemaError(std::string("model json: parse failure: ") + e.what());
    }
    return model_from_json(j);
}

} // namespace abslope
