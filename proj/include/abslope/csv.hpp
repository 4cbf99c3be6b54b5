#pragma once

// CSV ingestion: first row is the header; missing cells are encoded as an
// empty string or the literal NA.

#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "abslope/types.hpp"

namespace abslope {

struct CsvTable {
    std::vector<std::string> columns;
    // row-major cells; nullopt marks a missing value
    std::vector<std::vector<std::optional<double>>> rows;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

} // namespace detail

inline CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty input");
    table.columns = detail::split_csv_line(line);
    if (table.columns.empty()) throw std::runtime_error("csv: empty header");

    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != table.columns.size()) {
            throw std::runtime_error("csv line " + std::to_string(lineno) + ": expected " +
                                     std::to_string(table.columns.size()) + " fields, got " +
                                     std::to_string(fields.size()));
        }
        std::vector<std::optional<double>> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            if (f.empty() || f == "NA") {
                row.push_back(std::nullopt);
            } else {
                try {
                    std::size_t pos = 0;
                    const double v = std::stod(f, &pos);
                    if (pos != f.size()) throw std::invalid_argument(f);
                    row.push_back(v);
                } catch (const std::exception&) {
                    throw std::runtime_error("csv line " + std::to_string(lineno) +
                                             ": cannot parse '" + f + "' as a number");
                }
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv file: " + path);
    return read_csv(in);
}

struct LoadedDataset {
    Dataset data;
    std::vector<std::string> features;  // column order matches data.X
    std::string response;
};

/// Builds a Dataset from a parsed table. The response column must be fully
/// observed; masked covariate cells are stored as NaN with the mask set.
inline LoadedDataset dataset_from_table(const CsvTable& table, const std::string& response) {
    Index response_col = -1;
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
        if (table.columns[j] == response) {
            response_col = static_cast<Index>(j);
            break;
        }
    }
    if (response_col < 0) throw std::runtime_error("csv: response column '" + response + "' not found");
    if (table.columns.size() < 2) throw std::runtime_error("csv: need at least one covariate column");
    if (table.rows.empty()) throw std::runtime_error("csv: no data rows");

    LoadedDataset out;
    out.response = response;
    const Index n = static_cast<Index>(table.rows.size());
    const Index p = static_cast<Index>(table.columns.size()) - 1;
    out.data.y.resize(n);
    out.data.X.resize(n, p);
    out.data.mask = MaskMatrix::Constant(n, p, false);
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
        if (static_cast<Index>(j) != response_col) out.features.push_back(table.columns[j]);
    }

    for (Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const auto& y_cell = row[static_cast<std::size_t>(response_col)];
        if (!y_cell) {
            throw std::runtime_error("csv row " + std::to_string(i + 2) +
                                     ": response value is missing");
        }
        out.data.y[i] = *y_cell;
        Index col = 0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (static_cast<Index>(j) == response_col) continue;
            if (row[j]) {
                out.data.X(i, col) = *row[j];
            } else {
                out.data.X(i, col) = std::numeric_limits<double>::quiet_NaN();
                out.data.mask(i, col) = true;
            }
            ++col;
        }
    }
    out.data.validate();
    return out;
}

} // namespace abslope
