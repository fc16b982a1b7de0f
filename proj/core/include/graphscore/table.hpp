#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "graphscore/error.hpp"

namespace graphscore {

// Column-major numeric table with named columns. NaN marks a missing value
// (the tree learner routes it natively; nothing else may consume it blindly).
struct FeatureMatrix {
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;

    std::size_t rows() const { return cols.empty() ? 0 : cols.front().size(); }
    std::size_t n_cols() const { return cols.size(); }

    double at(std::size_t row, std::size_t col) const { return cols[col][row]; }

    std::size_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        raise(Errc::SchemaMismatch, "unknown column '" + name + "'");
    }

    void append_column(std::string name, std::vector<double> values) {
        if (!cols.empty() && values.size() != rows())
            raise(Errc::ShapeMismatch, "column '" + name + "' has " + std::to_string(values.size()) +
                                           " rows, table has " + std::to_string(rows()));
        names.push_back(std::move(name));
        cols.push_back(std::move(values));
    }
};

} // namespace graphscore
