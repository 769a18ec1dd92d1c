#include "knights/matrix.hpp"

#include <cmath>
#include <string>

#include "knights/errors.hpp"

namespace knights {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: " + std::to_string(rows_) + "x" + std::to_string(cols_) + " needs " +
                         std::to_string(rows_ * cols_) + " values, got " + std::to_string(data_.size()));
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double squared_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return s;
}

}  // namespace knights
