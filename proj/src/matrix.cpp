// SPDX-License-Identifier: Apache-2.0
#include "mudkit/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace mudkit {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw std::invalid_argument("from_rows: ragged row lengths");
        }
        std::size_t j = 0;
        for (double x : row) m(i, j++) = x;
        ++i;
    }
    return m;
}

bool Matrix::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
}
}  // namespace

Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator+");
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator-");
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
    return c;
}

Matrix operator*(double s, const Matrix& m) {
    Matrix c = m;
    for (double& x : c.data()) x *= s;
    return c;
}

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (double x : m.data()) best = std::max(best, std::abs(x));
    return best;
}

}  // namespace mudkit
