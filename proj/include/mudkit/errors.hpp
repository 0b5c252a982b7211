// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mudkit {

/// Base class for numerical failures. The CLI maps anything derived from
/// this to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape mismatch between operands; the message carries both shapes.
class DimensionError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A triangular solve met a diagonal entry below the floor.
class SingularTriangularError : public NumericalError {
public:
    SingularTriangularError(std::size_t row, double value)
        : NumericalError("singular triangular factor: |T(" + std::to_string(row) + "," +
                         std::to_string(row) + ")| = " + std::to_string(value) +
                         " is below the diagonal floor"),
          row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

/// Cholesky (or a positivity precondition) found a non-positive pivot.
class NotSpdError : public NumericalError {
public:
    NotSpdError(std::size_t index, double pivot)
        : NumericalError("matrix is not numerically SPD: pivot " + std::to_string(index) +
                         " = " + std::to_string(pivot)),
          index_(index),
          pivot_(pivot) {}
    std::size_t index() const { return index_; }
    double pivot() const { return pivot_; }

private:
    std::size_t index_;
    double pivot_;
};

/// An iterative kernel hit its sweep cap before meeting tolerance.
class IterationLimitError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Input is rank deficient where full row rank is required.
class RankDeficientError : public NumericalError {
public:
    explicit RankDeficientError(double sigma_ratio)
        : NumericalError("rank-deficient input: sigma_min/sigma_max = " +
                         std::to_string(sigma_ratio)),
          ratio_(sigma_ratio) {}
    double ratio() const { return ratio_; }

private:
    double ratio_;
};

}  // namespace mudkit
