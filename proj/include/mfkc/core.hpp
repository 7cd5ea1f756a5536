// Common types and error hierarchy shared by every mfkc module.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfkc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base class of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied parameter is out of its valid domain.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Input data (image, file, feature row) violates its invariants.
class InputError : public Error {
public:
    using Error::Error;
};

/// Data is valid but carries no usable signal (zero variance, zero rank).
class DegenerateDataError : public Error {
public:
    using Error::Error;
};

class NormalizationError : public Error {
public:
    using Error::Error;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// An objective became non-finite.
class DivergenceError : public ConvergenceError {
public:
    using ConvergenceError::ConvergenceError;
};

inline bool all_finite(const Matrix& m) {
    return m.allFinite();
}

/// Flips eigenvector columns so the largest-magnitude entry of each is
/// positive (first such entry on ties).
inline void canonicalize_signs(Matrix& columns) {
    for (Index c = 0; c < columns.cols(); ++c) {
        Index best = 0;
        double best_abs = -1.0;
        for (Index r = 0; r < columns.rows(); ++r) {
            const double a = std::abs(columns(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        if (columns(best, c) < 0.0) columns.col(c) = -columns.col(c);
    }
}

}  // namespace mfkc
