// The six kernel functions used for feature-kernel learning, and Gram-matrix
// utilities (normalization, PSD check and PSD clipping).
//
//   linear          x'y + c
//   polynomial      (alpha x'y + c)^d
//   gaussian        exp(-|x-y|^2 / (2 sigma^2))
//   rbf             exp(-|x-y| / (2 sigma^2))       unsquared norm
//   chi_square      1 - sum_i (x_i - y_i)^2 / ((x_i + y_i) / 2)
//   rbf_chi_square  chi_square + rbf
//
// `rbf_squared_norm` switches rbf (and the rbf part of rbf_chi_square) to the
// conventional squared distance.

#pragma once

#include "mfkc/core.hpp"
#include "mfkc/features.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mfkc {

enum class KernelKind { linear, polynomial, gaussian, rbf, chi_square, rbf_chi_square };

inline constexpr std::array<KernelKind, 6> kAllKernelKinds = {KernelKind::linear,   KernelKind::polynomial,
                                                              KernelKind::gaussian, KernelKind::rbf,
                                                              KernelKind::chi_square, KernelKind::rbf_chi_square};

inline std::string_view to_string(KernelKind k) {
    switch (k) {
        case KernelKind::linear: return "linear";
        case KernelKind::polynomial: return "polynomial";
        case KernelKind::gaussian: return "gaussian";
        case KernelKind::rbf: return "rbf";
        case KernelKind::chi_square: return "chi_square";
        case KernelKind::rbf_chi_square: return "rbf_chi_square";
    }
    return "unknown";
}

inline KernelKind kernel_kind_from_string(std::string_view s) {
    for (KernelKind k : kAllKernelKinds)
        if (to_string(k) == s) return k;
    throw ParameterError("unknown kernel kind '" + std::string(s) + "'");
}

inline bool uses_sigma(KernelKind k) {
    return k == KernelKind::gaussian || k == KernelKind::rbf || k == KernelKind::rbf_chi_square;
}

inline bool needs_nonnegative(KernelKind k) {
    return k == KernelKind::chi_square || k == KernelKind::rbf_chi_square;
}

struct KernelSpec {
    KernelKind kind = KernelKind::linear;
    double c = 0.0;
    double alpha = 1.0;
    int degree = 2;
    /// Unset means "resolve with the median heuristic on the training set".
    std::optional<double> sigma;
    bool rbf_squared_norm = false;

    void validate() const {
        if (kind == KernelKind::polynomial && degree < 1) throw ParameterError("polynomial degree must be >= 1");
        if (uses_sigma(kind)) {
            if (!sigma) throw ParameterError(std::string(to_string(kind)) + " kernel needs a resolved sigma");
            if (!(*sigma > 0.0)) throw ParameterError("kernel sigma must be positive");
        }
    }

    bool operator==(const KernelSpec&) const = default;
};

namespace detail {

inline double chi_square_distance(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
    double acc = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        const double s = x(i) + y(i);
        if (s == 0.0) continue;  // 0/0 limit
        const double diff = x(i) - y(i);
        acc += diff * diff / (0.5 * s);
    }
    return acc;
}

inline double rbf_term(double sq_dist, const KernelSpec& spec) {
    const double dist = spec.rbf_squared_norm ? sq_dist : std::sqrt(sq_dist);
    return std::exp(-dist / (2.0 * *spec.sigma * *spec.sigma));
}

}  // namespace detail

/// k(x, y) for one pair. Vectors must have equal length; chi-square variants
/// need non-negative entries.
inline double kernel_eval(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                          const KernelSpec& spec) {
    if (x.size() != y.size())
        throw InputError("kernel_eval: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
    spec.validate();
    if (needs_nonnegative(spec.kind) && (x.minCoeff() < 0.0 || y.minCoeff() < 0.0))
        throw InputError("kernel_eval: chi-square kernels need non-negative inputs");
    switch (spec.kind) {
        case KernelKind::linear: return x.dot(y) + spec.c;
        case KernelKind::polynomial: return std::pow(spec.alpha * x.dot(y) + spec.c, spec.degree);
        case KernelKind::gaussian:
            return std::exp(-(x - y).squaredNorm() / (2.0 * *spec.sigma * *spec.sigma));
        case KernelKind::rbf: return detail::rbf_term((x - y).squaredNorm(), spec);
        case KernelKind::chi_square: return 1.0 - detail::chi_square_distance(x, y);
        case KernelKind::rbf_chi_square:
            return 1.0 - detail::chi_square_distance(x, y) + detail::rbf_term((x - y).squaredNorm(), spec);
    }
    return 0.0;
}

/// Median pairwise Euclidean distance between rows (the median heuristic
/// bandwidth). Falls back to 1 when every pair coincides.
inline double median_pairwise_distance(const Matrix& rows) {
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(rows.rows() * (rows.rows() - 1) / 2));
    for (Index i = 0; i < rows.rows(); ++i)
        for (Index j = i + 1; j < rows.rows(); ++j) d.push_back((rows.row(i) - rows.row(j)).norm());
    if (d.empty()) return 1.0;
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    double med = *mid;
    if (d.size() % 2 == 0) {
        const double lower = *std::max_element(d.begin(), mid);
        med = 0.5 * (med + lower);
    }
    return med > 0.0 ? med : 1.0;
}

/// Copy of `spec` with an unset sigma filled in from `train`.
inline KernelSpec resolve_kernel(KernelSpec spec, const Matrix& train) {
    if (uses_sigma(spec.kind) && !spec.sigma) spec.sigma = median_pairwise_distance(train);
    spec.validate();
    return spec;
}

struct GramMatrix {
    Matrix values;
    KernelSpec spec;
    bool normalized = false;

    [[nodiscard]] Index rows() const noexcept { return values.rows(); }
    [[nodiscard]] Index cols() const noexcept { return values.cols(); }
};

/// values(i, j) = k(a_i, b_j).
inline GramMatrix gram(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
    if (a.cols() != b.cols()) throw InputError("gram: feature dimensions differ");
    spec.validate();
    if (needs_nonnegative(spec.kind) && (a.minCoeff() < 0.0 || b.minCoeff() < 0.0))
        throw InputError("gram: chi-square kernels need non-negative features");
    GramMatrix g{Matrix(a.rows(), b.rows()), spec, false};
    const bool same = &a == &b || (a.rows() == b.rows() && a == b);
    for (Index i = 0; i < a.rows(); ++i) {
        const Vector ai = a.row(i).transpose();
        for (Index j = same ? i : 0; j < b.rows(); ++j) {
            const double v = kernel_eval(ai, b.row(j).transpose(), spec);
            g.values(i, j) = v;
            if (same) g.values(j, i) = v;
        }
    }
    if (!g.values.allFinite()) throw InputError("gram: non-finite kernel value");
    return g;
}

inline GramMatrix gram(const FeatureSet& a, const FeatureSet& b, const KernelSpec& spec) {
    return gram(a.vectors, b.vectors, spec);
}

/// k(x_i, x_i) for every row.
inline Vector self_kernel(const Matrix& rows, const KernelSpec& spec) {
    Vector v(rows.rows());
    for (Index i = 0; i < rows.rows(); ++i) {
        const Vector r = rows.row(i).transpose();
        v(i) = kernel_eval(r, r, spec);
    }
    return v;
}

/// k'(x, y) = k(x, y) / sqrt(k(x, x) k(y, y)).
inline GramMatrix normalize_gram(const GramMatrix& g, const Vector& self_a, const Vector& self_b) {
    if (self_a.size() != g.rows() || self_b.size() != g.cols())
        throw InputError("normalize_gram: self-evaluation lengths do not match the gram");
    if (!(self_a.minCoeff() > 0.0) || !(self_b.minCoeff() > 0.0))
        throw NormalizationError("normalize_gram: self-evaluations must be positive");
    GramMatrix out = g;
    const Vector ia = self_a.cwiseSqrt().cwiseInverse();
    const Vector ib = self_b.cwiseSqrt().cwiseInverse();
    out.values = ia.asDiagonal() * g.values * ib.asDiagonal();
    out.normalized = true;
    if (g.rows() == g.cols() && self_a == self_b) {
        // Exact symmetry and unit diagonal for self-grams.
        out.values = 0.5 * (out.values + out.values.transpose()).eval();
        out.values.diagonal().setOnes();
    }
    return out;
}

/// Normalizes a self-gram by its own diagonal.
inline GramMatrix normalize_gram(const GramMatrix& g) {
    const Vector d = g.values.diagonal();
    return normalize_gram(g, d, d);
}

struct PsdReport {
    bool is_psd = false;
    double min_eigenvalue = 0.0;
};

inline void require_symmetric(const Matrix& m, double tol, const char* who) {
    if (m.rows() != m.cols()) throw InputError(std::string(who) + ": matrix is not square");
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > tol) throw InputError(std::string(who) + ": matrix is asymmetric beyond tolerance");
}

inline PsdReport check_psd(const Matrix& g, double tol) {
    require_symmetric(g, tol, "check_psd");
    Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
    const double lambda_min = es.eigenvalues()(0);
    return {lambda_min >= -tol, lambda_min};
}

inline PsdReport check_psd(const GramMatrix& g, double tol) {
    return check_psd(g.values, tol);
}

/// Projects a symmetric matrix onto the PSD cone (negative eigenvalues set to
/// zero) when its smallest eigenvalue is below -tol; returns it unchanged
/// otherwise.
inline GramMatrix clip_psd(const GramMatrix& g, double tol) {
    require_symmetric(g.values, tol, "clip_psd");
    Eigen::SelfAdjointEigenSolver<Matrix> es(g.values);
    if (es.eigenvalues()(0) >= -tol) return g;
    GramMatrix out = g;
    const Vector clipped = es.eigenvalues().cwiseMax(0.0);
    out.values = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    out.values = 0.5 * (out.values + out.values.transpose()).eval();
    return out;
}

}  // namespace mfkc
