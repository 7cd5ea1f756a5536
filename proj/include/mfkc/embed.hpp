// Explicit RKHS coordinates through the empirical kernel map.
//
// From the anchor Gram G = U L U' (anchors are the gallery samples), the
// anchors get coordinates Z = U_d L_d^{1/2} and any other point with kernel
// row k_x against the anchors gets z(x) = L_d^{-1/2} U_d' k_x, so that
// <z(x), z(y)> approximates k(x, y) (exactly on the anchor span at full rank).

#pragma once

#include "mfkc/core.hpp"
#include "mfkc/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <string>

namespace mfkc {

struct EmpiricalKernelMap {
    Vector eigvals;  // length d, descending, all > eig_tol
    Matrix eigvecs;  // N x d, sign-canonical columns
    double eig_tol = 0.0;

    [[nodiscard]] Index dim() const noexcept { return eigvals.size(); }
    [[nodiscard]] Index anchors() const noexcept { return eigvecs.rows(); }

    /// Anchor coordinates U_d L_d^{1/2}.
    [[nodiscard]] Matrix training_coordinates() const {
        return eigvecs * eigvals.cwiseSqrt().asDiagonal();
    }
};

/// `dim` unset means "auto": keep every eigenvalue above 1e-8 * lambda_max
/// (and above eig_tol).
inline EmpiricalKernelMap fit_empirical_map(const Matrix& g_train, std::optional<Index> dim, double eig_tol) {
    require_symmetric(g_train, 1e-8 * std::max(1.0, g_train.cwiseAbs().maxCoeff()), "fit_empirical_map");
    if (dim && *dim < 1) throw ParameterError("fit_empirical_map: dim must be >= 1");
    if (!(eig_tol >= 0.0)) throw ParameterError("fit_empirical_map: eig_tol must be non-negative");
    Eigen::SelfAdjointEigenSolver<Matrix> es(g_train);
    if (es.info() != Eigen::Success) throw DegenerateDataError("fit_empirical_map: eigensolver failed");
    const Vector vals = es.eigenvalues().reverse();
    const Matrix vecs = es.eigenvectors().rowwise().reverse();
    const double lambda_max = vals.size() > 0 ? vals(0) : 0.0;
    double threshold = eig_tol;
    if (!dim) threshold = std::max(threshold, 1e-8 * lambda_max);
    Index keep = 0;
    const Index limit = dim ? std::min(*dim, vals.size()) : vals.size();
    while (keep < limit && vals(keep) > threshold) ++keep;
    if (keep == 0) throw DegenerateDataError("fit_empirical_map: no eigenvalue above the tolerance");

    EmpiricalKernelMap map;
    map.eigvals = vals.head(keep);
    map.eigvecs = vecs.leftCols(keep);
    map.eig_tol = eig_tol;
    canonicalize_signs(map.eigvecs);
    return map;
}

inline EmpiricalKernelMap fit_empirical_map(const GramMatrix& g_train, std::optional<Index> dim, double eig_tol) {
    return fit_empirical_map(g_train.values, dim, eig_tol);
}

/// Coordinates for each row of `g_cross` (points x anchors).
inline Matrix embed_points(const EmpiricalKernelMap& map, const Matrix& g_cross) {
    if (g_cross.cols() != map.anchors())
        throw InputError("embed_points: cross Gram has " + std::to_string(g_cross.cols()) + " columns, map has " +
                         std::to_string(map.anchors()) + " anchors");
    return g_cross * map.eigvecs * map.eigvals.cwiseSqrt().cwiseInverse().asDiagonal();
}

inline Matrix embed_points(const EmpiricalKernelMap& map, const GramMatrix& g_cross) {
    return embed_points(map, g_cross.values);
}

}  // namespace mfkc
