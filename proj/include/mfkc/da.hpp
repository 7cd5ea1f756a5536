// Max-margin domain adaptation: a transform W of the (augmented) source
// features learned jointly with one-vs-rest hyperplanes (theta_k, b_k):
//
//   J = 1/2 |W|_F^2 + sum_k [ 1/2 |theta_k|^2
//         + C_S sum_i max(0, 1 - delta(y_i^s, k) (W [x_i^s; 1])' [theta_k; b_k])
//         + C_T sum_i max(0, 1 - delta(y_i^t, k) [x_i^t; 1]' [theta_k; b_k]) ]
//
// W is (d+1) x (d+1) with its last row pinned to (0, ..., 0, 1), so the
// transformed source keeps a unit augmentation. Coordinate descent alternates
//   (a) W fixed: K weighted SVMs (linear kernel) on transformed source and
//       raw target, bounds C_S and C_T;
//   (b) hyperplanes fixed: subgradient descent on the W-part of J.
// Each half-step is accepted only if it does not increase J.

#pragma once

#include "mfkc/core.hpp"
#include "mfkc/features.hpp"
#include "mfkc/svm.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mfkc {

/// +1 iff y == k.
constexpr int delta(int y, int k) noexcept {
    return y == k ? 1 : -1;
}

struct DaProblem {
    Matrix source_x;  // n_S x d
    std::vector<int> source_y;
    Matrix target_x;  // n_T x d
    std::vector<int> target_y;
    double C_S = 1.0;
    double C_T = 10.0;

    [[nodiscard]] Index dim() const noexcept { return source_x.cols(); }

    /// Classes present in the source, ascending.
    [[nodiscard]] std::vector<int> class_ids() const { return distinct_labels(source_y); }

    void validate() const {
        if (source_x.rows() < 1 || source_x.cols() < 1) throw InputError("DA: empty source set");
        if (static_cast<Index>(source_y.size()) != source_x.rows()) throw InputError("DA: source label count mismatch");
        if (static_cast<Index>(target_y.size()) != target_x.rows()) throw InputError("DA: target label count mismatch");
        if (target_x.rows() > 0 && target_x.cols() != source_x.cols())
            throw InputError("DA: source and target dimensions differ");
        if (!(C_S >= 0.0) || !(C_T >= 0.0) || !std::isfinite(C_S) || !std::isfinite(C_T))
            throw ParameterError("DA: C_S and C_T must be finite and non-negative");
        if (C_S == 0.0 && C_T == 0.0) throw ParameterError("DA: C_S and C_T cannot both be zero");
        if (!source_x.allFinite() || !target_x.allFinite()) throw InputError("DA: non-finite features");
        const auto classes = class_ids();
        if (classes.size() < 2) throw InputError("DA: at least two source classes are required");
        if (source_x.rows() < static_cast<Index>(classes.size())) throw InputError("DA: n_S must be >= K");
        for (int t : target_y)
            if (!std::binary_search(classes.begin(), classes.end(), t))
                throw InputError("DA: target label " + std::to_string(t) + " does not occur in the source");
    }
};

struct DaTransform {
    Matrix W;       // (d+1) x (d+1)
    Matrix theta;   // d x K, column k = theta_k
    Vector bias;    // K
    std::vector<int> class_ids;
    std::vector<double> objective_trace;
    std::vector<std::string> warnings;
};

struct DaOptions {
    int sweeps = 20;
    double tol = 1e-6;
    int inner_iters = 500;
    double inner_tol = 1e-6;
    SvmOptions svm{1e-8, 0};
};

/// Appends a column of ones.
inline Matrix augment(const Matrix& x) {
    Matrix out(x.rows(), x.cols() + 1);
    out.leftCols(x.cols()) = x;
    out.col(x.cols()).setOnes();
    return out;
}

/// First d coordinates of W [x; 1].
inline Vector transform_source(const Matrix& W, const Vector& x) {
    if (W.rows() != x.size() + 1 || W.cols() != x.size() + 1)
        throw InputError("transform_source: W must be (d+1) x (d+1) for d = " + std::to_string(x.size()));
    Vector aug(x.size() + 1);
    aug.head(x.size()) = x;
    aug(x.size()) = 1.0;
    return (W * aug).head(x.size());
}

/// Row-wise transform_source.
inline Matrix transform_source_rows(const Matrix& W, const Matrix& x) {
    if (W.rows() != x.cols() + 1 || W.cols() != x.cols() + 1)
        throw InputError("transform_source: W must be (d+1) x (d+1)");
    return (augment(x) * W.transpose()).leftCols(x.cols());
}

namespace detail {

// Hinge sum over rows of `aug` (n x (d+1)) for all K machines.
inline double da_hinge(const Matrix& aug, const std::vector<int>& y, const Matrix& theta, const Vector& bias,
                       const std::vector<int>& classes) {
    if (aug.rows() == 0) return 0.0;
    const Matrix scores = aug.leftCols(theta.rows()) * theta + aug.col(theta.rows()) * bias.transpose();
    double total = 0.0;
    for (Index i = 0; i < scores.rows(); ++i)
        for (std::size_t k = 0; k < classes.size(); ++k)
            total += std::max(0.0, 1.0 - delta(y[static_cast<std::size_t>(i)], classes[k]) *
                                             scores(i, static_cast<Index>(k)));
    return total;
}

inline void check_da_shapes(const DaProblem& p, const Matrix& W, const Matrix& theta, const Vector& bias,
                            std::size_t k) {
    const Index d = p.dim();
    if (W.rows() != d + 1 || W.cols() != d + 1) throw InputError("DA: W must be (d+1) x (d+1)");
    if (theta.rows() != d || theta.cols() != static_cast<Index>(k) || bias.size() != static_cast<Index>(k))
        throw InputError("DA: hyperplane shapes do not match d and K");
}

}  // namespace detail

/// Exact value of J.
inline double da_objective(const DaProblem& p, const Matrix& W, const Matrix& theta, const Vector& bias) {
    const auto classes = p.class_ids();
    detail::check_da_shapes(p, W, theta, bias, classes.size());
    const Matrix src = augment(p.source_x) * W.transpose();
    const double src_hinge = detail::da_hinge(src, p.source_y, theta, bias, classes);
    const double tgt_hinge =
        p.target_x.rows() > 0 ? detail::da_hinge(augment(p.target_x), p.target_y, theta, bias, classes) : 0.0;
    return 0.5 * W.squaredNorm() + 0.5 * theta.squaredNorm() + p.C_S * src_hinge + p.C_T * tgt_hinge;
}

inline double da_objective(const DaProblem& p, const DaTransform& t) {
    return da_objective(p, t.W, t.theta, t.bias);
}

/// The part of J that depends on W: 1/2 |W|_F^2 + C_S * source hinge.
inline double da_w_objective(const DaProblem& p, const Matrix& W, const Matrix& theta, const Vector& bias) {
    const auto classes = p.class_ids();
    detail::check_da_shapes(p, W, theta, bias, classes.size());
    const Matrix src = augment(p.source_x) * W.transpose();
    return 0.5 * W.squaredNorm() + p.C_S * detail::da_hinge(src, p.source_y, theta, bias, classes);
}

/// A subgradient of da_w_objective with respect to the free rows of W (the
/// last row is pinned; its entry in the result is zero). At a kink
/// (margin exactly 1) the zero subgradient of that hinge is taken.
inline Matrix da_w_subgradient(const DaProblem& p, const Matrix& W, const Matrix& theta, const Vector& bias) {
    const auto classes = p.class_ids();
    detail::check_da_shapes(p, W, theta, bias, classes.size());
    const Index d = p.dim();
    const Matrix xhat = augment(p.source_x);
    const Matrix src = xhat * W.transpose();
    const Matrix scores = src.leftCols(d) * theta + src.col(d) * bias.transpose();
    Matrix active = Matrix::Zero(scores.rows(), scores.cols());
    for (Index i = 0; i < scores.rows(); ++i) {
        for (std::size_t k = 0; k < classes.size(); ++k) {
            const int dl = delta(p.source_y[static_cast<std::size_t>(i)], classes[k]);
            if (1.0 - dl * scores(i, static_cast<Index>(k)) > 0.0) active(i, static_cast<Index>(k)) = dl;
        }
    }
    Matrix grad = Matrix::Zero(d + 1, d + 1);
    // d/dW_top of -delta theta_k' W_top xhat_i = -delta theta_k xhat_i'.
    grad.topRows(d) = W.topRows(d) - p.C_S * theta * (active.transpose() * xhat);
    return grad;
}

namespace detail {

inline void solve_hyperplanes(const DaProblem& p, const Matrix& W, const std::vector<int>& classes,
                              const SvmOptions& svm, Matrix& theta, Vector& bias) {
    const Index d = p.dim();
    const Index ns = p.source_x.rows();
    const Index nt = p.target_x.rows();
    Matrix pts(ns + nt, d);
    pts.topRows(ns) = transform_source_rows(W, p.source_x);
    if (nt > 0) pts.bottomRows(nt) = p.target_x;
    const Matrix k = pts * pts.transpose();
    Vector upper(ns + nt);
    upper.head(ns).setConstant(p.C_S);
    upper.tail(nt).setConstant(p.C_T);
    theta.resize(d, static_cast<Index>(classes.size()));
    bias.resize(static_cast<Index>(classes.size()));
    for (std::size_t c = 0; c < classes.size(); ++c) {
        Vector y(ns + nt);
        for (Index i = 0; i < ns; ++i) y(i) = delta(p.source_y[static_cast<std::size_t>(i)], classes[c]);
        for (Index i = 0; i < nt; ++i) y(ns + i) = delta(p.target_y[static_cast<std::size_t>(i)], classes[c]);
        const BinarySvmModel m = train_binary_weighted(k, y, upper, svm);
        theta.col(static_cast<Index>(c)) = pts.transpose() * m.coefficients();
        bias(static_cast<Index>(c)) = m.bias;
    }
}

// Subgradient descent on the W-subproblem from `W`; returns the best iterate.
inline Matrix solve_transform(const DaProblem& p, const Matrix& W, const Matrix& theta, const Vector& bias,
                              std::size_t n_classes, const DaOptions& opt) {
    const Index d = p.dim();
    if (p.C_S == 0.0) {
        Matrix pinned = Matrix::Zero(d + 1, d + 1);
        pinned(d, d) = 1.0;
        return pinned;
    }
    const double eta0 = 1.0 / (p.C_S * static_cast<double>(p.source_x.rows()) * static_cast<double>(n_classes));
    Matrix current = W;
    Matrix best = W;
    double best_obj = da_w_objective(p, W, theta, bias);
    for (int t = 0; t < opt.inner_iters; ++t) {
        const Matrix g = da_w_subgradient(p, current, theta, bias);
        const double eta = eta0 / (1.0 + t);
        const double step_norm = eta * g.norm();
        current -= eta * g;
        const double obj = da_w_objective(p, current, theta, bias);
        if (obj < best_obj) {
            best_obj = obj;
            best = current;
        }
        if (step_norm < opt.inner_tol) break;
    }
    return best;
}

}  // namespace detail

/// Coordinate descent on J from W = I. `sweeps` = 0 returns the
/// initialization (identity W and the hyperplanes for it).
inline DaTransform train_transform(const DaProblem& p, const DaOptions& opt = {}) {
    p.validate();
    if (opt.sweeps < 0) throw ParameterError("DA: sweeps must be non-negative");
    const auto classes = p.class_ids();
    const Index d = p.dim();

    DaTransform t;
    t.class_ids = classes;
    if (p.target_x.rows() == 0)
        t.warnings.push_back("empty target set: reduces to a source-only SVM with W shrinking toward 0");
    if (p.C_T == 0.0 && p.target_x.rows() > 0) t.warnings.push_back("C_T = 0: target samples are ignored");
    t.W = Matrix::Identity(d + 1, d + 1);
    detail::solve_hyperplanes(p, t.W, classes, opt.svm, t.theta, t.bias);
    double objective = da_objective(p, t);
    if (!std::isfinite(objective)) throw DivergenceError("DA: non-finite objective at initialization");
    t.objective_trace.push_back(objective);

    for (int sweep = 0; sweep < opt.sweeps; ++sweep) {
        const double before = objective;

        // (b) transform step
        const Matrix w_new = detail::solve_transform(p, t.W, t.theta, t.bias, classes.size(), opt);
        const double obj_w = da_objective(p, w_new, t.theta, t.bias);
        if (!std::isfinite(obj_w)) throw DivergenceError("DA: non-finite objective in the transform step");
        if (obj_w <= objective) {
            t.W = w_new;
            objective = obj_w;
        }

        // (a) hyperplane step
        Matrix theta;
        Vector bias;
        detail::solve_hyperplanes(p, t.W, classes, opt.svm, theta, bias);
        const double obj_h = da_objective(p, t.W, theta, bias);
        if (!std::isfinite(obj_h)) throw DivergenceError("DA: non-finite objective in the hyperplane step");
        if (obj_h <= objective) {
            t.theta = std::move(theta);
            t.bias = std::move(bias);
            objective = obj_h;
        }

        t.objective_trace.push_back(objective);
        if (before - objective < opt.tol * std::max(1.0, std::abs(before))) break;
    }
    return t;
}

}  // namespace mfkc
