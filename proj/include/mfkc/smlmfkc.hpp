// Soft-margin learning of multiple feature-kernel combinations.
//
// For every kernel q the solver learns simplex weights beta^q over the F
// features, combining the normalized Grams K = sum_m beta_m G_{m,q}, by
// minimizing
//
//   sum_k [ 1/2 sum_m beta_m a_k' Y_k G_{m,q} Y_k a_k
//           + C sum_i max(0, 1 - y_ki f_k(x_i)) ]
//
// over one-vs-rest machines k, where f_k(x_i) = sum_j a_kj y_kj K(i, j) + b_k.
// Block coordinate descent alternates an SVM solve at fixed beta with the
// closed-form weight update beta_m <- |w_m| / sum_j |w_j|,
// |w_m|^2 = beta_m^2 sum_k a_k' Y_k G_{m,q} Y_k a_k. A backtracking step on
// the weight update keeps the objective trace monotone under finite solver
// precision.
//
// Per kernel, the selected feature is argmax_m beta^q_m (lowest index on ties).

#pragma once

#include "mfkc/core.hpp"
#include "mfkc/kernels.hpp"
#include "mfkc/parallel.hpp"
#include "mfkc/svm.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace mfkc {

struct FeatureKernelGrid {
    /// grams[m][q]: feature m under kernel q, normalized, N x N.
    std::vector<std::vector<GramMatrix>> grams;
    std::vector<std::string> feature_tags;
    std::vector<KernelSpec> kernel_specs;
    std::vector<int> labels;

    [[nodiscard]] std::size_t num_features() const noexcept { return grams.size(); }
    [[nodiscard]] std::size_t num_kernels() const noexcept { return kernel_specs.size(); }
    [[nodiscard]] Index num_samples() const noexcept { return static_cast<Index>(labels.size()); }

    [[nodiscard]] const Matrix& at(std::size_t m, std::size_t q) const { return grams[m][q].values; }

    void validate() const {
        if (grams.empty() || kernel_specs.empty()) throw ParameterError("feature-kernel grid needs F >= 1 and P >= 1");
        if (feature_tags.size() != grams.size()) throw InputError("feature-kernel grid: tag count != feature count");
        const Index n = num_samples();
        if (n < 1) throw InputError("feature-kernel grid: no samples");
        for (const auto& row : grams) {
            if (row.size() != kernel_specs.size()) throw InputError("feature-kernel grid: ragged gram array");
            for (const auto& g : row)
                if (g.rows() != n || g.cols() != n) throw InputError("feature-kernel grid: grams must all be N x N");
        }
    }
};

struct MfkcOptions {
    double C = 1.0;
    /// Stop when the weight update changes beta by less than this in L1.
    double tol = 1e-4;
    int max_sweeps = 50;
    int max_backtracks = 8;
    SvmOptions svm{1e-8, 0};
    unsigned threads = 1;
};

struct BetaResult {
    Vector beta;
    MulticlassSvmModel svm;
    std::vector<double> trace;
    int sweeps = 0;
};

struct MfkcModel {
    Matrix beta;  // P x F, row q on the simplex
    std::vector<MulticlassSvmModel> per_kernel_svm;
    std::vector<std::pair<int, int>> selected_pairs;  // (feature index, kernel index)
    std::vector<std::vector<double>> objective_trace;
};

/// sum_m beta_m G_{m,q}.
inline Matrix combined_gram(const FeatureKernelGrid& grid, std::size_t q, const Vector& beta) {
    Matrix k = Matrix::Zero(grid.num_samples(), grid.num_samples());
    for (std::size_t m = 0; m < grid.num_features(); ++m)
        if (beta(static_cast<Index>(m)) != 0.0) k += beta(static_cast<Index>(m)) * grid.at(m, q);
    return k;
}

inline void check_simplex(const Vector& beta, double tol, const char* who) {
    if (beta.size() < 1) throw ParameterError(std::string(who) + ": empty weight vector");
    if (beta.minCoeff() < -tol || std::abs(beta.sum() - 1.0) > tol)
        throw ParameterError(std::string(who) + ": weights must lie on the probability simplex");
}

/// Objective value for kernel q at (beta, {alpha_k, b_k}). alpha_stack[k]
/// and b_stack[k] belong to the one-vs-rest machine of class_ids[k].
inline double mfkc_objective(const FeatureKernelGrid& grid, std::size_t q, const Vector& beta,
                            const std::vector<Vector>& alpha_stack, const std::vector<double>& b_stack, double C,
                            const std::vector<int>& class_ids) {
    check_simplex(beta, 1e-6, "mfkc_objective");
    if (beta.size() != static_cast<Index>(grid.num_features())) throw InputError("mfkc_objective: beta length != F");
    if (alpha_stack.size() != class_ids.size() || b_stack.size() != class_ids.size())
        throw InputError("mfkc_objective: one alpha/bias per class is required");
    const Matrix k = combined_gram(grid, q, beta);
    double total = 0.0;
    for (std::size_t c = 0; c < class_ids.size(); ++c) {
        const Vector y = one_vs_rest_labels(grid.labels, class_ids[c]);
        if (alpha_stack[c].size() != grid.num_samples()) throw InputError("mfkc_objective: alpha length != N");
        const Vector coef = alpha_stack[c].cwiseProduct(y);
        const Vector kc = k * coef;
        double hinge = 0.0;
        for (Index i = 0; i < y.size(); ++i) hinge += std::max(0.0, 1.0 - y(i) * (kc(i) + b_stack[c]));
        total += 0.5 * coef.dot(kc) + C * hinge;
    }
    if (!std::isfinite(total)) throw DivergenceError("mfkc_objective: non-finite objective");
    return total;
}

inline double mfkc_objective(const FeatureKernelGrid& grid, std::size_t q, const Vector& beta,
                            const MulticlassSvmModel& svm, double C) {
    std::vector<Vector> alphas;
    std::vector<double> biases;
    for (const auto& m : svm.machines) {
        alphas.push_back(m.alpha);
        biases.push_back(m.bias);
    }
    return mfkc_objective(grid, q, beta, alphas, biases, C, svm.class_ids);
}

namespace detail {

inline MulticlassSvmModel solve_combined(const FeatureKernelGrid& grid, std::size_t q, const Vector& beta,
                                         const std::vector<int>& class_ids, const MfkcOptions& opt,
                                         const MulticlassSvmModel* warm) {
    const Matrix k = combined_gram(grid, q, beta);
    MulticlassSvmModel model;
    model.class_ids = class_ids;
    for (std::size_t c = 0; c < class_ids.size(); ++c) {
        const Vector y = one_vs_rest_labels(grid.labels, class_ids[c]);
        std::optional<Vector> start;
        if (warm) start = warm->machines[c].alpha;
        model.machines.push_back(train_binary(k, y, opt.C, opt.svm, start));
    }
    return model;
}

// Projects small negative round-off to zero and rescales to sum 1.
inline Vector renormalize_simplex(Vector beta) {
    beta = beta.cwiseMax(0.0);
    return beta / beta.sum();
}

}  // namespace detail

/// Learns beta^q for one kernel by block coordinate descent. Starts from the
/// uniform weights.
inline BetaResult learn_beta_for_kernel(const FeatureKernelGrid& grid, std::size_t q, const MfkcOptions& opt) {
    grid.validate();
    if (q >= grid.num_kernels()) throw ParameterError("learn_beta_for_kernel: kernel index out of range");
    if (!(opt.C > 0.0)) throw ParameterError("learn_beta_for_kernel: C must be positive");
    const auto class_ids = distinct_labels(grid.labels);
    if (class_ids.size() < 2) throw InputError("learn_beta_for_kernel: all labels are identical");
    const auto f = static_cast<Index>(grid.num_features());

    BetaResult res;
    res.beta = Vector::Constant(f, 1.0 / static_cast<double>(f));
    res.svm = detail::solve_combined(grid, q, res.beta, class_ids, opt, nullptr);
    double objective = mfkc_objective(grid, q, res.beta, res.svm, opt.C);
    res.trace.push_back(objective);
    res.sweeps = 1;
    if (f == 1) return res;

    // Per-machine Y a, reused for all features.
    std::vector<Vector> coefs;
    for (int sweep = 1; sweep < opt.max_sweeps; ++sweep) {
        coefs.clear();
        for (const auto& m : res.svm.machines) coefs.push_back(m.coefficients());
        Vector norms(f);
        for (Index m = 0; m < f; ++m) {
            const Matrix& g = grid.at(static_cast<std::size_t>(m), q);
            double quad = 0.0;
            for (const auto& c : coefs) quad += c.dot(g * c);
            norms(m) = res.beta(m) * std::sqrt(std::max(quad, 0.0));
        }
        const double total = norms.sum();
        if (!(total > 0.0)) break;
        const Vector candidate = norms / total;

        double step = 1.0;
        bool accepted = false;
        Vector trial;
        MulticlassSvmModel trial_svm;
        double trial_obj = 0.0;
        for (int bt = 0; bt <= opt.max_backtracks; ++bt, step *= 0.5) {
            trial = detail::renormalize_simplex(res.beta + step * (candidate - res.beta));
            trial_svm = detail::solve_combined(grid, q, trial, class_ids, opt, &res.svm);
            trial_obj = mfkc_objective(grid, q, trial, trial_svm, opt.C);
            if (trial_obj <= objective) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        const double change = (trial - res.beta).lpNorm<1>();
        res.beta = trial;
        res.svm = std::move(trial_svm);
        objective = trial_obj;
        res.trace.push_back(objective);
        res.sweeps = sweep + 1;
        if (change < opt.tol) break;
    }
    return res;
}

/// Index of the largest entry; lowest index on ties.
inline int argmax_lowest(const Vector& v) {
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return static_cast<int>(best);
}

/// Runs the per-kernel learning for all P kernels and selects one feature per
/// kernel.
inline MfkcModel select_pairs(const FeatureKernelGrid& grid, const MfkcOptions& opt) {
    grid.validate();
    const std::size_t p = grid.num_kernels();
    std::vector<BetaResult> results(p);
    parallel_for(p, opt.threads, [&](std::size_t q) { results[q] = learn_beta_for_kernel(grid, q, opt); });

    MfkcModel model;
    model.beta.resize(static_cast<Index>(p), static_cast<Index>(grid.num_features()));
    for (std::size_t q = 0; q < p; ++q) {
        model.beta.row(static_cast<Index>(q)) = results[q].beta.transpose();
        model.selected_pairs.emplace_back(argmax_lowest(results[q].beta), static_cast<int>(q));
        model.per_kernel_svm.push_back(std::move(results[q].svm));
        model.objective_trace.push_back(std::move(results[q].trace));
    }
    return model;
}

}  // namespace mfkc
