// Soft-margin SVM dual solver on precomputed Gram matrices.
//
// Solves   min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C_i,  y'a = 0,
// Q_ij = y_i y_j K_ij, by pairwise SMO with second-order working-set
// selection. Per-sample bounds C_i allow the weighted hinge used by domain
// adaptation (source samples at C_S, target samples at C_T).
//
// Decision function f(x) = sum_i a_i y_i k(x, x_i) + b.

#pragma once

#include "mfkc/core.hpp"
#include "mfkc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mfkc {

struct SvmOptions {
    double tol = 1e-6;
    /// <= 0 means 1e5 * N.
    long max_iter = 0;
};

struct BinarySvmModel {
    Vector alpha;            // length N
    double bias = 0.0;
    std::vector<Index> support;
    Vector labels_pm1;       // length N, entries +-1
    double C = 1.0;          // nominal bound; per-sample bounds in upper
    Vector upper;            // length N, C_i
    long iterations = 0;

    [[nodiscard]] Index size() const noexcept { return alpha.size(); }

    /// alpha_i y_i, the expansion coefficients of the decision function.
    [[nodiscard]] Vector coefficients() const { return alpha.cwiseProduct(labels_pm1); }
};

class SvmConvergenceError : public ConvergenceError {
public:
    SvmConvergenceError(const std::string& what, BinarySvmModel best)
        : ConvergenceError(what), best_(std::move(best)) {}
    [[nodiscard]] const BinarySvmModel& best() const noexcept { return best_; }

private:
    BinarySvmModel best_;
};

inline constexpr double kSupportThreshold = 1e-10;

namespace detail {

inline void check_binary_labels(const Vector& y) {
    bool pos = false, neg = false;
    for (Index i = 0; i < y.size(); ++i) {
        if (y(i) == 1.0) pos = true;
        else if (y(i) == -1.0) neg = true;
        else throw InputError("svm: labels must be +1 or -1");
    }
    if (!pos || !neg) throw InputError("svm: both classes must be present (single-class labels)");
}

inline bool in_up(double y, double a, double c) {
    return y > 0 ? a < c : a > 0.0;
}

inline bool in_low(double y, double a, double c) {
    return y > 0 ? a > 0.0 : a < c;
}

// libsvm-style bias: average of y_i G_i over free variables, else the
// midpoint of the feasible interval. Zero-bound samples carry no constraint.
inline double compute_bias(const Vector& alpha, const Vector& y, const Vector& grad, const Vector& upper) {
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    long n_free = 0;
    for (Index i = 0; i < alpha.size(); ++i) {
        if (upper(i) <= 0.0) continue;
        const double yg = y(i) * grad(i);
        if (alpha(i) >= upper(i)) {
            if (y(i) < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (alpha(i) <= 0.0) {
            if (y(i) > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            sum_free += yg;
            ++n_free;
        }
    }
    double rho = 0.0;
    if (n_free > 0) rho = sum_free / static_cast<double>(n_free);
    else if (std::isfinite(ub) && std::isfinite(lb)) rho = 0.5 * (ub + lb);
    else if (std::isfinite(ub)) rho = ub;
    else if (std::isfinite(lb)) rho = lb;
    return -rho;
}

inline std::vector<Index> support_of(const Vector& alpha) {
    std::vector<Index> s;
    for (Index i = 0; i < alpha.size(); ++i)
        if (alpha(i) > kSupportThreshold) s.push_back(i);
    return s;
}

}  // namespace detail

/// Gradient of the minimization-form dual, Q a - e.
inline Vector dual_gradient(const Matrix& k, const Vector& y, const Vector& alpha) {
    return y.cwiseProduct(k * alpha.cwiseProduct(y)) - Vector::Ones(alpha.size());
}

/// Dual objective in maximization form, sum a - 1/2 a'Qa.
inline double dual_objective(const Matrix& k, const Vector& y, const Vector& alpha) {
    const Vector ay = alpha.cwiseProduct(y);
    return alpha.sum() - 0.5 * ay.dot(k * ay);
}

inline double dual_objective(const BinarySvmModel& m, const Matrix& k) {
    return dual_objective(k, m.labels_pm1, m.alpha);
}

/// Largest KKT violation of a model against its training Gram: the maximal
/// pairwise violation max_{I_up} -y G - min_{I_low} -y G, together with any
/// box or equality infeasibility.
inline double kkt_violation(const BinarySvmModel& m, const Matrix& k) {
    const Vector& y = m.labels_pm1;
    const Vector grad = dual_gradient(k, y, m.alpha);
    double up = -std::numeric_limits<double>::infinity();
    double low = std::numeric_limits<double>::infinity();
    double infeasible = 0.0;
    for (Index i = 0; i < m.size(); ++i) {
        const double a = m.alpha(i);
        infeasible = std::max({infeasible, -a, a - m.upper(i)});
        const double v = -y(i) * grad(i);
        if (detail::in_up(y(i), a, m.upper(i))) up = std::max(up, v);
        if (detail::in_low(y(i), a, m.upper(i))) low = std::min(low, v);
    }
    infeasible = std::max(infeasible, std::abs(m.alpha.dot(y)));
    const double pairwise = (std::isfinite(up) && std::isfinite(low)) ? std::max(0.0, up - low) : 0.0;
    return std::max(pairwise, infeasible);
}

inline double kkt_violation(const BinarySvmModel& m, const GramMatrix& g) {
    return kkt_violation(m, g.values);
}

namespace detail {

// Exact minimization over the free variables with the bounded ones held
// fixed: an equality-constrained Newton step, truncated at the box. SMO
// alone crawls on low-rank Grams where the free set spans a flat valley.
// Returns true when the step lowered the (minimization-form) objective.
inline bool polish_free_set(const Matrix& k, const Vector& y, const Vector& upper, Vector& alpha, Vector& grad) {
    std::vector<Index> free;
    for (Index i = 0; i < alpha.size(); ++i)
        if (alpha(i) > 0.0 && alpha(i) < upper(i)) free.push_back(i);
    const auto nf = static_cast<Index>(free.size());
    if (nf < 2) return false;
    Matrix kkt = Matrix::Zero(nf + 1, nf + 1);
    Vector rhs = Vector::Zero(nf + 1);
    for (Index a = 0; a < nf; ++a) {
        const Index i = free[static_cast<std::size_t>(a)];
        for (Index b = 0; b < nf; ++b) {
            const Index j = free[static_cast<std::size_t>(b)];
            kkt(a, b) = y(i) * y(j) * k(i, j);
        }
        kkt(a, nf) = kkt(nf, a) = y(i);
        rhs(a) = -grad(i);
    }
    const Vector sol = Eigen::CompleteOrthogonalDecomposition<Matrix>(kkt).solve(rhs);
    // An inconsistent system means the objective is linear and decreasing
    // along the residual (a null direction of the system); ride it to the box.
    const Vector resid = rhs - kkt * sol;
    const bool ray = resid.norm() > 1e-12 * (1.0 + rhs.norm());
    const Vector step = ray ? Vector(resid.head(nf)) : Vector(sol.head(nf));
    if (!step.allFinite() || step.norm() == 0.0) return false;
    double slope = 0.0;
    double t_max = ray ? std::numeric_limits<double>::infinity() : 1.0;
    Index limiting = -1;
    for (Index a = 0; a < nf; ++a) {
        const Index i = free[static_cast<std::size_t>(a)];
        slope += grad(i) * step(a);
        if (step(a) < 0.0 && -alpha(i) / step(a) < t_max) {
            t_max = -alpha(i) / step(a);
            limiting = a;
        } else if (step(a) > 0.0 && (upper(i) - alpha(i)) / step(a) < t_max) {
            t_max = (upper(i) - alpha(i)) / step(a);
            limiting = a;
        }
    }
    if (!std::isfinite(t_max)) return false;
    if (!(slope < 0.0) || !(t_max > 0.0)) return false;
    Vector next = alpha;
    for (Index a = 0; a < nf; ++a) {
        const Index i = free[static_cast<std::size_t>(a)];
        next(i) = std::clamp(alpha(i) + t_max * step(a), 0.0, upper(i));
    }
    if (limiting >= 0) {
        const Index i = free[static_cast<std::size_t>(limiting)];
        next(i) = step(limiting) < 0.0 ? 0.0 : upper(i);
    }
    const auto objective = [&](const Vector& a) {
        const Vector ay = a.cwiseProduct(y);
        return 0.5 * ay.dot(k * ay) - a.sum();
    };
    if (!(objective(next) < objective(alpha))) return false;
    alpha = next;
    grad = y.cwiseProduct(k * alpha.cwiseProduct(y)) - Vector::Ones(alpha.size());
    return true;
}

}  // namespace detail

/// SMO with per-sample upper bounds. `warm_start`, when given, must be
/// feasible for the same labels and bounds.
inline BinarySvmModel train_binary_weighted(const Matrix& k, const Vector& y, const Vector& upper,
                                            const SvmOptions& opt = {},
                                            const std::optional<Vector>& warm_start = std::nullopt) {
    const Index n = k.rows();
    if (k.cols() != n) throw InputError("svm: Gram matrix must be square");
    if (y.size() != n || upper.size() != n) throw InputError("svm: label/bound length does not match the Gram");
    detail::check_binary_labels(y);
    if (!(upper.minCoeff() >= 0.0) || !upper.allFinite()) throw ParameterError("svm: C must be non-negative");
    if (!(upper.maxCoeff() > 0.0)) throw ParameterError("svm: C must be positive");
    if (!(opt.tol > 0.0)) throw ParameterError("svm: tol must be positive");
    const long max_iter = opt.max_iter > 0 ? opt.max_iter : 100000L * static_cast<long>(n);
    constexpr double tau = 1e-12;

    Vector alpha = Vector::Zero(n);
    if (warm_start) {
        if (warm_start->size() != n) throw InputError("svm: warm start has the wrong length");
        alpha = warm_start->cwiseMax(0.0).cwiseMin(upper);
    }
    Vector grad = warm_start ? dual_gradient(k, y, alpha) : Vector(-Vector::Ones(n));
    const Vector diag = k.diagonal();

    auto finish = [&](long iters) {
        BinarySvmModel m;
        m.alpha = alpha;
        m.labels_pm1 = y;
        m.upper = upper;
        m.C = upper.maxCoeff();
        m.bias = detail::compute_bias(alpha, y, grad, upper);
        m.support = detail::support_of(alpha);
        m.iterations = iters;
        return m;
    };

    long iter = 0;
    for (;; ++iter) {
        // Working set: i maximizes -y G over I_up; j minimizes the second-order
        // gain estimate over I_low.
        double g_max = -std::numeric_limits<double>::infinity();
        Index i = -1;
        for (Index t = 0; t < n; ++t) {
            if (!detail::in_up(y(t), alpha(t), upper(t))) continue;
            const double v = -y(t) * grad(t);
            if (v > g_max) {
                g_max = v;
                i = t;
            }
        }
        double g_max2 = -std::numeric_limits<double>::infinity();
        double obj_min = std::numeric_limits<double>::infinity();
        Index j = -1;
        for (Index t = 0; t < n; ++t) {
            if (!detail::in_low(y(t), alpha(t), upper(t))) continue;
            const double v = y(t) * grad(t);
            g_max2 = std::max(g_max2, v);
            if (i < 0) continue;
            const double b = g_max + v;
            if (b > 0.0) {
                double a = diag(i) + diag(t) - 2.0 * k(i, t);
                if (a <= 0.0) a = tau;
                const double gain = -(b * b) / a;
                if (gain < obj_min) {
                    obj_min = gain;
                    j = t;
                }
            }
        }
        if (i < 0 || j < 0 || g_max + g_max2 < opt.tol) break;
        if (iter > 0 && iter % (10 * n) == 0) {
            bool moved = false;
            for (Index p = 0; p < n && detail::polish_free_set(k, y, upper, alpha, grad); ++p) moved = true;
            if (moved) continue;
        }
        if (iter >= max_iter)
            throw SvmConvergenceError("svm: iteration cap " + std::to_string(max_iter) + " exceeded", finish(iter));

        const double ci = upper(i);
        const double cj = upper(j);
        const double old_ai = alpha(i);
        const double old_aj = alpha(j);
        double quad = diag(i) + diag(j) - 2.0 * k(i, j);
        if (quad <= 0.0) quad = tau;
        if (y(i) != y(j)) {
            const double delta = (-grad(i) - grad(j)) / quad;
            const double diff = alpha(i) - alpha(j);
            alpha(i) += delta;
            alpha(j) += delta;
            if (diff > 0) {
                if (alpha(j) < 0) {
                    alpha(j) = 0;
                    alpha(i) = diff;
                }
            } else if (alpha(i) < 0) {
                alpha(i) = 0;
                alpha(j) = -diff;
            }
            if (diff > ci - cj) {
                if (alpha(i) > ci) {
                    alpha(i) = ci;
                    alpha(j) = ci - diff;
                }
            } else if (alpha(j) > cj) {
                alpha(j) = cj;
                alpha(i) = cj + diff;
            }
        } else {
            const double delta = (grad(i) - grad(j)) / quad;
            const double sum = alpha(i) + alpha(j);
            alpha(i) -= delta;
            alpha(j) += delta;
            if (sum > ci) {
                if (alpha(i) > ci) {
                    alpha(i) = ci;
                    alpha(j) = sum - ci;
                }
            } else if (alpha(j) < 0) {
                alpha(j) = 0;
                alpha(i) = sum;
            }
            if (sum > cj) {
                if (alpha(j) > cj) {
                    alpha(j) = cj;
                    alpha(i) = sum - cj;
                }
            } else if (alpha(i) < 0) {
                alpha(i) = 0;
                alpha(j) = sum;
            }
        }
        const double di = alpha(i) - old_ai;
        const double dj = alpha(j) - old_aj;
        // G_t += Q_ti di + Q_tj dj
        grad += (y(i) * di) * y.cwiseProduct(k.col(i)) + (y(j) * dj) * y.cwiseProduct(k.col(j));
    }
    return finish(iter);
}

/// Standard soft-margin machine with a single C.
inline BinarySvmModel train_binary(const Matrix& k, const Vector& y, double C, const SvmOptions& opt = {},
                                   const std::optional<Vector>& warm_start = std::nullopt) {
    if (!(C > 0.0) || !std::isfinite(C)) throw ParameterError("svm: C must be positive");
    BinarySvmModel m = train_binary_weighted(k, y, Vector::Constant(k.rows(), C), opt, warm_start);
    m.C = C;
    return m;
}

inline BinarySvmModel train_binary(const GramMatrix& g, const Vector& y, double C, const SvmOptions& opt = {}) {
    return train_binary(g.values, y, C, opt);
}

/// f = g_test * (alpha .* y) + b, g_test rows are test points against the
/// training set.
inline Vector decision_values(const BinarySvmModel& m, const Matrix& g_test) {
    if (g_test.cols() != m.size())
        throw InputError("decision_values: test Gram has " + std::to_string(g_test.cols()) +
                         " columns, model was trained on " + std::to_string(m.size()));
    return (g_test * m.coefficients()).array() + m.bias;
}

inline Vector decision_values(const BinarySvmModel& m, const GramMatrix& g_test) {
    return decision_values(m, g_test.values);
}

/// Primal objective 1/2 |w|^2 + sum_i C_i max(0, 1 - y_i f(x_i)) of a model
/// on its own training Gram.
inline double primal_objective(const BinarySvmModel& m, const Matrix& k) {
    const Vector coef = m.coefficients();
    const Vector f = (k * coef).array() + m.bias;
    double hinge = 0.0;
    for (Index i = 0; i < m.size(); ++i) hinge += m.upper(i) * std::max(0.0, 1.0 - m.labels_pm1(i) * f(i));
    return 0.5 * coef.dot(k * coef) + hinge;
}

// ---------------------------------------------------------------------------
// One-vs-rest

struct MulticlassSvmModel {
    std::vector<BinarySvmModel> machines;
    std::vector<int> class_ids;

    [[nodiscard]] std::size_t num_classes() const noexcept { return class_ids.size(); }

    /// n_test x K decision values.
    [[nodiscard]] Matrix decision_matrix(const Matrix& g_test) const {
        Matrix out(g_test.rows(), static_cast<Index>(machines.size()));
        for (std::size_t k = 0; k < machines.size(); ++k)
            out.col(static_cast<Index>(k)) = decision_values(machines[k], g_test);
        return out;
    }

    /// Argmax class per test row; ties go to the lowest machine index.
    [[nodiscard]] std::vector<int> predict(const Matrix& g_test) const {
        const Matrix d = decision_matrix(g_test);
        std::vector<int> out(static_cast<std::size_t>(d.rows()));
        for (Index r = 0; r < d.rows(); ++r) {
            Index best = 0;
            for (Index c = 1; c < d.cols(); ++c)
                if (d(r, c) > d(r, best)) best = c;
            out[static_cast<std::size_t>(r)] = class_ids[static_cast<std::size_t>(best)];
        }
        return out;
    }
};

/// +1 iff label == class_id.
inline Vector one_vs_rest_labels(const std::vector<int>& labels, int class_id) {
    Vector y(static_cast<Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Index>(i)) = labels[i] == class_id ? 1.0 : -1.0;
    return y;
}

inline MulticlassSvmModel train_one_vs_rest(const Matrix& k, const std::vector<int>& labels,
                                            const std::vector<int>& class_ids, double C,
                                            const SvmOptions& opt = {}) {
    if (static_cast<Index>(labels.size()) != k.rows()) throw InputError("svm: label count does not match the Gram");
    if (class_ids.size() < 2) throw ParameterError("one-vs-rest needs at least two classes");
    MulticlassSvmModel model;
    model.class_ids = class_ids;
    for (int cls : class_ids) {
        if (std::count(labels.begin(), labels.end(), cls) == 0)
            throw InputError("one-vs-rest: class " + std::to_string(cls) + " has no samples");
        model.machines.push_back(train_binary(k, one_vs_rest_labels(labels, cls), C, opt));
    }
    return model;
}

/// Classes taken from the labels, ascending.
inline MulticlassSvmModel train_one_vs_rest(const Matrix& k, const std::vector<int>& labels, double C,
                                            const SvmOptions& opt = {}) {
    return train_one_vs_rest(k, labels, distinct_labels(labels), C, opt);
}

inline MulticlassSvmModel train_one_vs_rest(const GramMatrix& g, const std::vector<int>& labels, double C,
                                            const SvmOptions& opt = {}) {
    return train_one_vs_rest(g.values, labels, C, opt);
}

}  // namespace mfkc
