#include "mfkc/da.hpp"
#include "mfkc/svm.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>

using namespace mfkc;

namespace {

// K Gaussian clusters in d dims; target = source-like draw shifted by t.
DaProblem clustered_problem(std::mt19937_64& rng, int k, Index d, Index per_class_s, Index per_class_t,
                            const Vector& shift, double spread = 0.3, double sep = 2.0) {
    const Matrix centers = oracle::random_matrix(rng, k, d, sep);
    DaProblem p;
    p.source_x.resize(k * per_class_s, d);
    p.target_x.resize(k * per_class_t, d);
    for (int c = 0; c < k; ++c) {
        for (Index i = 0; i < per_class_s; ++i) {
            p.source_x.row(c * per_class_s + i) = centers.row(c) + oracle::random_matrix(rng, 1, d, spread);
            p.source_y.push_back(c);
        }
        for (Index i = 0; i < per_class_t; ++i) {
            p.target_x.row(c * per_class_t + i) =
                centers.row(c) + shift.transpose() + oracle::random_matrix(rng, 1, d, spread);
            p.target_y.push_back(c);
        }
    }
    return p;
}

std::vector<int> classify(const Matrix& x, const DaTransform& t) {
    const Matrix s = (x * t.theta).rowwise() + t.bias.transpose();
    std::vector<int> out;
    for (Index i = 0; i < s.rows(); ++i) {
        Index best = 0;
        for (Index c = 1; c < s.cols(); ++c)
            if (s(i, c) > s(i, best)) best = c;
        out.push_back(t.class_ids[static_cast<std::size_t>(best)]);
    }
    return out;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    int hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace

TEST(Delta, Values) {
    static_assert(delta(3, 3) == 1);
    static_assert(delta(3, 5) == -1);
    for (int y = 0; y < 5; ++y) {
        int sum = 0;
        for (int k = 0; k < 5; ++k) sum += delta(y, k);
        EXPECT_EQ(sum, 2 - 5);
    }
}

TEST(TransformSource, Examples) {
    std::mt19937_64 rng(1);
    const Vector x = oracle::random_matrix(rng, 3, 1);
    EXPECT_EQ(transform_source(Matrix::Identity(4, 4), x), x);
    Matrix w = Matrix::Identity(4, 4);
    const Vector t = (Vector(3) << 1.0, -2.0, 0.5).finished();
    w.topRightCorner(3, 1) = t;
    EXPECT_LT((transform_source(w, x) - (x + t)).cwiseAbs().maxCoeff(), 1e-15);

    const Matrix r = oracle::random_matrix(rng, 4, 4);
    Vector expected(3);
    for (int i = 0; i < 3; ++i) {
        double s = r(i, 3);
        for (int j = 0; j < 3; ++j) s += r(i, j) * x(j);
        expected(i) = s;
    }
    EXPECT_LT((transform_source(r, x) - expected).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_THROW(transform_source(Matrix::Identity(3, 3), x), InputError);

    const Matrix rows = oracle::random_matrix(rng, 5, 3);
    const Matrix tr = transform_source_rows(r, rows);
    for (Index i = 0; i < 5; ++i)
        EXPECT_LT((tr.row(i).transpose() - transform_source(r, rows.row(i).transpose())).norm(), 1e-14);
}

TEST(DaObjective, IdentityAndZeroHyperplanes) {
    std::mt19937_64 rng(2);
    DaProblem p = clustered_problem(rng, 3, 2, 4, 2, Vector::Zero(2));
    p.C_S = 1.5;
    p.C_T = 4.0;
    const Index d = 2;
    const double expected = (d + 1) / 2.0 + 3 * (p.C_S * 12 + p.C_T * 6);
    EXPECT_DOUBLE_EQ(da_objective(p, Matrix::Identity(3, 3), Matrix::Zero(2, 3), Vector::Zero(3)), expected);
}

TEST(DaObjective, SeparableOneDimensionalHasOnlyRegularizers) {
    DaProblem p;
    p.source_x = (Matrix(2, 1) << -1.0, 1.0).finished();
    p.source_y = {0, 1};
    p.target_x = (Matrix(2, 1) << -2.0, 2.0).finished();
    p.target_y = {0, 1};
    // theta_0 = -1, theta_1 = +1, b = 0: every margin is >= 1.
    const Matrix theta = (Matrix(1, 2) << -1.0, 1.0).finished();
    const double j = da_objective(p, Matrix::Identity(2, 2), theta, Vector::Zero(2));
    EXPECT_DOUBLE_EQ(j, 0.5 * 2.0 + 0.5 * 2.0);
    EXPECT_DOUBLE_EQ(da_objective(p, Matrix::Identity(2, 2), 0.0 * theta, Vector::Zero(2)),
                     1.0 + 2 * (1.0 * 2 + 10.0 * 2));
}

TEST(DaObjective, LinearInTargetWeight) {
    std::mt19937_64 rng(3);
    DaProblem p = clustered_problem(rng, 3, 2, 3, 2, Vector::Constant(2, 1.0));
    const Matrix w = Matrix::Identity(3, 3) + 0.1 * oracle::random_matrix(rng, 3, 3);
    const Matrix theta = oracle::random_matrix(rng, 2, 3);
    const Vector b = oracle::random_matrix(rng, 3, 1);
    DaProblem no_target = p;
    no_target.C_T = 0.0;
    const double base = da_objective(no_target, w, theta, b);
    const double j1 = da_objective(p, w, theta, b);
    DaProblem doubled = p;
    doubled.C_T *= 2.0;
    const double j2 = da_objective(doubled, w, theta, b);
    EXPECT_NEAR(j2 - base, 2.0 * (j1 - base), 1e-9);
}

TEST(DaSubgradient, MatchesFiniteDifferences) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 10; ++t) {
        const DaProblem p = clustered_problem(rng, 3, 3, 3, 1, Vector::Zero(3));
        Matrix w = Matrix::Identity(4, 4) + 0.3 * oracle::random_matrix(rng, 4, 4);
        w.row(3) << 0, 0, 0, 1;
        const Matrix theta = oracle::random_matrix(rng, 3, 3);
        const Vector b = oracle::random_matrix(rng, 3, 1);
        const Matrix g = da_w_subgradient(p, w, theta, b);
        const double h = 1e-6;
        Matrix fd = Matrix::Zero(4, 4);
        for (Index r = 0; r < 3; ++r)
            for (Index c = 0; c < 4; ++c) {
                Matrix wp = w, wm = w;
                wp(r, c) += h;
                wm(r, c) -= h;
                fd(r, c) = (da_w_objective(p, wp, theta, b) - da_w_objective(p, wm, theta, b)) / (2 * h);
            }
        EXPECT_LT((fd - g).norm() / std::max(1.0, g.norm()), 1e-4) << t;
        EXPECT_EQ(g.row(3).norm(), 0.0);
    }
}

TEST(DaHyperplaneStep, MatchesWeightedQpOracle) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 10; ++t) {
        DaProblem p = clustered_problem(rng, 2, 2, 4, 2, Vector::Constant(2, 0.7), 0.8, 1.0);
        p.C_S = 0.5 + t * 0.3;
        p.C_T = 2.0;
        Matrix w = Matrix::Identity(3, 3) + 0.2 * oracle::random_matrix(rng, 3, 3);
        w.row(2) << 0, 0, 1;
        Matrix theta;
        Vector bias;
        const auto classes = p.class_ids();
        detail::solve_hyperplanes(p, w, classes, SvmOptions{1e-8, 0}, theta, bias);

        Matrix pts(12, 2);
        pts << transform_source_rows(w, p.source_x), p.target_x;
        const Matrix k = pts * pts.transpose();
        Vector upper(12);
        upper << Vector::Constant(8, p.C_S), Vector::Constant(4, p.C_T);
        for (std::size_t c = 0; c < classes.size(); ++c) {
            Vector y(12);
            for (Index i = 0; i < 8; ++i) y(i) = delta(p.source_y[static_cast<std::size_t>(i)], classes[c]);
            for (Index i = 0; i < 4; ++i) y(8 + i) = delta(p.target_y[static_cast<std::size_t>(i)], classes[c]);
            const Vector ref = oracle::svm_dual_projected_gradient(k, y, upper);
            const double dual = oracle::dual_value(k, y, ref);
            double primal = 0.5 * theta.col(static_cast<Index>(c)).squaredNorm();
            for (Index i = 0; i < 12; ++i)
                primal += upper(i) *
                          std::max(0.0, 1.0 - y(i) * (pts.row(i).dot(theta.col(static_cast<Index>(c))) +
                                                      bias(static_cast<Index>(c))));
            EXPECT_NEAR(primal, dual, 1e-4) << t << " class " << c;
        }
    }
}

TEST(TrainTransform, ObjectiveNonIncreasingOnSeededProblems) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const int k = 2 + static_cast<int>(seed % 3);
        const Index d = 2 + static_cast<Index>(seed % 3);
        Vector shift = oracle::random_matrix(rng, d, 1, 1.5);
        DaProblem p = clustered_problem(rng, k, d, 5, 2, shift, 0.5);
        p.C_S = 0.5 + 0.25 * static_cast<double>(seed % 4);
        const DaTransform t = train_transform(p);
        ASSERT_GE(t.objective_trace.size(), 2u);
        for (std::size_t i = 1; i < t.objective_trace.size(); ++i)
            EXPECT_LE(t.objective_trace[i], t.objective_trace[i - 1] + 1e-8) << seed;
        EXPECT_NEAR(t.objective_trace.back(), da_objective(p, t), 1e-9);
        EXPECT_TRUE(t.W.allFinite());
        EXPECT_EQ(t.W.row(d), (Vector::Unit(d + 1, d)).transpose());
    }
}

TEST(TrainTransform, TranslationShiftIsFullyAdapted) {
    std::mt19937_64 rng(42);
    const Vector shift = (Vector(2) << 6.0, -4.0).finished();
    const DaProblem p = clustered_problem(rng, 2, 2, 10, 3, shift, 0.3, 3.0);
    const DaTransform t = train_transform(p);
    EXPECT_EQ(accuracy(classify(p.target_x, t), p.target_y), 1.0);
    EXPECT_EQ(accuracy(classify(transform_source_rows(t.W, p.source_x), t), p.source_y), 1.0);
}

TEST(TrainTransform, NoShiftMatchesPlainSvm) {
    std::mt19937_64 rng(43);
    DaProblem p = clustered_problem(rng, 2, 2, 10, 0, Vector::Zero(2), 1.0, 1.0);
    p.target_x = p.source_x;
    p.target_y = p.source_y;
    p.C_S = p.C_T = 1.0;
    const DaTransform t = train_transform(p);
    const double da_acc = accuracy(classify(transform_source_rows(t.W, p.source_x), t), p.source_y);

    const Matrix k = p.source_x * p.source_x.transpose();
    const MulticlassSvmModel plain = train_one_vs_rest(k, p.source_y, 1.0);
    const double svm_acc = accuracy(plain.predict(k), p.source_y);
    EXPECT_LE(std::abs(da_acc - svm_acc), 1.0 / 20.0 + 1e-12);
}

TEST(TrainTransform, ZeroSweepsReturnsInitialization) {
    std::mt19937_64 rng(44);
    const DaProblem p = clustered_problem(rng, 3, 2, 4, 1, Vector::Zero(2));
    DaOptions opt;
    opt.sweeps = 0;
    const DaTransform t = train_transform(p, opt);
    EXPECT_EQ(t.W, Matrix::Identity(3, 3));
    EXPECT_EQ(t.objective_trace.size(), 1u);
    EXPECT_EQ(t.theta.cols(), 3);
}

TEST(TrainTransform, ZeroSourceWeightIgnoresSourceOrder) {
    std::mt19937_64 rng(45);
    DaProblem p = clustered_problem(rng, 2, 2, 6, 3, Vector::Constant(2, 1.0));
    p.C_S = 0.0;
    const DaTransform a = train_transform(p);
    DaProblem q = p;
    std::vector<Index> perm(static_cast<std::size_t>(p.source_x.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        q.source_x.row(static_cast<Index>(i)) = p.source_x.row(perm[i]);
        q.source_y[i] = p.source_y[static_cast<std::size_t>(perm[i])];
    }
    const DaTransform b = train_transform(q);
    EXPECT_LT((a.theta - b.theta).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((a.bias - b.bias).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(TrainTransform, EmptyTargetWarns) {
    std::mt19937_64 rng(46);
    DaProblem p = clustered_problem(rng, 2, 2, 5, 0, Vector::Zero(2));
    const DaTransform t = train_transform(p);
    ASSERT_FALSE(t.warnings.empty());
    EXPECT_NE(t.warnings[0].find("empty target"), std::string::npos);
}

TEST(TrainTransform, Errors) {
    std::mt19937_64 rng(47);
    DaProblem p = clustered_problem(rng, 2, 2, 3, 1, Vector::Zero(2));
    DaProblem bad = p;
    bad.target_y[0] = 9;
    EXPECT_THROW(train_transform(bad), InputError);
    bad = p;
    bad.C_S = -1.0;
    EXPECT_THROW(train_transform(bad), ParameterError);
    bad = p;
    bad.source_y.assign(bad.source_y.size(), 0);
    bad.target_y.assign(bad.target_y.size(), 0);
    EXPECT_THROW(train_transform(bad), InputError);
    bad = p;
    bad.target_x.resize(bad.target_x.rows(), 3);
    EXPECT_THROW(train_transform(bad), InputError);
}
