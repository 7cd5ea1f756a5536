// Scalar kernel formulas written loop by loop, independent of the Gram code.

#pragma once

#include "mfkc/kernels.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

namespace oracle {

using mfkc::Index;
using mfkc::KernelKind;
using mfkc::KernelSpec;

inline double scalar_kernel(const Vector& x, const Vector& y, const KernelSpec& s) {
    double dot = 0.0, sq = 0.0, chi = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        dot += x(i) * y(i);
        sq += (x(i) - y(i)) * (x(i) - y(i));
        if (x(i) + y(i) != 0.0) chi += (x(i) - y(i)) * (x(i) - y(i)) / (0.5 * (x(i) + y(i)));
    }
    const double sig2 = s.sigma ? *s.sigma * *s.sigma : 1.0;
    const double rbf = std::exp(-(s.rbf_squared_norm ? sq : std::sqrt(sq)) / (2.0 * sig2));
    switch (s.kind) {
        case KernelKind::linear: return dot + s.c;
        case KernelKind::polynomial: {
            double r = 1.0;
            for (int k = 0; k < s.degree; ++k) r *= s.alpha * dot + s.c;
            return r;
        }
        case KernelKind::gaussian: return std::exp(-sq / (2.0 * sig2));
        case KernelKind::rbf: return rbf;
        case KernelKind::chi_square: return 1.0 - chi;
        case KernelKind::rbf_chi_square: return 1.0 - chi + rbf;
    }
    return 0.0;
}

inline KernelSpec spec_for(KernelKind k) {
    KernelSpec s;
    s.kind = k;
    s.c = 0.5;
    s.alpha = 0.7;
    s.degree = 3;
    if (mfkc::uses_sigma(k)) s.sigma = 1.3;
    return s;
}

inline Matrix random_nonneg(std::mt19937_64& rng, Index r, Index c) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = u(rng);
    return m;
}

}  // namespace oracle
