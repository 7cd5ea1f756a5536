// Holistic face descriptors and the precomputed-feature CSV format.
//
// Natively computed: Eigenfaces (PCA), Fisherfaces (PCA + LDA), Weberfaces,
// uniform LBP(8,1) histograms and Gabor magnitude responses. BOW, FV-SIFT
// and VLAD-SIFT come from external tools through load_precomputed().

#pragma once

#include "mfkc/core.hpp"
#include "mfkc/preprocess.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mfkc {

inline constexpr std::array<std::string_view, 8> kFeatureTags = {
    "eigenfaces", "fisherfaces", "weberfaces", "lbp", "gabor", "bow", "fv_sift", "vlad_sift"};

/// Tags computed from images by this library; the rest are ingestion-only.
inline bool is_native_feature_tag(std::string_view tag) {
    return tag == "eigenfaces" || tag == "fisherfaces" || tag == "weberfaces" || tag == "lbp" || tag == "gabor";
}

/// One of the eight bank tags, or "custom:<name>" for any other external
/// descriptor (the synthetic generator uses these).
inline bool is_known_feature_tag(std::string_view tag) {
    if (std::find(kFeatureTags.begin(), kFeatureTags.end(), tag) != kFeatureTags.end()) return true;
    constexpr std::string_view prefix = "custom:";
    if (tag.size() <= prefix.size() || tag.substr(0, prefix.size()) != prefix) return false;
    return std::all_of(tag.begin() + static_cast<std::ptrdiff_t>(prefix.size()), tag.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    });
}

struct FeatureSet {
    Matrix vectors;           // N x d, one row per sample
    std::vector<int> labels;  // class ids, length N
    std::string tag;

    [[nodiscard]] Index size() const noexcept { return vectors.rows(); }
    [[nodiscard]] Index dim() const noexcept { return vectors.cols(); }

    void validate() const {
        if (vectors.rows() < 1 || vectors.cols() < 1) throw InputError("feature set '" + tag + "' is empty");
        if (static_cast<Index>(labels.size()) != vectors.rows())
            throw InputError("feature set '" + tag + "': label count does not match row count");
        for (Index r = 0; r < vectors.rows(); ++r) {
            for (Index c = 0; c < vectors.cols(); ++c) {
                if (!std::isfinite(vectors(r, c)))
                    throw InputError("feature set '" + tag + "': non-finite value at row " + std::to_string(r) +
                                     ", column " + std::to_string(c));
            }
        }
        for (int l : labels)
            if (l < 0) throw InputError("feature set '" + tag + "': negative class label");
    }
};

/// Distinct class ids in ascending order.
inline std::vector<int> distinct_labels(const std::vector<int>& labels) {
    std::set<int> s(labels.begin(), labels.end());
    return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------
// Subspace projections

enum class ProjectorKind { pca, lda };

struct SubspaceProjector {
    Vector mean;   // length D
    Matrix basis;  // D x d, orthonormal columns
    ProjectorKind kind = ProjectorKind::pca;
    Vector eigenvalues;  // per retained direction; scatter ratio for lda

    [[nodiscard]] Matrix project(const Matrix& rows) const {
        if (rows.cols() != mean.size()) throw InputError("projector: input dimension mismatch");
        return (rows.rowwise() - mean.transpose()) * basis;
    }

    /// basis * basis^T on centered data, mapped back to input space.
    [[nodiscard]] Matrix reconstruct(const Matrix& rows) const {
        return (project(rows) * basis.transpose()).rowwise() + mean.transpose();
    }

    [[nodiscard]] FeatureSet apply(const FeatureSet& in, std::string tag) const {
        return FeatureSet{project(in.vectors), in.labels, std::move(tag)};
    }
};

namespace detail {

// Principal axes of mean-centered rows, descending variance. Uses the N x N
// Gram trick when D > N.
inline std::pair<Matrix, Vector> principal_axes(const Matrix& centered, Index dim) {
    const Index n = centered.rows();
    const Index d = centered.cols();
    Matrix axes;
    Vector values;
    if (d <= n) {
        const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
        Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
        axes = es.eigenvectors().rowwise().reverse().leftCols(dim);
        values = es.eigenvalues().reverse().head(dim);
    } else {
        const Matrix gram = (centered * centered.transpose()) / static_cast<double>(n - 1);
        Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
        const Matrix u = es.eigenvectors().rowwise().reverse().leftCols(dim);
        values = es.eigenvalues().reverse().head(dim);
        axes = centered.transpose() * u;
        for (Index c = 0; c < dim; ++c) {
            const double norm = axes.col(c).norm();
            if (!(norm > 0.0)) throw DegenerateDataError("principal_axes: direction with zero variance requested");
            axes.col(c) /= norm;
        }
    }
    canonicalize_signs(axes);
    return {axes, values};
}

inline double total_variance(const Matrix& centered) {
    return centered.squaredNorm() / static_cast<double>(std::max<Index>(centered.rows() - 1, 1));
}

}  // namespace detail

/// PCA on the training rows.
inline SubspaceProjector fit_eigenfaces(const FeatureSet& train, Index dim) {
    train.validate();
    const Index n = train.size();
    const Index d = train.dim();
    if (dim < 1 || dim > std::min(n - 1, d))
        throw ParameterError("fit_eigenfaces: dim must be in [1, min(N-1, D)] = [1, " +
                             std::to_string(std::min(n - 1, d)) + "], got " + std::to_string(dim));
    SubspaceProjector proj;
    proj.kind = ProjectorKind::pca;
    proj.mean = train.vectors.colwise().mean().transpose();
    const Matrix centered = train.vectors.rowwise() - proj.mean.transpose();
    const double var = detail::total_variance(centered);
    if (!(var > 0.0)) throw DegenerateDataError("fit_eigenfaces: training data has zero variance");
    auto [axes, values] = detail::principal_axes(centered, dim);
    if (values(dim - 1) <= 1e-12 * var)
        throw DegenerateDataError("fit_eigenfaces: requested dim exceeds the numerical rank of the data");
    proj.basis = std::move(axes);
    proj.eigenvalues = std::move(values);
    return proj;
}

/// Fisherfaces: PCA to at most N - C dimensions, then LDA to dim <= C - 1.
/// The within-class scatter gets a ridge of 1e-6 trace / D. LDA directions
/// are orthonormalized in order (Gram-Schmidt), which keeps the subspaces
/// nested and the leading direction unchanged.
inline SubspaceProjector fit_fisherfaces(const FeatureSet& train, Index dim) {
    train.validate();
    const auto classes = distinct_labels(train.labels);
    const auto n_classes = static_cast<Index>(classes.size());
    if (n_classes < 2) throw ParameterError("fit_fisherfaces: at least two classes are required");
    if (dim < 1 || dim > n_classes - 1)
        throw ParameterError("fit_fisherfaces: dim must be in [1, C-1] = [1, " + std::to_string(n_classes - 1) +
                             "], got " + std::to_string(dim));
    const Index n = train.size();
    const Index d = train.dim();

    const Vector mean = train.vectors.colwise().mean().transpose();
    const Matrix centered = train.vectors.rowwise() - mean.transpose();
    const double var = detail::total_variance(centered);
    if (!(var > 0.0)) throw DegenerateDataError("fit_fisherfaces: training data has zero variance");

    // PCA stage, keeping only numerically non-zero directions.
    Index pca_dim = std::min({n - n_classes, d, n - 1});
    pca_dim = std::max<Index>(pca_dim, 1);
    auto [pca_axes, pca_vals] = detail::principal_axes(centered, pca_dim);
    Index kept = 0;
    while (kept < pca_dim && pca_vals(kept) > 1e-12 * var) ++kept;
    if (kept < 1) throw DegenerateDataError("fit_fisherfaces: no variance after PCA");
    const Matrix pca_basis = pca_axes.leftCols(kept);
    const Matrix z = centered * pca_basis;  // N x kept, zero mean

    Matrix sw = Matrix::Zero(kept, kept);
    Matrix sb = Matrix::Zero(kept, kept);
    for (int cls : classes) {
        std::vector<Index> idx;
        for (Index i = 0; i < n; ++i)
            if (train.labels[static_cast<std::size_t>(i)] == cls) idx.push_back(i);
        Vector mu = Vector::Zero(kept);
        for (Index i : idx) mu += z.row(i).transpose();
        mu /= static_cast<double>(idx.size());
        for (Index i : idx) {
            const Vector diff = z.row(i).transpose() - mu;
            sw += diff * diff.transpose();
        }
        sb += static_cast<double>(idx.size()) * mu * mu.transpose();
    }
    sw += (1e-6 * sw.trace() / static_cast<double>(kept) + 1e-300) * Matrix::Identity(kept, kept);

    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(sb, sw);
    if (ges.info() != Eigen::Success) throw DegenerateDataError("fit_fisherfaces: generalized eigensolver failed");
    const Index out_dim = std::min(dim, kept);
    Matrix lda = ges.eigenvectors().rowwise().reverse().leftCols(out_dim);
    Vector ratios = ges.eigenvalues().reverse().head(out_dim);

    Matrix basis = pca_basis * lda;
    for (Index c = 0; c < basis.cols(); ++c) {
        for (Index p = 0; p < c; ++p) basis.col(c) -= basis.col(p).dot(basis.col(c)) * basis.col(p);
        const double norm = basis.col(c).norm();
        if (!(norm > 1e-12)) throw DegenerateDataError("fit_fisherfaces: discriminant directions are dependent");
        basis.col(c) /= norm;
    }
    canonicalize_signs(basis);

    SubspaceProjector proj;
    proj.kind = ProjectorKind::lda;
    proj.mean = mean;
    proj.basis = std::move(basis);
    proj.eigenvalues = std::move(ratios);
    return proj;
}

/// Row-major flattening of an image into a feature row.
inline Vector flatten(const ImageMatrix& img) {
    Vector v(img.height() * img.width());
    for (Index y = 0; y < img.height(); ++y)
        for (Index x = 0; x < img.width(); ++x) v(y * img.width() + x) = img(y, x);
    return v;
}

// ---------------------------------------------------------------------------
// Local binary patterns

namespace detail {

// Clockwise from top-left; index i + 4 is the point reflection of index i.
inline constexpr std::array<std::pair<int, int>, 8> kLbpOffsets = {
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}}};

inline int circular_transitions(unsigned code) {
    int t = 0;
    for (int i = 0; i < 8; ++i) t += ((code >> i) & 1U) != ((code >> ((i + 1) % 8)) & 1U);
    return t;
}

// code -> bin; the 58 uniform codes in ascending order, everything else 58.
inline const std::array<int, 256>& uniform_lbp_table() {
    static const std::array<int, 256> table = [] {
        std::array<int, 256> t{};
        int next = 0;
        for (unsigned code = 0; code < 256; ++code) t[code] = circular_transitions(code) <= 2 ? next++ : -1;
        for (auto& v : t)
            if (v < 0) v = next;
        return t;
    }();
    return table;
}

}  // namespace detail

inline constexpr int kLbpBins = 59;

/// LBP(8,1) code of an interior pixel: bit i set iff neighbor i >= center.
inline unsigned lbp_code(const ImageMatrix& img, Index y, Index x) {
    const double center = img(y, x);
    unsigned code = 0;
    for (int i = 0; i < 8; ++i) {
        const auto [dy, dx] = detail::kLbpOffsets[static_cast<std::size_t>(i)];
        if (img(y + dy, x + dx) >= center) code |= 1U << i;
    }
    return code;
}

inline int lbp_uniform_bin(unsigned code) {
    return detail::uniform_lbp_table()[code & 0xFFU];
}

struct GridSize {
    Index rows = 1;
    Index cols = 1;
};

/// Uniform LBP(8,1) histograms over a rows x cols grid, each cell
/// L1-normalized, concatenated row-major. Only interior pixels are coded.
inline Vector lbp_histogram(const ImageMatrix& img, GridSize grid) {
    if (grid.rows < 1 || grid.cols < 1) throw ParameterError("lbp_histogram: grid must be at least 1x1");
    if (img.height() < 3 * grid.rows || img.width() < 3 * grid.cols)
        throw ParameterError("lbp_histogram: grid cells must be at least 3x3 pixels");
    Vector out = Vector::Zero(kLbpBins * grid.rows * grid.cols);
    for (Index gr = 0; gr < grid.rows; ++gr) {
        const Index y0 = std::max<Index>(gr * img.height() / grid.rows, 1);
        const Index y1 = std::min<Index>((gr + 1) * img.height() / grid.rows, img.height() - 1);
        for (Index gc = 0; gc < grid.cols; ++gc) {
            const Index x0 = std::max<Index>(gc * img.width() / grid.cols, 1);
            const Index x1 = std::min<Index>((gc + 1) * img.width() / grid.cols, img.width() - 1);
            auto cell = out.segment((gr * grid.cols + gc) * kLbpBins, kLbpBins);
            double count = 0.0;
            for (Index y = y0; y < y1; ++y) {
                for (Index x = x0; x < x1; ++x) {
                    cell(lbp_uniform_bin(lbp_code(img, y, x))) += 1.0;
                    count += 1.0;
                }
            }
            cell /= count;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gabor filter bank

struct GaborParams {
    int scales = 5;
    int orientations = 8;
    int downsample = 4;
    double k_max = std::numbers::pi / 2.0;
    double spacing = std::numbers::sqrt2;  // f: ratio between successive scales
    double sigma = 2.0 * std::numbers::pi;
    double max_radius = 24.0;  // spatial support cap, pixels
};

/// Complex Gabor kernel for (scale, orientation), made exactly DC-free by
/// subtracting the envelope-weighted mean.
class GaborKernel {
public:
    GaborKernel(int scale, int orientation, const GaborParams& p) {
        const double k = p.k_max / std::pow(p.spacing, scale);
        const double phi = std::numbers::pi * orientation / p.orientations;
        kx_ = k * std::cos(phi);
        ky_ = k * std::sin(phi);
        const double envelope_std = p.sigma / k;
        radius_ = static_cast<int>(std::min(std::ceil(3.0 * envelope_std), p.max_radius));
        const int side = 2 * radius_ + 1;
        taps_.resize(static_cast<std::size_t>(side * side));
        std::vector<double> env(taps_.size());
        std::complex<double> sum{0.0, 0.0};
        double env_sum = 0.0;
        const double k2 = k * k;
        const double s2 = p.sigma * p.sigma;
        for (int dy = -radius_; dy <= radius_; ++dy) {
            for (int dx = -radius_; dx <= radius_; ++dx) {
                const auto idx = static_cast<std::size_t>((dy + radius_) * side + dx + radius_);
                const double r2 = static_cast<double>(dx * dx + dy * dy);
                env[idx] = (k2 / s2) * std::exp(-k2 * r2 / (2.0 * s2));
                const double phase = kx_ * dx + ky_ * dy;
                taps_[idx] = env[idx] * std::complex<double>(std::cos(phase), std::sin(phase));
                sum += taps_[idx];
                env_sum += env[idx];
            }
        }
        const std::complex<double> dc = sum / env_sum;
        for (std::size_t i = 0; i < taps_.size(); ++i) taps_[i] -= dc * env[i];
    }

    [[nodiscard]] int radius() const noexcept { return radius_; }
    [[nodiscard]] double kx() const noexcept { return kx_; }
    [[nodiscard]] double ky() const noexcept { return ky_; }

    /// taps(dy, dx) for dy, dx in [-radius, radius].
    [[nodiscard]] std::complex<double> tap(int dy, int dx) const {
        const int side = 2 * radius_ + 1;
        return taps_[static_cast<std::size_t>((dy + radius_) * side + dx + radius_)];
    }

    /// |sum_{dy,dx} taps(dy,dx) * img(y - dy, x - dx)| with edge replication.
    [[nodiscard]] double magnitude_at(const ImageMatrix& img, Index y, Index x) const {
        std::complex<double> acc{0.0, 0.0};
        for (int dy = -radius_; dy <= radius_; ++dy)
            for (int dx = -radius_; dx <= radius_; ++dx) acc += tap(dy, dx) * img.clamped(y - dy, x - dx);
        return std::abs(acc);
    }

private:
    int radius_ = 0;
    double kx_ = 0.0;
    double ky_ = 0.0;
    std::vector<std::complex<double>> taps_;
};

/// Gabor magnitude responses sampled every `downsample` pixels, concatenated
/// scale-major then orientation, then L2-normalized. Images with (near) zero
/// response energy are returned unnormalized.
inline Vector gabor_features(const ImageMatrix& img, const GaborParams& params = {}) {
    if (params.scales < 1 || params.orientations < 1)
        throw ParameterError("gabor_features: scales and orientations must be >= 1");
    if (params.downsample < 1) throw ParameterError("gabor_features: downsample must be >= 1");
    if (params.downsample > img.height() || params.downsample > img.width())
        throw ParameterError("gabor_features: downsample factor larger than the image");
    const Index oh = (img.height() + params.downsample - 1) / params.downsample;
    const Index ow = (img.width() + params.downsample - 1) / params.downsample;
    Vector out(static_cast<Index>(params.scales) * params.orientations * oh * ow);
    Index pos = 0;
    for (int s = 0; s < params.scales; ++s) {
        for (int o = 0; o < params.orientations; ++o) {
            const GaborKernel kernel(s, o, params);
            for (Index y = 0; y < img.height(); y += params.downsample)
                for (Index x = 0; x < img.width(); x += params.downsample) out(pos++) = kernel.magnitude_at(img, y, x);
        }
    }
    const double norm = out.norm();
    if (norm > 1e-8) out /= norm;
    return out;
}

// ---------------------------------------------------------------------------
// Weberfaces

struct WeberParams {
    double alpha = 4.0;
    double epsilon = 0.01;
};

/// Differential excitation arctan(alpha * sum_i (I_c - I_i) / (I_c + eps))
/// over the 8-neighborhood, edge-replicated, flattened row-major.
inline Vector weberface(const ImageMatrix& img, const WeberParams& params = {}) {
    if (img.pixels().minCoeff() < 0.0) throw InputError("weberface: pixel values must be non-negative");
    Vector out(img.height() * img.width());
    for (Index y = 0; y < img.height(); ++y) {
        for (Index x = 0; x < img.width(); ++x) {
            const double c = img(y, x);
            double sum = 0.0;
            for (const auto& [dy, dx] : detail::kLbpOffsets) sum += c - img.clamped(y + dy, x + dx);
            out(y * img.width() + x) = std::atan(params.alpha * sum / (c + params.epsilon));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Precomputed-feature CSV
//
//   # feature_tag=<tag> dim=<d>
//   v_1,...,v_d,label
//
// Values are written with 17 significant digits so a round trip is exact.

inline std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

inline void export_precomputed(const FeatureSet& fs, const std::filesystem::path& path) {
    fs.validate();
    std::ofstream out(path);
    if (!out) throw InputError("cannot write feature file " + path.string());
    out << "# feature_tag=" << fs.tag << " dim=" << fs.dim() << "\n";
    for (Index r = 0; r < fs.size(); ++r) {
        for (Index c = 0; c < fs.dim(); ++c) out << format_double(fs.vectors(r, c)) << ',';
        out << fs.labels[static_cast<std::size_t>(r)] << '\n';
    }
    if (!out) throw InputError("failed writing feature file " + path.string());
}

namespace detail {

inline double parse_double_field(std::string_view field, Index row, Index col) {
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front()))) field.remove_prefix(1);
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
    const std::string s(field);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
        throw InputError("feature file: unparsable value '" + s + "' at row " + std::to_string(row) + ", column " +
                         std::to_string(col));
    if (!std::isfinite(v))
        throw InputError("feature file: non-finite value at row " + std::to_string(row) + ", column " +
                         std::to_string(col));
    return v;
}

}  // namespace detail

/// Loads a precomputed-feature CSV. `expected_tag` must be a known tag and
/// match the header; `expected_rows` (when >= 0) is the manifest's sample
/// count for this split.
inline FeatureSet load_precomputed(const std::filesystem::path& path, const std::string& expected_tag,
                                   Index expected_rows = -1) {
    if (!is_known_feature_tag(expected_tag)) throw InputError("unknown feature tag '" + expected_tag + "'");
    std::ifstream in(path);
    if (!in) throw InputError("cannot open feature file " + path.string());
    std::string header;
    std::getline(in, header);
    std::string tag;
    long dim = -1;
    {
        std::istringstream hs(header);
        std::string tok;
        hs >> tok;
        if (tok != "#") throw InputError(path.string() + ": missing '# feature_tag=<tag> dim=<d>' header");
        while (hs >> tok) {
            if (tok.rfind("feature_tag=", 0) == 0) tag = tok.substr(12);
            else if (tok.rfind("dim=", 0) == 0) dim = std::strtol(tok.c_str() + 4, nullptr, 10);
        }
    }
    if (!is_known_feature_tag(tag)) throw InputError(path.string() + ": unknown feature tag '" + tag + "'");
    if (tag != expected_tag)
        throw InputError(path.string() + ": feature tag '" + tag + "' does not match expected '" + expected_tag + "'");
    if (dim < 1) throw InputError(path.string() + ": header dim must be >= 1");

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    Index row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (static_cast<long>(fields.size()) != dim + 1)
            throw InputError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                             " fields, expected " + std::to_string(dim + 1));
        std::vector<double> values(static_cast<std::size_t>(dim));
        for (long c = 0; c < dim; ++c) values[static_cast<std::size_t>(c)] = detail::parse_double_field(fields[c], row, c);
        const double lab = detail::parse_double_field(fields.back(), row, dim);
        if (lab != std::floor(lab) || lab < 0)
            throw InputError(path.string() + ": label at row " + std::to_string(row) + " is not a non-negative integer");
        rows.push_back(std::move(values));
        labels.push_back(static_cast<int>(lab));
        ++row;
    }
    if (rows.empty()) throw InputError(path.string() + ": no feature rows");
    if (expected_rows >= 0 && static_cast<Index>(rows.size()) != expected_rows)
        throw InputError(path.string() + ": has " + std::to_string(rows.size()) + " rows but the manifest lists " +
                         std::to_string(expected_rows) + " samples");
    FeatureSet fs;
    fs.tag = tag;
    fs.labels = std::move(labels);
    fs.vectors.resize(static_cast<Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (long c = 0; c < dim; ++c) fs.vectors(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    return fs;
}

}  // namespace mfkc
