// Seeded synthetic gallery/probe data with a controlled domain shift.
//
// Each class has a latent center mu_k in R^L. A sample draws u = mu_k +
// spread * eps, and view v observes x_v = P_v u + view_noise_v * eta, with a
// fixed random projection P_v per view. Probe views are then shifted:
// x_v' = A_v x_v + t_v + noise * xi, A_v = I + shift_linear * R_v and
// |t_v| = shift_translation. Optionally every sample is also rendered as a
// small blob "face" image; probes are rendered at half resolution, shifted in
// brightness and passed through an inverse contrast warp.

#pragma once

#include "mfkc/core.hpp"
#include "mfkc/features.hpp"
#include "mfkc/image_io.hpp"
#include "mfkc/manifest.hpp"
#include "mfkc/preprocess.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace mfkc {

struct SyntheticParams {
    int classes = 10;
    int gallery_per_class = 20;
    int probe_per_class = 10;
    int latent_dim = 8;
    int views = 3;
    int view_dim = 16;
    double class_scale = 1.0;  // spread of the class centers
    double spread = 0.3;       // within-class latent spread
    std::vector<double> view_noise{0.3, 0.3, 0.3};
    double shift_linear = 0.5;
    double shift_translation = 8.0;
    double noise = 0.1;
    bool render_images = false;
    Index image_size = 32;
    double contrast_warp = 1.5;  // probe pixels become 255 (p / 255)^warp
    double probe_brightness = 20.0;

    void validate() const {
        if (classes < 2) throw ParameterError("synthetic: at least two classes are required");
        if (gallery_per_class < 1 || probe_per_class < 1) throw ParameterError("synthetic: per-class counts must be >= 1");
        if (latent_dim < 1 || views < 1 || view_dim < 1) throw ParameterError("synthetic: dimensions must be >= 1");
        if (static_cast<int>(view_noise.size()) != views)
            throw ParameterError("synthetic: view_noise needs one entry per view");
        for (double v : view_noise)
            if (!(v >= 0.0)) throw ParameterError("synthetic: view noise must be non-negative");
        if (!(class_scale > 0.0) || !(spread >= 0.0) || !(noise >= 0.0) || !(shift_linear >= 0.0) ||
            !(shift_translation >= 0.0))
            throw ParameterError("synthetic: scales must be non-negative (class_scale positive)");
        if (render_images && (image_size < 8 || latent_dim < 8))
            throw ParameterError("synthetic: rendering needs image_size >= 8 and latent_dim >= 8");
        if (!(contrast_warp > 0.0)) throw ParameterError("synthetic: contrast_warp must be positive");
    }
};

struct SyntheticDataset {
    std::vector<FeatureSet> gallery;  // one per view, tag "custom:view<v>"
    std::vector<FeatureSet> probe;
    std::vector<ImageMatrix> gallery_images;
    std::vector<ImageMatrix> probe_images;
};

namespace detail {

inline Matrix gaussian_matrix(std::mt19937_64& rng, Index r, Index c, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) m(i, j) = n(rng);
    return m;
}

// Four Gaussian blobs (eyes, nose, mouth) on an oval; the latent vector moves
// the blobs and sets their strength.
inline ImageMatrix render_face(const Vector& u, Index size, double brightness) {
    const double s = static_cast<double>(size);
    const double cy[4] = {0.38, 0.38, 0.58, 0.75};
    const double cx[4] = {0.32, 0.68, 0.50, 0.50};
    Matrix img(size, size);
    for (Index y = 0; y < size; ++y) {
        for (Index x = 0; x < size; ++x) {
            const double fy = (static_cast<double>(y) + 0.5) / s - 0.5;
            const double fx = (static_cast<double>(x) + 0.5) / s - 0.5;
            const double oval = std::exp(-(fy * fy / 0.12 + fx * fx / 0.08) * 4.0);
            double v = 40.0 + 110.0 * oval;
            for (int b = 0; b < 4; ++b) {
                const double by = cy[b] + 0.06 * std::tanh(u(4 + b)) - 0.5;
                const double bx = cx[b] + 0.06 * std::tanh(u((5 + b) % u.size())) - 0.5;
                const double d2 = (fy - by) * (fy - by) + (fx - bx) * (fx - bx);
                v -= (50.0 + 30.0 * std::tanh(u(b))) * std::exp(-d2 / (2.0 * 0.004));
            }
            img(y, x) = std::clamp(v + brightness, 0.0, 255.0);
        }
    }
    return ImageMatrix(std::move(img));
}

}  // namespace detail

inline SyntheticDataset generate_synthetic(const SyntheticParams& p, std::uint64_t seed) {
    p.validate();
    std::mt19937_64 rng(seed);
    const Index L = p.latent_dim;
    const Matrix centers = detail::gaussian_matrix(rng, p.classes, L, p.class_scale);
    std::vector<Matrix> proj, shift_a;
    std::vector<Vector> shift_t;
    for (int v = 0; v < p.views; ++v) {
        proj.push_back(detail::gaussian_matrix(rng, p.view_dim, L, 1.0 / std::sqrt(static_cast<double>(L))));
        shift_a.push_back(Matrix::Identity(p.view_dim, p.view_dim) +
                          detail::gaussian_matrix(rng, p.view_dim, p.view_dim,
                                                  p.shift_linear / std::sqrt(static_cast<double>(p.view_dim))));
        Vector t = detail::gaussian_matrix(rng, p.view_dim, 1, 1.0).col(0);
        t *= p.shift_translation / std::max(t.norm(), 1e-12);
        shift_t.push_back(t);
    }

    SyntheticDataset ds;
    auto make = [&](int per_class, bool probe, std::vector<FeatureSet>& out, std::vector<ImageMatrix>& images) {
        const Index n = static_cast<Index>(p.classes) * per_class;
        for (int v = 0; v < p.views; ++v) {
            out.push_back({Matrix(n, p.view_dim), {}, "custom:view" + std::to_string(v)});
            out.back().labels.reserve(static_cast<std::size_t>(n));
        }
        std::normal_distribution<double> g(0.0, 1.0);
        Index row = 0;
        for (int i = 0; i < per_class; ++i) {
            for (int k = 0; k < p.classes; ++k, ++row) {
                Vector u = centers.row(k).transpose();
                for (Index l = 0; l < L; ++l) u(l) += p.spread * g(rng);
                for (int v = 0; v < p.views; ++v) {
                    Vector x = proj[static_cast<std::size_t>(v)] * u;
                    for (Index d = 0; d < x.size(); ++d) x(d) += p.view_noise[static_cast<std::size_t>(v)] * g(rng);
                    if (probe) {
                        x = shift_a[static_cast<std::size_t>(v)] * x + shift_t[static_cast<std::size_t>(v)];
                        for (Index d = 0; d < x.size(); ++d) x(d) += p.noise * g(rng);
                    }
                    out[static_cast<std::size_t>(v)].vectors.row(row) = x.transpose();
                    out[static_cast<std::size_t>(v)].labels.push_back(k);
                }
                if (p.render_images) {
                    if (!probe) {
                        images.push_back(detail::render_face(u, p.image_size, 0.0));
                    } else {
                        const ImageMatrix hi = detail::render_face(u, p.image_size, p.probe_brightness);
                        const ImageMatrix lo = resize_bicubic(hi, {p.image_size / 2, p.image_size / 2});
                        Matrix warped = lo.pixels().cwiseMax(0.0).cwiseMin(255.0);
                        for (Index y = 0; y < warped.rows(); ++y)
                            for (Index x = 0; x < warped.cols(); ++x)
                                warped(y, x) = 255.0 * std::pow(warped(y, x) / 255.0, p.contrast_warp);
                        images.emplace_back(std::move(warped));
                    }
                }
            }
        }
    };
    make(p.gallery_per_class, false, ds.gallery, ds.gallery_images);
    make(p.probe_per_class, true, ds.probe, ds.probe_images);
    return ds;
}

/// File-name-safe form of a feature tag ("custom:view0" -> "custom_view0").
inline std::string tag_file_stem(const std::string& tag) {
    std::string s = tag;
    for (char& c : s)
        if (c == ':') c = '_';
    return s;
}

/// Writes feature CSVs (and images, when rendered) plus manifest.txt into
/// `dir`; returns the manifest path.
inline std::filesystem::path write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir,
                                             const std::string& profile = "synthetic") {
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    m.profile = profile;
    for (std::size_t v = 0; v < ds.gallery.size(); ++v) {
        const std::string stem = tag_file_stem(ds.gallery[v].tag);
        FeatureFiles ff{dir / (stem + "_gallery.csv"), dir / (stem + "_probe.csv")};
        export_precomputed(ds.gallery[v], ff.gallery);
        export_precomputed(ds.probe[v], ff.probe);
        m.feature_files[ds.gallery[v].tag] = ff;
    }
    if (!ds.gallery_images.empty()) {
        std::filesystem::create_directories(dir / "images");
        const auto& gl = ds.gallery.front().labels;
        const auto& pl = ds.probe.front().labels;
        for (std::size_t i = 0; i < ds.gallery_images.size(); ++i) {
            const auto path = dir / "images" / ("gallery_" + std::to_string(i) + ".pgm");
            write_pgm(ds.gallery_images[i], path);
            m.gallery.push_back({path.string(), gl[i], 1});
        }
        for (std::size_t i = 0; i < ds.probe_images.size(); ++i) {
            const auto path = dir / "images" / ("probe_" + std::to_string(i) + ".pgm");
            write_pgm(ds.probe_images[i], path);
            m.probe.push_back({path.string(), pl[i], 1});
        }
    }
    const auto path = dir / "manifest.txt";
    write_manifest(m, path);
    return path;
}

}  // namespace mfkc
