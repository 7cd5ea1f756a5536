// Gallery degradation and probe enhancement.
//
// Gallery images are blurred with a Gaussian (sigma) so they resemble the
// softer surveillance probes; probes get a power-law contrast stretch
// (gamma). All work is in floating point; quantization to 8 bits happens only
// when an image is written to disk (see image_io.hpp).

#pragma once

#include "mfkc/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace mfkc {

/// Single-channel intensity image, nominal range [0, 255]. Row-major
/// semantics: pixels(y, x).
class ImageMatrix {
public:
    ImageMatrix() = default;

    explicit ImageMatrix(Matrix pixels) : pixels_(std::move(pixels)) { validate(); }

    ImageMatrix(Index height, Index width, double fill = 0.0) : pixels_(Matrix::Constant(height, width, fill)) {
        validate();
    }

    [[nodiscard]] Index height() const noexcept { return pixels_.rows(); }
    [[nodiscard]] Index width() const noexcept { return pixels_.cols(); }
    [[nodiscard]] bool empty() const noexcept { return pixels_.size() == 0; }

    [[nodiscard]] const Matrix& pixels() const noexcept { return pixels_; }
    [[nodiscard]] double operator()(Index y, Index x) const { return pixels_(y, x); }
    double& operator()(Index y, Index x) { return pixels_(y, x); }

    /// Edge-replicated access; coordinates outside the image clamp to the border.
    [[nodiscard]] double clamped(Index y, Index x) const {
        y = std::clamp<Index>(y, 0, height() - 1);
        x = std::clamp<Index>(x, 0, width() - 1);
        return pixels_(y, x);
    }

    bool operator==(const ImageMatrix& other) const {
        return pixels_.rows() == other.pixels_.rows() && pixels_.cols() == other.pixels_.cols() &&
               pixels_ == other.pixels_;
    }

private:
    void validate() const {
        if (pixels_.rows() < 1 || pixels_.cols() < 1) throw InputError("image must be at least 1x1");
        if (!pixels_.allFinite()) throw InputError("image contains non-finite pixel values");
    }

    Matrix pixels_;
};

struct ImageSize {
    Index height = 0;
    Index width = 0;
};

struct PreprocessParams {
    double sigma = 1.0;
    double gamma = 1.0;
    ImageSize target_size{32, 32};

    void validate() const {
        if (!(sigma > 0.0)) throw ParameterError("preprocess sigma must be positive");
        if (!(gamma > 0.0)) throw ParameterError("preprocess gamma must be positive");
        if (target_size.height < 1 || target_size.width < 1)
            throw ParameterError("preprocess target size must be at least 1x1");
    }
};

/// Discrete 1-D Gaussian taps over [-r, r], r = ceil(3 sigma), L1-normalized.
inline std::vector<double> gaussian_taps(double sigma) {
    if (!(sigma > 0.0)) throw ParameterError("gaussian sigma must be positive, got " + std::to_string(sigma));
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> taps(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        taps[i + radius] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        sum += taps[i + radius];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

/// Convolves with an L1-normalized 2-D Gaussian truncated at ceil(3 sigma),
/// border by edge replication. The 2-D kernel is separable, so this runs a
/// horizontal then a vertical pass.
inline ImageMatrix gaussian_degrade(const ImageMatrix& img, double sigma) {
    if (img.empty()) throw InputError("gaussian_degrade: empty image");
    const auto taps = gaussian_taps(sigma);
    const int radius = static_cast<int>(taps.size() / 2);
    const Index h = img.height();
    const Index w = img.width();

    Matrix horizontal(h, w);
    for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) acc += taps[k + radius] * img.clamped(y, x + k);
            horizontal(y, x) = acc;
        }
    }
    Matrix out(h, w);
    for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += taps[k + radius] * horizontal(std::clamp<Index>(y + k, 0, h - 1), x);
            out(y, x) = acc;
        }
    }
    return ImageMatrix(std::move(out));
}

/// Power-law contrast stretch: out = 255 (in / 255)^(1 / gamma). gamma > 1
/// brightens dark regions.
inline ImageMatrix gamma_stretch(const ImageMatrix& img, double gamma) {
    if (!(gamma > 0.0)) throw ParameterError("gamma_stretch: gamma must be positive, got " + std::to_string(gamma));
    if (img.empty()) throw InputError("gamma_stretch: empty image");
    const Matrix& p = img.pixels();
    if (p.minCoeff() < 0.0 || p.maxCoeff() > 255.0)
        throw InputError("gamma_stretch: pixel values must lie in [0, 255]");
    if (gamma == 1.0) return img;
    const double exponent = 1.0 / gamma;
    Matrix out = p.unaryExpr([exponent](double v) { return 255.0 * std::pow(v / 255.0, exponent); });
    return ImageMatrix(std::move(out));
}

namespace detail {

// Keys cubic convolution kernel, a = -0.5.
inline double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

struct CubicTaps {
    Index base = 0;  // index of the first of four source samples
    double weights[4] = {0, 0, 0, 0};
};

inline std::vector<CubicTaps> cubic_taps(Index src_len, Index dst_len) {
    std::vector<CubicTaps> taps(static_cast<std::size_t>(dst_len));
    const double scale = static_cast<double>(src_len) / static_cast<double>(dst_len);
    for (Index d = 0; d < dst_len; ++d) {
        const double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
        const double fl = std::floor(src);
        const double frac = src - fl;
        auto& t = taps[static_cast<std::size_t>(d)];
        t.base = static_cast<Index>(fl) - 1;
        for (int k = 0; k < 4; ++k) t.weights[k] = cubic_weight(frac - static_cast<double>(k - 1));
    }
    return taps;
}

}  // namespace detail

/// Bicubic (Keys, a = -0.5) resampling with pixel-center alignment and edge
/// replication.
inline ImageMatrix resize_bicubic(const ImageMatrix& img, ImageSize target) {
    if (target.height < 1 || target.width < 1) throw ParameterError("resize_bicubic: target dims must be >= 1");
    if (img.empty()) throw InputError("resize_bicubic: empty image");
    const auto ytaps = detail::cubic_taps(img.height(), target.height);
    const auto xtaps = detail::cubic_taps(img.width(), target.width);

    Matrix rows(img.height(), target.width);
    for (Index y = 0; y < img.height(); ++y) {
        for (Index x = 0; x < target.width; ++x) {
            const auto& t = xtaps[static_cast<std::size_t>(x)];
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += t.weights[k] * img.clamped(y, t.base + k);
            rows(y, x) = acc;
        }
    }
    Matrix out(target.height, target.width);
    for (Index y = 0; y < target.height; ++y) {
        const auto& t = ytaps[static_cast<std::size_t>(y)];
        for (Index x = 0; x < target.width; ++x) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k)
                acc += t.weights[k] * rows(std::clamp<Index>(t.base + k, 0, img.height() - 1), x);
            out(y, x) = acc;
        }
    }
    return ImageMatrix(std::move(out));
}

/// Gallery side: resize to the working size, then degrade.
inline ImageMatrix preprocess_gallery(const ImageMatrix& img, const PreprocessParams& params) {
    params.validate();
    return gaussian_degrade(resize_bicubic(img, params.target_size), params.sigma);
}

/// Probe side: resize (stand-in for face hallucination), clamp interpolation
/// overshoot back into range, then contrast-stretch.
inline ImageMatrix preprocess_probe(const ImageMatrix& img, const PreprocessParams& params) {
    params.validate();
    const ImageMatrix resized = resize_bicubic(img, params.target_size);
    Matrix clipped = resized.pixels().cwiseMax(0.0).cwiseMin(255.0);
    return gamma_stretch(ImageMatrix(std::move(clipped)), params.gamma);
}

}  // namespace mfkc
