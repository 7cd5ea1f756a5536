#include "mfkc/image_io.hpp"
#include "mfkc/preprocess.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace mfkc;

namespace {

ImageMatrix random_image(std::mt19937_64& rng, Index h, Index w) {
    std::uniform_real_distribution<double> u(0.0, 255.0);
    Matrix m(h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) m(y, x) = u(rng);
    return ImageMatrix(m);
}

}  // namespace

TEST(ImageMatrix, RejectsEmptyAndNonFinite) {
    EXPECT_THROW(ImageMatrix(Matrix(0, 3)), InputError);
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = std::nan("");
    EXPECT_THROW(ImageMatrix{m}, InputError);
}

TEST(GaussianDegrade, ConstantImageIsInvariant) {
    const ImageMatrix img(12, 9, 100.0);
    const ImageMatrix out = gaussian_degrade(img, 1.75);
    EXPECT_LT((out.pixels().array() - 100.0).abs().maxCoeff(), 1e-6);
}

TEST(GaussianDegrade, ImpulseGivesNormalizedGaussian) {
    ImageMatrix img(9, 9, 0.0);
    img(4, 4) = 1.0;
    const double sigma = 1.0;
    const ImageMatrix out = gaussian_degrade(img, sigma);
    // Closed-form kernel over the 3-sigma window, L1-normalized.
    const int r = 3;
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) sum += std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    for (int y = 0; y < 9; ++y) {
        for (int x = 0; x < 9; ++x) {
            const int dy = y - 4, dx = x - 4;
            const double expected = (std::abs(dy) <= r && std::abs(dx) <= r)
                                        ? std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) / sum
                                        : 0.0;
            EXPECT_NEAR(out(y, x), expected, 1e-12) << y << "," << x;
        }
    }
}

TEST(GaussianDegrade, Errors) {
    const ImageMatrix img(4, 4, 1.0);
    EXPECT_THROW(gaussian_degrade(img, 0.0), ParameterError);
    EXPECT_THROW(gaussian_degrade(img, -1.0), ParameterError);
    EXPECT_THROW(gaussian_degrade(ImageMatrix{}, 1.0), InputError);
}

TEST(GaussianDegrade, PreservesMeanWithConstantBorder) {
    std::mt19937_64 rng(11);
    ImageMatrix img = random_image(rng, 32, 32);
    for (Index i = 0; i < 32; ++i)
        for (Index b = 0; b < 6; ++b) {
            img(b, i) = img(31 - b, i) = img(i, b) = img(i, 31 - b) = 80.0;
        }
    const ImageMatrix out = gaussian_degrade(img, 1.75);
    const double m0 = img.pixels().mean();
    const double m1 = out.pixels().mean();
    EXPECT_LT(std::abs(m1 - m0) / m0, 1e-3);
}

TEST(GammaStretch, IdentityAtGammaOneIsBitExact) {
    std::mt19937_64 rng(3);
    const ImageMatrix img = random_image(rng, 7, 5);
    EXPECT_TRUE(gamma_stretch(img, 1.0) == img);
}

TEST(GammaStretch, EndpointsFixed) {
    Matrix m(1, 2);
    m << 0.0, 255.0;
    for (double g : {0.3, 1.0, 1.25, 1.75, 4.0}) {
        const ImageMatrix out = gamma_stretch(ImageMatrix(m), g);
        EXPECT_EQ(out(0, 0), 0.0);
        EXPECT_EQ(out(0, 1), 255.0);
    }
}

TEST(GammaStretch, MidpointMatchesScalarOracle) {
    // 255 * 0.5^(1/1.75) = 255 * 2^(-4/7); evaluated with long double.
    const long double expected = 255.0L * std::pow(2.0L, -4.0L / 7.0L);
    const ImageMatrix out = gamma_stretch(ImageMatrix(1, 1, 127.5), 1.75);
    EXPECT_NEAR(out(0, 0), static_cast<double>(expected), 1e-10);
}

TEST(GammaStretch, InverseRoundTripAndMonotone) {
    std::mt19937_64 rng(5);
    const ImageMatrix img = random_image(rng, 10, 10);
    for (double g : {0.5, 1.5, 1.75, 3.0}) {
        const ImageMatrix back = gamma_stretch(gamma_stretch(img, g), 1.0 / g);
        EXPECT_LT((back.pixels() - img.pixels()).cwiseAbs().maxCoeff(), 1e-6);
    }
    Matrix ramp(1, 256);
    for (int i = 0; i < 256; ++i) ramp(0, i) = i;
    const ImageMatrix out = gamma_stretch(ImageMatrix(ramp), 1.75);
    for (int i = 1; i < 256; ++i) EXPECT_GE(out(0, i), out(0, i - 1));
}

TEST(GammaStretch, Errors) {
    EXPECT_THROW(gamma_stretch(ImageMatrix(2, 2, 10.0), 0.0), ParameterError);
    EXPECT_THROW(gamma_stretch(ImageMatrix(2, 2, 300.0), 1.5), InputError);
    EXPECT_THROW(gamma_stretch(ImageMatrix(2, 2, -1.0), 1.5), InputError);
}

TEST(ResizeBicubic, ConstantAndIdentity) {
    const ImageMatrix c(10, 10, 42.0);
    const ImageMatrix big = resize_bicubic(c, {40, 40});
    EXPECT_EQ(big.height(), 40);
    EXPECT_EQ(big.width(), 40);
    EXPECT_LT((big.pixels().array() - 42.0).abs().maxCoeff(), 1e-6);

    std::mt19937_64 rng(9);
    const ImageMatrix img = random_image(rng, 13, 8);
    const ImageMatrix same = resize_bicubic(img, {13, 8});
    EXPECT_LT((same.pixels() - img.pixels()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_THROW(resize_bicubic(img, {0, 4}), ParameterError);
}

TEST(ResizeBicubic, CheckerboardMatchesDirectKernelSum) {
    Matrix m(2, 2);
    m << 0.0, 255.0, 255.0, 0.0;
    const ImageMatrix img(m);
    const ImageMatrix out = resize_bicubic(img, {8, 8});
    // Independent per-pixel evaluation: sum over all source pixels (with
    // clamped extension) of W(dx) W(dy) I, Keys a = -0.5.
    auto w = [](double t) {
        const double a = -0.5;
        t = std::abs(t);
        if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
        if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
        return 0.0;
    };
    for (int oy = 0; oy < 8; ++oy) {
        for (int ox = 0; ox < 8; ++ox) {
            const double sy = (oy + 0.5) / 4.0 - 0.5;
            const double sx = (ox + 0.5) / 4.0 - 0.5;
            double acc = 0.0;
            for (int iy = -3; iy <= 4; ++iy)
                for (int ix = -3; ix <= 4; ++ix)
                    acc += w(sy - iy) * w(sx - ix) * m(std::clamp(iy, 0, 1), std::clamp(ix, 0, 1));
            EXPECT_NEAR(out(oy, ox), acc, 1e-9) << oy << "," << ox;
        }
    }
}

TEST(Preprocess, Deterministic) {
    std::mt19937_64 rng(1);
    const ImageMatrix img = random_image(rng, 20, 17);
    const PreprocessParams p{1.75, 1.75, {24, 24}};
    EXPECT_TRUE(preprocess_gallery(img, p) == preprocess_gallery(img, p));
    EXPECT_TRUE(preprocess_probe(img, p) == preprocess_probe(img, p));
}

TEST(ImageIo, PngAndPgmRoundTripQuantized) {
    std::mt19937_64 rng(2);
    Matrix m(6, 5);
    std::uniform_int_distribution<int> u(0, 255);
    for (Index y = 0; y < 6; ++y)
        for (Index x = 0; x < 5; ++x) m(y, x) = u(rng);
    const ImageMatrix img(m);
    const auto dir = std::filesystem::temp_directory_path() / "mfkc_io_test";
    std::filesystem::create_directories(dir);
    write_image(img, dir / "a.png");
    write_image(img, dir / "a.pgm");
    EXPECT_TRUE(read_image(dir / "a.png") == img);
    EXPECT_TRUE(read_image(dir / "a.pgm") == img);
}

TEST(ImageIo, ColorPpmUsesBt601Luma) {
    const auto path = std::filesystem::temp_directory_path() / "mfkc_color.ppm";
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n1 1\n255\n";
        const unsigned char px[3] = {200, 100, 50};
        out.write(reinterpret_cast<const char*>(px), 3);
    }
    const ImageMatrix img = read_image(path);
    EXPECT_NEAR(img(0, 0), 0.299 * 200 + 0.587 * 100 + 0.114 * 50, 1e-12);
}
