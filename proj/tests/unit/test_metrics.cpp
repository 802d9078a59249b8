#include <gtest/gtest.h>

#include "cdasr/metrics/domain_gap.hpp"
#include "cdasr/metrics/quality.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace cdasr;
using namespace cdasr::fixtures;

namespace {

std::vector<SemanticEmbedding> random_unit_set(std::size_t n, int dim, std::uint64_t seed, double shift = 0.0)
{
    Rng rng(seed);
    std::vector<SemanticEmbedding> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(dim);
        for (auto& x : v)
            x = rng.normal() + shift;
        out.push_back({normalize_embedding<double>(v).unit, "test"});
    }
    return out;
}

SemanticEmbedding basis(int dim, int k)
{
    SemanticEmbedding e{std::vector<double>(dim, 0.0), "test"};
    e.values[k] = 1.0;
    return e;
}

Image<double> inverted(const Image<double>& img)
{
    Image<double> out = img;
    for (auto& v : out.pixels.data)
        v = 1.0 - v;
    return out;
}

} // namespace

TEST(Psnr, KnownValueAndCap)
{
    const Image<double> a(3, 8, 8, 0.0), b(3, 8, 8, 0.5);
    EXPECT_NEAR(psnr(a, b), 10.0 * std::log10(4.0), 1e-12);
    EXPECT_NEAR(psnr(a, b), 6.0206, 1e-4);
    EXPECT_EQ(psnr(a, a), psnr_cap_db);
}

TEST(Psnr, MatchesDirectFormulaOnRandomPairs)
{
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto a = random_image<double>(3, 8, 8, 2 * s), b = random_image<double>(3, 8, 8, 2 * s + 1);
        EXPECT_NEAR(psnr(a, b), oracle::psnr_rgb(a.pixels, b.pixels), 1e-9);
    }
}

TEST(Psnr, LumaProtocolCropsBorder)
{
    auto a = random_image<double>(3, 20, 20, 1);
    auto b = a;
    // Differences confined to the 4-pixel border are invisible under a crop of 4.
    for (int c = 0; c < 3; ++c)
        for (int x = 0; x < 20; ++x)
            b.at(c, 0, x) = 1.0 - b.at(c, 0, x);
    EXPECT_EQ(psnr(a, b, EvalProtocol::y_cropped(4)), psnr_cap_db);
    EXPECT_LT(psnr(a, b, EvalProtocol::rgb()), 40.0);
    EXPECT_THROW(psnr(Image<double>(3, 8, 8), Image<double>(3, 8, 8), EvalProtocol::y_cropped(4)), invalid_input);
}

TEST(Ssim, IdentityAndConstantClosedForm)
{
    const auto x = random_image<double>(3, 24, 24, 5);
    EXPECT_NEAR(ssim(x, x), 1.0, 1e-9);
    for (auto [p, q] : {std::pair{0.2, 0.7}, {0.5, 0.5}, {0.0, 1.0}, {0.9, 0.3}}) {
        const Image<double> a(1, 16, 16, p), b(1, 16, 16, q);
        EXPECT_NEAR(ssim(a, b), oracle::ssim_constant(p, q), 1e-6) << p << " " << q;
    }
}

TEST(Ssim, InvertedTextureScoresLow)
{
    const auto img = synthetic_scene<double>(48, 48, 2);
    EXPECT_LT(ssim(img, inverted(img)), 0.5);
    EXPECT_GT(ssim(img, img), 0.999);
}

TEST(Ssim, RejectsSmallOrMismatchedImages)
{
    EXPECT_THROW(ssim(Image<double>(1, 8, 8), Image<double>(1, 8, 8)), invalid_input);
    EXPECT_THROW(ssim(Image<double>(1, 16, 16), Image<double>(1, 16, 17)), invalid_input);
}

TEST(Evaluate, FreshNetworkScoresLikeBicubic)
{
    std::vector<Image<float>> imgs;
    for (int i = 0; i < 3; ++i)
        imgs.push_back(synthetic_scene<float>(48, 40, i));
    const auto ds = make_paired_dataset(imgs, 2);
    const auto cfg = small_config(2);
    const auto p = init_network<float>(cfg, 0);
    const Encoder<float> enc(EncoderSpec::stub(16));
    for (const auto protocol : {EvalProtocol::y_cropped(2), EvalProtocol::rgb()}) {
        const auto net = evaluate(p, cfg, ds, protocol, enc);
        const auto bic = evaluate_bicubic(ds, protocol);
        EXPECT_EQ(net.n_images, 3);
        EXPECT_EQ(net.psnr_db, bic.psnr_db);
        EXPECT_EQ(net.ssim, bic.ssim);
        double mean = 0;
        for (const auto& s : net.per_image)
            mean += s.psnr_db / 3;
        EXPECT_NEAR(mean, net.psnr_db, 1e-12);
    }
    EXPECT_THROW(evaluate_bicubic(PairedDataset{}, EvalProtocol::rgb()), empty_dataset_error);
}

TEST(Mmd, MatchesNaiveDoubleSum)
{
    Rng sizes(1);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const std::size_t m = 1 + sizes.index(200), n = 1 + sizes.index(200);
        const auto a = random_unit_set(m, 12, 100 + s), b = random_unit_set(n, 12, 200 + s, 0.3);
        EXPECT_NEAR(mmd_squared(a, b), oracle::mmd_squared_linear(a, b), 1e-9) << m << "x" << n;
    }
}

TEST(Mmd, SelfDistanceAndSingletons)
{
    const auto a = random_unit_set(40, 8, 3);
    EXPECT_LE(mmd(a, a), 1e-9);
    EXPECT_LE(mmd(a, a, Kernel::rbf()), 1e-9);
    EXPECT_NEAR(mmd({basis(4, 0)}, {basis(4, 1)}), std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(mmd({basis(4, 0)}, {basis(4, 0)}), 0.0, 1e-12);
}

TEST(Mmd, SeparatesShiftedSetsAndIsSymmetric)
{
    const auto a = random_unit_set(60, 8, 1), b = random_unit_set(60, 8, 2, 1.0), c = random_unit_set(60, 8, 3);
    EXPECT_GT(mmd(a, b), mmd(a, c));
    EXPECT_GT(mmd(a, b, Kernel::rbf()), mmd(a, c, Kernel::rbf()));
    EXPECT_NEAR(mmd_squared(a, b), mmd_squared(b, a), 1e-12);
    EXPECT_THROW(mmd({}, a), invalid_input);
    EXPECT_THROW(mmd(a, random_unit_set(3, 9, 1)), invalid_input);
}

TEST(Mmd, RbfKernelMatrix)
{
    Eigen::MatrixXd x(2, 2);
    x << 0, 0, 3, 4;
    const auto k = kernel_matrix(x, x, Kernel::rbf(5.0));
    EXPECT_DOUBLE_EQ(k(0, 0), 1.0);
    EXPECT_NEAR(k(0, 1), std::exp(-25.0 / 50.0), 1e-15);
}

TEST(Tsne, DeterministicPerSeed)
{
    const auto a = random_unit_set(50, 10, 1), b = random_unit_set(50, 10, 2, 1.0);
    Eigen::MatrixXd x(100, 10);
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 10; ++j)
            x(i, j) = (i < 50 ? a[i] : b[i - 50]).values[j];
    TsneOptions opt;
    opt.iterations = 300;
    opt.seed = 4;
    const auto y1 = tsne_2d(x, opt), y2 = tsne_2d(x, opt);
    EXPECT_EQ(y1, y2);
    ASSERT_EQ(y1.rows(), 100);
    EXPECT_TRUE(y1.allFinite());
    opt.seed = 5;
    EXPECT_NE(tsne_2d(x, opt), y1);
}

TEST(DomainGap, CopiesHaveNoGapAndShiftedSetsDo)
{
    const auto a = random_unit_set(12, 8, 1);
    const auto shifted = random_unit_set(12, 8, 2, 1.0);
    const auto r = domain_gap_report({{"a", a, {}}, {"copy", a, {}}, {"shifted", shifted, {}}}, 0);
    ASSERT_EQ(r.mmd_matrix.size(), 3u);
    EXPECT_LT(r.mmd_matrix[0][1], 1e-6);
    EXPECT_GT(r.mmd_matrix[0][2], 0.1);
    EXPECT_EQ(r.mmd_matrix[0][2], r.mmd_matrix[2][0]);
    EXPECT_EQ(r.coords.size(), 36u);
    // 36 points cannot support perplexity 30.
    EXPECT_TRUE(r.fallback);
    EXPECT_EQ(r.reduction, "pca");
    EXPECT_THROW(domain_gap_report({{"empty", {}, {}}}, 0), empty_dataset_error);
}

TEST(DomainGap, ExportFromDirectories)
{
    const auto set5 = data_dir() / "set5";
    const auto r = export_embeddings_2d<float>({{"set5", set5}, {"again", set5}}, EncoderSpec::stub(64), 0);
    EXPECT_EQ(r.counts, (std::vector<int>{5, 5}));
    EXPECT_LT(r.mmd(), 1e-6);
    EXPECT_EQ(r.coords.front().source, "astronaut.png");
}
