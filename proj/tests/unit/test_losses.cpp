#include <gtest/gtest.h>

#include "cdasr/loss/losses.hpp"
#include "support/test_support.hpp"

using namespace cdasr;
using namespace cdasr::fixtures;

namespace {

Image<double> pattern(int size, bool second)
{
    Image<double> img(3, size, size);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                img.at(c, y, x) = second ? 0.5 + 0.4 * std::cos(0.25 * x - 0.35 * (y + 1) * (c + 1))
                                         : 0.5 + 0.4 * std::sin(0.3 * (x + 1) * (c + 1) + 0.2 * y);
    return img;
}

struct Ctx {
    Encoder<double> enc{EncoderSpec::stub(64)};
    FeatureExtractor<double> fx;
    LossContext<double> ctx() const { return {&enc, &fx}; }
};

} // namespace

TEST(Losses, ConstantImageArithmetic)
{
    Ctx c;
    const Image<double> a(3, 16, 16, 0.5), b(3, 16, 16, 0.25);
    EXPECT_DOUBLE_EQ(l1_loss(a, b), 0.25);
    // Every pooled cell differs by 0.25, at each of the three grids.
    EXPECT_NEAR(perceptual_loss(a, b, c.fx), 3 * 0.0625, 1e-15);
    const auto r = total_loss(a, b, LossWeights{2.0, 1.0, 0.0}, c.ctx());
    EXPECT_NEAR(r.total, 2 * 0.25 + 0.1875, 1e-15);
}

TEST(Losses, PinnedValuesForFixedPair)
{
    const auto& g = golden()["losses"];
    const Encoder<double> enc(EncoderSpec::stub(g["semantic_embed_dim"]));
    const FeatureExtractor<double> fx;
    const auto a = pattern(g["size"], false), b = pattern(g["size"], true);
    EXPECT_NEAR(perceptual_loss(a, b, fx), g["perceptual_pooled"].get<double>(), 1e-12);
    EXPECT_NEAR(semantic_loss(a, b, enc), g["semantic_stub"].get<double>(), 1e-12);
}

TEST(Losses, IdenticalInputsGiveZero)
{
    Ctx c;
    for (const LossWeights w : {LossWeights{1, 0, 0}, LossWeights{1, 0.1, 0}, LossWeights{1, 0, 0.01},
                                LossWeights{1, 0.1, 0.01}}) {
        const auto x = random_image<double>(3, 24, 24, 1);
        const auto r = total_loss(x, x, w, c.ctx());
        EXPECT_LE(std::abs(r.total), 1e-10);
    }
}

TEST(Losses, PixelOnlyWeightsReduceToL1)
{
    Ctx c;
    const auto a = random_image<double>(3, 16, 12, 1), b = random_image<double>(3, 16, 12, 2);
    double direct = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        direct += std::abs(a.pixels.data[i] - b.pixels.data[i]);
    direct /= static_cast<double>(a.pixels.size());
    const auto r = total_loss(a, b, LossWeights{1, 0, 0}, c.ctx());
    EXPECT_EQ(r.total, l1_loss(a, b));
    EXPECT_NEAR(r.total, direct, 1e-15);
}

TEST(Losses, SemanticBoundedAndSymmetric)
{
    Ctx c;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto a = random_image<double>(3, 12, 12, 2 * s), b = random_image<double>(3, 12, 12, 2 * s + 1);
        const double ab = semantic_loss(a, b, c.enc);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 4.0);
        EXPECT_DOUBLE_EQ(ab, semantic_loss(b, a, c.enc));
    }
}

TEST(Losses, GradientWithRespectToPrediction)
{
    Ctx c;
    auto pred = random_image<double>(3, 16, 16, 3);
    const auto target = random_image<double>(3, 16, 16, 4);
    const LossWeights w{1.0, 0.5, 0.2};
    Tensor3<double> g;
    total_loss(pred, target, w, c.ctx(), &g);
    Rng rng(2);
    for (int k = 0; k < 20; ++k) {
        const std::size_t i = rng.index(pred.pixels.size());
        const double orig = pred.pixels.data[i], h = 1e-6;
        pred.pixels.data[i] = orig + h;
        const double lp = total_loss(pred, target, w, c.ctx()).total;
        pred.pixels.data[i] = orig - h;
        const double lm = total_loss(pred, target, w, c.ctx()).total;
        pred.pixels.data[i] = orig;
        EXPECT_LT(relative_error(g.data[i], (lp - lm) / (2 * h), 1e-7), 1e-5);
    }
}

TEST(Losses, RejectsBadInputs)
{
    Ctx c;
    const Image<double> a(3, 8, 8, 0.1), b(3, 8, 9, 0.1);
    EXPECT_THROW(total_loss(a, b, LossWeights{}, c.ctx()), invalid_input);
    EXPECT_THROW(total_loss(a, a, LossWeights{-1, 0, 0}, c.ctx()), invalid_input);
    EXPECT_THROW(total_loss(a, a, LossWeights{}, LossContext<double>{}), invalid_input);
}
