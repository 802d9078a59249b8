#include <gtest/gtest.h>

#include "cdasr/encoder/encoder.hpp"
#include "cdasr/loss/perceptual.hpp"
#include "cdasr/model/network.hpp"
#include "cdasr/train/trainer.hpp"
#include "support/test_support.hpp"

using namespace cdasr;
using namespace cdasr::fixtures;

namespace {

struct Checksum {
    double sum = 0, sum_sq = 0, weighted = 0;
};

Checksum checksum(const Tensor3<double>& t)
{
    Checksum c;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = t.data[i];
        c.sum += v;
        c.sum_sq += v * v;
        c.weighted += v * static_cast<double>((i + 1) % 7 + 1);
    }
    return c;
}

void expect_checksum(const Checksum& got, const nlohmann::json& want)
{
    EXPECT_NEAR(got.sum, want["sum"].get<double>(), 1e-9);
    EXPECT_NEAR(got.sum_sq, want["sum_sq"].get<double>(), 1e-9);
    EXPECT_NEAR(got.weighted, want["weighted"].get<double>(), 1e-9);
}

NetworkConfig golden_config()
{
    const auto& j = golden()["network"]["config"];
    NetworkConfig c;
    c.scale = j["scale"];
    c.channels = j["channels"];
    c.backbone_channels = j["backbone_channels"];
    c.backbone_blocks = j["backbone_blocks"];
    c.clip_dim = j["clip_dim"];
    c.mlp_hidden = j["mlp_hidden"];
    c.mlp_out = j["mlp_out"];
    c.recon_blocks_per_stage = j["recon_blocks_per_stage"];
    return c;
}

// Scalar count written from the layer list: conv k x k in->out has
// out*in*k*k + out values.
std::size_t count_by_hand(const NetworkConfig& c)
{
    auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; };
    const std::size_t C = c.backbone_channels, I = c.channels;
    std::size_t n = conv(I, C, 3) + 2 * c.backbone_blocks * conv(C, C, 3) + conv(C, C, 3);
    n += c.clip_dim * c.mlp_hidden + c.mlp_hidden + c.mlp_hidden * c.mlp_out + c.mlp_out;
    n += 2 * c.mlp_out + conv(c.mlp_out, C, 3) + conv(C, C, 3) + conv(2 * C, C, 1);
    int stages = 0;
    for (int s = c.scale; s > 1; s /= 2)
        ++stages;
    n += stages * (conv(C, 4 * C, 3) + conv(C, C, 3));
    if (c.scale >= 8)
        n += (stages - 1) * c.recon_blocks_per_stage * 2 * conv(C, C, 3);
    return n + conv(C, I, 3);
}

} // namespace

TEST(Network, OutputShapeIsScaleTimesInput)
{
    const Encoder<float> enc(EncoderSpec::stub(16));
    for (int scale : {2, 4, 8, 16}) {
        const auto cfg = small_config(scale);
        const auto p = init_network<float>(cfg, 1);
        for (auto [h, w] : {std::pair{8, 8}, {5, 11}, {1, 1}}) {
            const auto lr = random_image<float>(3, h, w, h * w);
            const auto out = forward(p, cfg, lr, enc.encode(lr));
            EXPECT_EQ(out.channels(), 3);
            EXPECT_EQ(out.height(), scale * h);
            EXPECT_EQ(out.width(), scale * w);
        }
    }
}

TEST(Network, FreshNetworkIsBicubicBitForBit)
{
    const Encoder<float> enc(EncoderSpec::stub(16));
    for (int scale : {2, 4, 8}) {
        const auto cfg = small_config(scale);
        const auto p = init_network<float>(cfg, 7);
        for (std::uint64_t s = 0; s < 3; ++s) {
            const auto lr = random_image<float>(3, 6, 7, s);
            EXPECT_EQ(forward(p, cfg, lr, enc.encode(lr)).pixels.data, bicubic_upsample(lr, scale).pixels.data);
        }
    }
}

TEST(Network, DefaultProcessorShapes)
{
    NetworkConfig cfg;
    const auto p = init_network<float>(cfg, 0);
    EXPECT_EQ(p.values.entry("align.mlp.fc1.weight").shape, (Shape{1024, 512}));
    EXPECT_EQ(p.values.entry("align.mlp.fc2.weight").shape, (Shape{512, 1024}));
    EXPECT_EQ(p.values.entry("align.spatial.conv1.weight").shape, (Shape{64, 512, 3, 3}));
    EXPECT_EQ(p.values.entry("align.fusion.weight").shape, (Shape{64, 128, 1, 1}));
    EXPECT_EQ(p.values.entry("align.norm.gain").shape, (Shape{512}));
}

TEST(Network, ParameterCensus)
{
    for (int scale : {2, 4, 8, 16}) {
        NetworkConfig cfg;
        cfg.scale = scale;
        const auto p = init_network<float>(cfg, 0);
        EXPECT_EQ(p.values.size(), expected_parameter_entries(cfg)) << scale;
        EXPECT_EQ(parameter_count(p), count_by_hand(cfg)) << scale;
        EXPECT_EQ(p.grads.numel(), parameter_count(p));
    }
    NetworkConfig x4, x8;
    x8.scale = 8;
    EXPECT_GT(parameter_count(init_network<float>(x8, 0)), parameter_count(init_network<float>(x4, 0)));
}

TEST(Network, ZeroInitializedLayers)
{
    const auto cfg = small_config(8);
    const auto p = init_network<double>(cfg, 3);
    for (const auto& e : p.values) {
        const bool should_be_zero = e.name.ends_with(".bias") || e.name.ends_with("conv2.weight")
                                    || e.name == "align.fusion.weight" || e.name == "recon.out.weight";
        const bool spatial_conv2 = e.name == "align.spatial.conv2.weight";
        const bool is_gain = e.name == "align.norm.gain";
        bool all_zero = true;
        for (double v : e.data)
            all_zero = all_zero && v == 0.0;
        if (is_gain)
            EXPECT_FALSE(all_zero);
        else if (should_be_zero && !spatial_conv2)
            EXPECT_TRUE(all_zero) << e.name;
        else
            EXPECT_FALSE(all_zero) << e.name;
    }
}

TEST(Network, InitIsSeededAndBounded)
{
    const auto cfg = small_config(2);
    EXPECT_EQ(init_network<float>(cfg, 5).values, init_network<float>(cfg, 5).values);
    EXPECT_NE(init_network<float>(cfg, 5).values, init_network<float>(cfg, 6).values);
    const auto p = init_network<double>(cfg, 5);
    const double bound = std::sqrt(6.0 / (cfg.backbone_channels * 9));
    for (double v : p.values["backbone.tail.weight"])
        EXPECT_LE(std::abs(v), bound);
}

TEST(Network, BackboneMatchesGolden)
{
    const auto& g = golden()["network"];
    const auto cfg = golden_config();
    const auto p = init_network<double>(cfg, g["seed"]);
    const int h = g["backbone_input"][0], w = g["backbone_input"][1];
    Tensor3<double> x(cfg.channels, h, w);
    for (int c = 0; c < cfg.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                x.at(c, y, xx) = 0.5 + 0.4 * std::sin(0.3 * (xx + 1) * (c + 1) + 0.2 * y);
    expect_checksum(checksum(backbone_forward(p, cfg, x)), g["backbone"]);
}

TEST(Network, SpatialGeneratorMatchesGolden)
{
    const auto& g = golden()["network"];
    const auto cfg = golden_config();
    const auto p = init_network<double>(cfg, g["seed"]);
    const auto f = g["f_proc"].get<std::vector<double>>();
    const auto out = spatial_feature_generator<double>(p, cfg, f, g["spatial_size"][0], g["spatial_size"][1]);
    EXPECT_EQ(out.channels, cfg.backbone_channels);
    expect_checksum(checksum(out), g["spatial"]);
}

TEST(Network, ProcessorIsNonNegative)
{
    const auto cfg = small_config(2);
    auto p = init_network<double>(cfg, 2);
    const Encoder<double> enc(EncoderSpec::stub(cfg.clip_dim));
    const auto e = enc.encode(random_image<double>(3, 16, 16, 1));
    const auto f = clip_feature_processor<double>(p, cfg, e.values);
    EXPECT_EQ(f.size(), static_cast<std::size_t>(cfg.mlp_out));
    for (double v : f)
        EXPECT_GE(v, 0.0);
}

TEST(Network, InputValidation)
{
    const auto cfg = small_config(2);
    const auto p = init_network<float>(cfg, 0);
    const std::vector<float> good(cfg.clip_dim, 0.1f), bad(cfg.clip_dim + 1, 0.1f);
    EXPECT_THROW(forward(p, cfg, random_image<float>(1, 4, 4, 0), std::span<const float>(good)), invalid_input);
    EXPECT_THROW(forward(p, cfg, random_image<float>(3, 4, 4, 0), std::span<const float>(bad)), invalid_input);
    NetworkConfig odd = cfg;
    odd.scale = 3;
    EXPECT_THROW(init_network<float>(odd, 0), invalid_input);
}

TEST(Network, SingleChannelNetwork)
{
    auto cfg = small_config(4);
    cfg.channels = 1;
    const auto p = init_network<float>(cfg, 0);
    const Encoder<float> enc(EncoderSpec::stub(16));
    const auto lr = random_image<float>(1, 5, 5, 0);
    EXPECT_EQ(forward(p, cfg, lr, enc.encode(lr)).pixels.data, bicubic_upsample(lr, 4).pixels.data);
}

TEST(Network, EmbeddingInfluencesOutputAfterTraining)
{
    const auto cfg = small_config(2);
    const Encoder<float> enc(EncoderSpec::stub(16));
    const auto ds = make_paired_dataset({synthetic_scene<float>(32, 32, 1), synthetic_scene<float>(32, 32, 2)}, 2);
    TrainConfig tc;
    tc.steps = 10;
    tc.batch_size = 2;
    tc.patch_size = 8;
    tc.learning_rate = 1e-3;
    const auto res = train(ds, tc, cfg, enc, FeatureExtractor<float>());
    const auto lr = random_image<float>(3, 8, 8, 3);
    const auto a = forward(res.params, cfg, lr, enc.encode(random_image<float>(3, 8, 8, 10)));
    const auto b = forward(res.params, cfg, lr, enc.encode(random_image<float>(3, 8, 8, 11)));
    double diff = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        diff += std::abs(a.pixels.data[i] - b.pixels.data[i]);
    EXPECT_GT(diff, 0.0);
}
