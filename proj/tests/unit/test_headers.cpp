#include <gtest/gtest.h>

#include "cdasr/cdasr.hpp"
#include "cdasr/core/archive.hpp"
#include "cdasr/data/dataset.hpp"
#include "cdasr/data/image_io.hpp"
#include "cdasr/loss/losses.hpp"
#include "cdasr/model/network.hpp"
#include "support/test_support.hpp"

using namespace cdasr;

template <class T>
void smoke()
{
    NetworkConfig cfg;
    cfg.scale = 8;
    cfg.backbone_channels = 8;
    cfg.backbone_blocks = 2;
    cfg.clip_dim = 16;
    cfg.mlp_hidden = 12;
    cfg.mlp_out = 10;
    auto p = init_network<T>(cfg, 1);
    Encoder<T> enc(EncoderSpec::stub(16));
    FeatureExtractor<T> fx;
    Image<T> lr(3, 8, 8, T(0.3));
    auto e = enc.encode(lr);
    ForwardTape<T> tape;
    auto out = forward(p, cfg, lr, e, &tape);
    Image<T> hr(3, 64, 64, T(0.5));
    Tensor3<T> g;
    auto r = total_loss(out, hr, LossWeights{}, LossContext<T>{&enc, &fx}, &g);
    backward(p, cfg, tape, g);
    EXPECT_EQ(out.height(), 64);
    EXPECT_TRUE(std::isfinite(r.total));
}

TEST(Headers, SmokeFloat) { smoke<float>(); }
TEST(Headers, SmokeDouble) { smoke<double>(); }

#include "cdasr/meta/meta_adapter.hpp"
#include "cdasr/metrics/domain_gap.hpp"
#include "cdasr/metrics/quality.hpp"
#include "cdasr/train/trainer.hpp"

TEST(Headers, InstantiateRest)
{
    using namespace cdasr;
    PairedDataset ds = make_paired_dataset(std::vector<Image<float>>{fixtures::synthetic_scene<float>(32, 32, 1),
                                                                     fixtures::synthetic_scene<float>(32, 32, 2)},
                                           2, "x");
    NetworkConfig cfg = fixtures::small_config(2);
    Encoder<float> enc(EncoderSpec::stub(16));
    FeatureExtractor<float> fx;
    TrainConfig tc;
    tc.steps = 2;
    tc.batch_size = 2;
    auto res = train(ds, tc, cfg, enc, fx);
    EXPECT_EQ(res.log.size(), 2u);
    AdaptConfig ac;
    ac.episodes = 1;
    ac.shots = 1;
    ac.query_size = 1;
    auto ad = adapt(res.params, cfg, ds, ac, enc, fx);
    auto rep = evaluate(ad.params, cfg, ds, EvalProtocol::y_cropped(2), enc);
    EXPECT_EQ(rep.n_images, 2);
    std::vector<TaggedEmbeddings> sets{{"a", {enc.encode(ds.pairs[0].hr)}, {}}, {"b", {enc.encode(ds.pairs[1].hr)}, {}}};
    auto gap = domain_gap_report(sets, 0);
    EXPECT_TRUE(gap.fallback);
}
