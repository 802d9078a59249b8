#pragma once

// Super-resolution network: EDSR-style backbone, semantic alignment module
// and scale-aware pixel-shuffle reconstruction with a bicubic global
// residual. Each stage exposes a plain forward, a taped forward and a
// backward that accumulates into ParameterSet::grads.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdasr/core/array_set.hpp"
#include "cdasr/core/error.hpp"
#include "cdasr/core/random.hpp"
#include "cdasr/core/tensor.hpp"
#include "cdasr/data/image.hpp"
#include "cdasr/data/resample.hpp"
#include "cdasr/encoder/embedding.hpp"
#include "cdasr/model/config.hpp"
#include "cdasr/nn/layers.hpp"

namespace cdasr {

template <class T>
using FeatureMap = Tensor3<T>;

namespace names {
inline std::string backbone_block(int i, int conv) { return "backbone.blocks." + std::to_string(i) + ".conv" + std::to_string(conv); }
inline std::string recon_stage(int k, const char* part) { return "recon.stages." + std::to_string(k) + "." + part; }
inline std::string recon_block(int k, int j, int conv)
{
    return "recon.stages." + std::to_string(k) + ".blocks." + std::to_string(j) + ".conv" + std::to_string(conv);
}
} // namespace names

namespace detail {

template <class T>
std::span<const T> weight_of(const ParameterSet<T>& p, const std::string& layer)
{
    return p.values[layer + ".weight"];
}
template <class T>
std::span<const T> bias_of(const ParameterSet<T>& p, const std::string& layer)
{
    return p.values[layer + ".bias"];
}

template <class T>
FeatureMap<T> conv(const ParameterSet<T>& p, const std::string& layer, const nn::ConvShape& s, const FeatureMap<T>& x)
{
    return nn::conv2d<T>(x, s, weight_of(p, layer), bias_of(p, layer));
}

template <class T>
void conv_back(ParameterSet<T>& p, const std::string& layer, const nn::ConvShape& s, const FeatureMap<T>& x,
               const FeatureMap<T>& dy, FeatureMap<T>* dx)
{
    nn::conv2d_backward<T>(x, s, p.values[layer + ".weight"], dy, p.grads[layer + ".weight"], p.grads[layer + ".bias"],
                           dx);
}

struct LayerPlan {
    std::string name;
    Shape weight_shape;
    std::size_t fan_in;
    bool zero_init;
    bool is_norm = false;
};

inline std::vector<LayerPlan> layer_plan(const NetworkConfig& cfg)
{
    const auto C = static_cast<std::size_t>(cfg.backbone_channels);
    const auto I = static_cast<std::size_t>(cfg.channels);
    auto conv = [](std::string n, std::size_t out, std::size_t in, std::size_t k, bool zero) {
        return LayerPlan{std::move(n), {out, in, k, k}, in * k * k, zero};
    };
    std::vector<LayerPlan> plan;
    plan.push_back(conv("backbone.head", C, I, 3, false));
    for (int i = 0; i < cfg.backbone_blocks; ++i) {
        plan.push_back(conv(names::backbone_block(i, 1), C, C, 3, false));
        plan.push_back(conv(names::backbone_block(i, 2), C, C, 3, true));
    }
    plan.push_back(conv("backbone.tail", C, C, 3, false));
    const auto c = static_cast<std::size_t>(cfg.clip_dim), h = static_cast<std::size_t>(cfg.mlp_hidden),
               s = static_cast<std::size_t>(cfg.mlp_out);
    plan.push_back(LayerPlan{"align.mlp.fc1", {h, c}, c, false});
    plan.push_back(LayerPlan{"align.mlp.fc2", {s, h}, h, false});
    plan.push_back(LayerPlan{"align.norm", {s}, 0, false, true});
    plan.push_back(conv("align.spatial.conv1", C, s, 3, false));
    plan.push_back(conv("align.spatial.conv2", C, C, 3, false));
    plan.push_back(conv("align.fusion", C, 2 * C, 1, true));
    const int stages = cfg.upsample_stages();
    for (int k = 0; k < stages; ++k) {
        plan.push_back(conv(names::recon_stage(k, "expand"), 4 * C, C, 3, false));
        plan.push_back(conv(names::recon_stage(k, "refine"), C, C, 3, false));
        if (k + 1 < stages) {
            for (int j = 0; j < cfg.recon_gap_blocks(); ++j) {
                plan.push_back(conv(names::recon_block(k, j, 1), C, C, 3, false));
                plan.push_back(conv(names::recon_block(k, j, 2), C, C, 3, true));
            }
        }
    }
    plan.push_back(conv("recon.out", I, C, 3, true));
    return plan;
}

} // namespace detail

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases, and zeroed
// closing convolutions on every residual branch, the fusion conv and the
// output conv, so a fresh network computes exactly the bicubic upsample.
template <class T>
ParameterSet<T> init_network(const NetworkConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    Rng rng(mix_seed(seed, 0x696E6974ULL));
    ParameterSet<T> p;
    for (const auto& layer : detail::layer_plan(cfg)) {
        if (layer.is_norm) {
            auto& g = p.add(layer.name + ".gain", layer.weight_shape);
            std::fill(g.data.begin(), g.data.end(), T(1));
            p.add(layer.name + ".bias", layer.weight_shape);
            continue;
        }
        auto& w = p.add(layer.name + ".weight", layer.weight_shape);
        p.add(layer.name + ".bias", Shape{layer.weight_shape[0]});
        if (layer.zero_init)
            continue;
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.fan_in));
        for (auto& v : w.data)
            v = static_cast<T>(rng.uniform(-bound, bound));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Backbone

template <class T>
struct BackboneTape {
    FeatureMap<T> input;
    FeatureMap<T> head;
    std::vector<FeatureMap<T>> block_in;  // input of block i
    std::vector<FeatureMap<T>> block_mid; // ReLU(conv1) of block i
    FeatureMap<T> body;                   // input of tail
};

template <class T>
FeatureMap<T> backbone_forward(const ParameterSet<T>& p, const NetworkConfig& cfg, const Tensor3<T>& lr,
                               BackboneTape<T>* tape = nullptr)
{
    const int C = cfg.backbone_channels;
    const nn::ConvShape head_s{cfg.channels, C, 3}, body_s{C, C, 3};
    FeatureMap<T> head = detail::conv(p, "backbone.head", head_s, lr);
    FeatureMap<T> x = head;
    for (int i = 0; i < cfg.backbone_blocks; ++i) {
        FeatureMap<T> mid = detail::conv(p, names::backbone_block(i, 1), body_s, x);
        nn::relu_inplace(mid);
        FeatureMap<T> branch = detail::conv(p, names::backbone_block(i, 2), body_s, mid);
        if (tape) {
            tape->block_in.push_back(x);
            tape->block_mid.push_back(std::move(mid));
        }
        x += branch;
    }
    FeatureMap<T> out = detail::conv(p, "backbone.tail", body_s, x);
    out += head;
    if (tape) {
        tape->input = lr;
        tape->head = std::move(head);
        tape->body = std::move(x);
    }
    return out;
}

template <class T>
FeatureMap<T> backbone_forward(const ParameterSet<T>& p, const NetworkConfig& cfg, const Image<T>& lr)
{
    if (lr.height() < 8 || lr.width() < 8)
        throw invalid_input("backbone input must be at least 8x8");
    return backbone_forward(p, cfg, lr.pixels, static_cast<BackboneTape<T>*>(nullptr));
}

template <class T>
void backbone_backward(ParameterSet<T>& p, const NetworkConfig& cfg, const BackboneTape<T>& tape,
                       const FeatureMap<T>& d_out)
{
    const int C = cfg.backbone_channels;
    const nn::ConvShape head_s{cfg.channels, C, 3}, body_s{C, C, 3};
    FeatureMap<T> dx;
    detail::conv_back(p, "backbone.tail", body_s, tape.body, d_out, &dx);
    for (int i = cfg.backbone_blocks - 1; i >= 0; --i) {
        FeatureMap<T> d_mid;
        detail::conv_back(p, names::backbone_block(i, 2), body_s, tape.block_mid[i], dx, &d_mid);
        nn::relu_backward_inplace<T>(tape.block_mid[i].data, d_mid.data);
        FeatureMap<T> d_in;
        detail::conv_back(p, names::backbone_block(i, 1), body_s, tape.block_in[i], d_mid, &d_in);
        dx += d_in;
    }
    dx += d_out; // long skip
    detail::conv_back(p, "backbone.head", head_s, tape.input, dx, static_cast<FeatureMap<T>*>(nullptr));
}

// ---------------------------------------------------------------------------
// Alignment module

template <class T>
struct ProcessorTape {
    std::vector<T> embedding;
    std::vector<T> hidden; // ReLU(W1 e + b1)
    std::vector<T> out;    // ReLU(W2 hidden + b2)
};

// f_proc = ReLU(W2 ReLU(W1 e + b1) + b2)
template <class T>
std::vector<T> clip_feature_processor(const ParameterSet<T>& p, const NetworkConfig& cfg, std::span<const T> emb,
                                      ProcessorTape<T>* tape = nullptr)
{
    if (emb.size() != static_cast<std::size_t>(cfg.clip_dim))
        throw invalid_input("embedding has dimension " + std::to_string(emb.size()) + ", network expects "
                            + std::to_string(cfg.clip_dim));
    auto hidden = nn::linear<T>(emb, p.values["align.mlp.fc1.weight"], p.values["align.mlp.fc1.bias"], cfg.mlp_hidden);
    nn::relu_inplace(hidden);
    auto out = nn::linear<T>(hidden, p.values["align.mlp.fc2.weight"], p.values["align.mlp.fc2.bias"], cfg.mlp_out);
    nn::relu_inplace(out);
    if (tape) {
        tape->embedding.assign(emb.begin(), emb.end());
        tape->hidden = std::move(hidden);
        tape->out = out;
    }
    return out;
}

// Returns d(embedding); the caller usually discards it (the encoder is frozen).
template <class T>
std::vector<T> clip_feature_processor_backward(ParameterSet<T>& p, const ProcessorTape<T>& tape, std::vector<T> d_out)
{
    nn::relu_backward_inplace<T>(tape.out, d_out);
    auto d_hidden = nn::linear_backward<T>(tape.hidden, p.values["align.mlp.fc2.weight"], d_out,
                                           p.grads["align.mlp.fc2.weight"], p.grads["align.mlp.fc2.bias"]);
    nn::relu_backward_inplace<T>(tape.hidden, d_hidden);
    return nn::linear_backward<T>(tape.embedding, p.values["align.mlp.fc1.weight"], d_hidden,
                                  p.grads["align.mlp.fc1.weight"], p.grads["align.mlp.fc1.bias"]);
}

template <class T>
struct SpatialTape {
    std::vector<T> f_proc;
    nn::LayerNormCache<T> norm;
    std::vector<T> normed;
    FeatureMap<T> mid; // ReLU(Conv1(.))
};

// Layer-normalizes f_proc, broadcasts it over height x width, then
// Conv2(ReLU(Conv1(.))) with 3x3 kernels.
template <class T>
FeatureMap<T> spatial_feature_generator(const ParameterSet<T>& p, const NetworkConfig& cfg, std::span<const T> f_proc,
                                        int height, int width, SpatialTape<T>* tape = nullptr)
{
    if (f_proc.size() != static_cast<std::size_t>(cfg.mlp_out))
        throw invalid_input("spatial generator: f_proc has wrong dimension");
    const int C = cfg.backbone_channels;
    nn::LayerNormCache<T> cache;
    auto normed = nn::layer_norm<T>(f_proc, p.values["align.norm.gain"], p.values["align.norm.bias"], &cache);
    FeatureMap<T> mid = nn::broadcast_conv3x3<T>(normed, height, width, nn::ConvShape{cfg.mlp_out, C, 3},
                                                 p.values["align.spatial.conv1.weight"],
                                                 p.values["align.spatial.conv1.bias"]);
    nn::relu_inplace(mid);
    FeatureMap<T> out = detail::conv(p, "align.spatial.conv2", nn::ConvShape{C, C, 3}, mid);
    if (tape) {
        tape->f_proc.assign(f_proc.begin(), f_proc.end());
        tape->norm = std::move(cache);
        tape->normed = std::move(normed);
        tape->mid = std::move(mid);
    }
    return out;
}

template <class T>
std::vector<T> spatial_feature_generator_backward(ParameterSet<T>& p, const NetworkConfig& cfg,
                                                  const SpatialTape<T>& tape, const FeatureMap<T>& d_out)
{
    const int C = cfg.backbone_channels;
    FeatureMap<T> d_mid;
    detail::conv_back(p, "align.spatial.conv2", nn::ConvShape{C, C, 3}, tape.mid, d_out, &d_mid);
    nn::relu_backward_inplace<T>(tape.mid.data, d_mid.data);
    auto d_normed = nn::broadcast_conv3x3_backward<T>(tape.normed, nn::ConvShape{cfg.mlp_out, C, 3},
                                                      p.values["align.spatial.conv1.weight"], d_mid,
                                                      p.grads["align.spatial.conv1.weight"],
                                                      p.grads["align.spatial.conv1.bias"]);
    return nn::layer_norm_backward<T>(tape.norm, p.values["align.norm.gain"], d_normed, p.grads["align.norm.gain"],
                                      p.grads["align.norm.bias"]);
}

namespace detail {
template <class T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b)
{
    FeatureMap<T> out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return out;
}
} // namespace detail

// f_aligned = Conv_fusion([sr, spatial]) + sr, with a 1x1 fusion conv.
template <class T>
FeatureMap<T> fuse(const ParameterSet<T>& p, const NetworkConfig& cfg, const FeatureMap<T>& sr_feat,
                   const FeatureMap<T>& spatial_feat)
{
    if (sr_feat.height != spatial_feat.height || sr_feat.width != spatial_feat.width)
        throw invalid_input("fuse: spatial dims differ (" + shape_string(sr_feat) + " vs " + shape_string(spatial_feat)
                            + ")");
    if (sr_feat.channels != cfg.backbone_channels || spatial_feat.channels != cfg.backbone_channels)
        throw invalid_input("fuse: channel count mismatch");
    const int C = cfg.backbone_channels;
    FeatureMap<T> out = detail::conv(p, "align.fusion", nn::ConvShape{2 * C, C, 1},
                                     detail::concat_channels(sr_feat, spatial_feat));
    out += sr_feat;
    return out;
}

// Returns (d_sr, d_spatial).
template <class T>
std::pair<FeatureMap<T>, FeatureMap<T>> fuse_backward(ParameterSet<T>& p, const NetworkConfig& cfg,
                                                      const FeatureMap<T>& sr_feat, const FeatureMap<T>& spatial_feat,
                                                      const FeatureMap<T>& d_out)
{
    const int C = cfg.backbone_channels;
    FeatureMap<T> d_cat;
    detail::conv_back(p, "align.fusion", nn::ConvShape{2 * C, C, 1}, detail::concat_channels(sr_feat, spatial_feat),
                      d_out, &d_cat);
    FeatureMap<T> d_sr(C, d_out.height, d_out.width), d_sp(C, d_out.height, d_out.width);
    const auto half = static_cast<std::ptrdiff_t>(d_sr.data.size());
    std::copy(d_cat.data.begin(), d_cat.data.begin() + half, d_sr.data.begin());
    std::copy(d_cat.data.begin() + half, d_cat.data.end(), d_sp.data.begin());
    d_sr += d_out;
    return {std::move(d_sr), std::move(d_sp)};
}

// ---------------------------------------------------------------------------
// Reconstruction

template <class T>
struct ReconTape {
    std::vector<FeatureMap<T>> stage_in;
    std::vector<FeatureMap<T>> shuffled;
    std::vector<std::vector<FeatureMap<T>>> block_in;
    std::vector<std::vector<FeatureMap<T>>> block_mid;
    FeatureMap<T> final_in;
};

template <class T>
Image<T> reconstruct(const ParameterSet<T>& p, const NetworkConfig& cfg, const FeatureMap<T>& f_aligned,
                     const Image<T>& lr, ReconTape<T>* tape = nullptr)
{
    const int C = cfg.backbone_channels;
    const nn::ConvShape expand_s{C, 4 * C, 3}, body_s{C, C, 3}, out_s{C, cfg.channels, 3};
    const int stages = cfg.upsample_stages();
    FeatureMap<T> x = f_aligned;
    if (tape) {
        tape->block_in.resize(stages);
        tape->block_mid.resize(stages);
    }
    for (int k = 0; k < stages; ++k) {
        FeatureMap<T> e = detail::conv(p, names::recon_stage(k, "expand"), expand_s, x);
        FeatureMap<T> ps = nn::pixel_shuffle(e, 2);
        FeatureMap<T> y = detail::conv(p, names::recon_stage(k, "refine"), body_s, ps);
        if (tape) {
            tape->stage_in.push_back(std::move(x));
            tape->shuffled.push_back(std::move(ps));
        }
        x = std::move(y);
        if (k + 1 < stages) {
            for (int j = 0; j < cfg.recon_gap_blocks(); ++j) {
                FeatureMap<T> mid = detail::conv(p, names::recon_block(k, j, 1), body_s, x);
                nn::relu_inplace(mid);
                FeatureMap<T> branch = detail::conv(p, names::recon_block(k, j, 2), body_s, mid);
                if (tape) {
                    tape->block_in[k].push_back(x);
                    tape->block_mid[k].push_back(std::move(mid));
                }
                x += branch;
            }
        }
    }
    FeatureMap<T> residual = detail::conv(p, "recon.out", out_s, x);
    if (tape)
        tape->final_in = std::move(x);
    Tensor3<T> base = bicubic_upsample(lr.pixels, cfg.scale);
    if (!base.same_shape(residual))
        throw invalid_input("reconstruct: LR image does not match the feature map geometry");
    residual += base;
    return Image<T>(std::move(residual), lr.color_space);
}

template <class T>
void reconstruct_backward(ParameterSet<T>& p, const NetworkConfig& cfg, const ReconTape<T>& tape,
                          const Tensor3<T>& d_img, FeatureMap<T>& d_aligned)
{
    const int C = cfg.backbone_channels;
    const nn::ConvShape expand_s{C, 4 * C, 3}, body_s{C, C, 3}, out_s{C, cfg.channels, 3};
    const int stages = cfg.upsample_stages();
    FeatureMap<T> dx;
    detail::conv_back(p, "recon.out", out_s, tape.final_in, d_img, &dx);
    for (int k = stages - 1; k >= 0; --k) {
        if (k + 1 < stages) {
            for (int j = cfg.recon_gap_blocks() - 1; j >= 0; --j) {
                FeatureMap<T> d_mid;
                detail::conv_back(p, names::recon_block(k, j, 2), body_s, tape.block_mid[k][j], dx, &d_mid);
                nn::relu_backward_inplace<T>(tape.block_mid[k][j].data, d_mid.data);
                FeatureMap<T> d_in;
                detail::conv_back(p, names::recon_block(k, j, 1), body_s, tape.block_in[k][j], d_mid, &d_in);
                dx += d_in;
            }
        }
        FeatureMap<T> d_ps;
        detail::conv_back(p, names::recon_stage(k, "refine"), body_s, tape.shuffled[k], dx, &d_ps);
        FeatureMap<T> d_e = nn::pixel_unshuffle(d_ps, 2);
        FeatureMap<T> d_prev;
        detail::conv_back(p, names::recon_stage(k, "expand"), expand_s, tape.stage_in[k], d_e, &d_prev);
        dx = std::move(d_prev);
    }
    d_aligned = std::move(dx);
}

// ---------------------------------------------------------------------------
// Full model

template <class T>
struct ForwardTape {
    BackboneTape<T> backbone;
    ProcessorTape<T> processor;
    SpatialTape<T> spatial;
    FeatureMap<T> sr_feat;
    FeatureMap<T> spatial_feat;
    ReconTape<T> recon;
};

template <class T>
Image<T> forward(const ParameterSet<T>& p, const NetworkConfig& cfg, const Image<T>& lr, std::span<const T> emb,
                 ForwardTape<T>* tape = nullptr)
{
    if (lr.channels() != cfg.channels)
        throw invalid_input("input has " + std::to_string(lr.channels()) + " channels, network expects "
                            + std::to_string(cfg.channels));
    if (lr.height() < 1 || lr.width() < 1)
        throw invalid_input("empty input image");
    FeatureMap<T> sr = backbone_forward(p, cfg, lr.pixels, tape ? &tape->backbone : nullptr);
    auto f_proc = clip_feature_processor<T>(p, cfg, emb, tape ? &tape->processor : nullptr);
    FeatureMap<T> spatial =
        spatial_feature_generator<T>(p, cfg, f_proc, sr.height, sr.width, tape ? &tape->spatial : nullptr);
    FeatureMap<T> aligned = fuse(p, cfg, sr, spatial);
    Image<T> out = reconstruct(p, cfg, aligned, lr, tape ? &tape->recon : nullptr);
    if (tape) {
        tape->sr_feat = std::move(sr);
        tape->spatial_feat = std::move(spatial);
    }
    return out;
}

template <class T>
Image<T> forward(const ParameterSet<T>& p, const NetworkConfig& cfg, const Image<T>& lr, const SemanticEmbedding& emb,
                 ForwardTape<T>* tape = nullptr)
{
    const std::vector<T> v = embedding_values<T>(emb);
    return forward(p, cfg, lr, std::span<const T>(v), tape);
}

// Accumulates dLoss/dparams for d_out = dLoss/d(output image).
template <class T>
void backward(ParameterSet<T>& p, const NetworkConfig& cfg, const ForwardTape<T>& tape, const Tensor3<T>& d_out)
{
    FeatureMap<T> d_aligned;
    reconstruct_backward(p, cfg, tape.recon, d_out, d_aligned);
    auto [d_sr, d_spatial] = fuse_backward(p, cfg, tape.sr_feat, tape.spatial_feat, d_aligned);
    auto d_proc = spatial_feature_generator_backward(p, cfg, tape.spatial, d_spatial);
    clip_feature_processor_backward(p, tape.processor, std::move(d_proc));
    backbone_backward(p, cfg, tape.backbone, d_sr);
}

template <class T>
std::size_t parameter_count(const ParameterSet<T>& p)
{
    return p.values.numel();
}

} // namespace cdasr
