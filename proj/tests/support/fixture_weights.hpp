#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cdasr/core/archive.hpp"
#include "cdasr/core/random.hpp"
#include "cdasr/encoder/vit_encoder.hpp"

namespace cdasr::fixtures {

// Random weights in the converted CLIP layout. Same fill order and values as
// vit_weights() in tests/golden/make_golden.py.
inline Archive tiny_vit_archive(const VitConfig& cfg, std::uint64_t seed, double scale)
{
    const std::size_t d = cfg.width, p = cfg.patch_size, e = cfg.embed_dim, n = cfg.tokens();
    std::vector<std::pair<std::string, Shape>> layout = {{"visual.conv1.weight", {d, 3, p, p}},
                                                         {"visual.class_embedding", {d}},
                                                         {"visual.positional_embedding", {n, d}},
                                                         {"visual.ln_pre.weight", {d}},
                                                         {"visual.ln_pre.bias", {d}}};
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string b = "visual.transformer.resblocks." + std::to_string(l) + ".";
        layout.insert(layout.end(), {{b + "ln_1.weight", {d}},
                                     {b + "ln_1.bias", {d}},
                                     {b + "attn.in_proj_weight", {3 * d, d}},
                                     {b + "attn.in_proj_bias", {3 * d}},
                                     {b + "attn.out_proj.weight", {d, d}},
                                     {b + "attn.out_proj.bias", {d}},
                                     {b + "ln_2.weight", {d}},
                                     {b + "ln_2.bias", {d}},
                                     {b + "mlp.c_fc.weight", {4 * d, d}},
                                     {b + "mlp.c_fc.bias", {4 * d}},
                                     {b + "mlp.c_proj.weight", {d, 4 * d}},
                                     {b + "mlp.c_proj.bias", {d}}});
    }
    layout.insert(layout.end(),
                  {{"visual.ln_post.weight", {d}}, {"visual.ln_post.bias", {d}}, {"visual.proj", {d, e}}});

    Rng rng(seed);
    ArraySet<double> w;
    for (const auto& [name, shape] : layout) {
        auto& a = w.add(name, shape);
        const bool gain = name.find("ln_") != std::string::npos && name.ends_with(".weight");
        for (auto& v : a.data)
            v = rng.normal() * scale + (gain ? 1.0 : 0.0);
    }
    Archive ar;
    ar.meta = {{"vit", cfg}, {"encoder_id", "tiny-vit"}};
    ar.add_all(w);
    return ar;
}

// He-scaled random weights for the truncated VGG-19 feature stack.
inline Archive random_vgg_archive(std::uint64_t seed)
{
    struct L {
        int index, in, out;
    };
    const L layers[] = {{0, 3, 64}, {2, 64, 64}, {5, 64, 128}, {7, 128, 128},
                        {10, 128, 256}, {12, 256, 256}, {14, 256, 256}, {16, 256, 256}};
    Rng rng(seed);
    ArraySet<float> w;
    for (const auto& l : layers) {
        const std::string n = "features." + std::to_string(l.index);
        auto& k = w.add(n + ".weight", {std::size_t(l.out), std::size_t(l.in), 3, 3});
        const double s = std::sqrt(2.0 / (9.0 * l.in));
        for (auto& v : k.data)
            v = static_cast<float>(rng.normal() * s);
        auto& b = w.add(n + ".bias", {std::size_t(l.out)});
        for (auto& v : b.data)
            v = static_cast<float>(0.05 * rng.normal());
    }
    Archive ar;
    ar.add_all(w);
    return ar;
}

} // namespace cdasr::fixtures
