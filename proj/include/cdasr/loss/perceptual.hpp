#pragma once

#include <array>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "cdasr/core/archive.hpp"
#include "cdasr/data/image.hpp"
#include "cdasr/encoder/encoder.hpp"
#include "cdasr/nn/layers.hpp"
#include "cdasr/nn/pooling.hpp"

namespace cdasr {

inline constexpr const char* vgg_weights_file = "vgg19-features.cdasr";

// Multi-scale average-pooled RGB statistics, the lightweight extractor that
// pairs with the stub encoder. Linear in the image.
template <class T>
class PooledStatsExtractor {
public:
    static constexpr std::array<int, 3> grids = {16, 8, 4};

    std::vector<Tensor3<T>> features(const Image<T>& img) const
    {
        const Image<T> rgb = to_three_channels(img);
        std::vector<Tensor3<T>> out;
        for (int g : grids)
            out.push_back(nn::adaptive_avg_pool(rgb.pixels, g, g));
        return out;
    }

    Tensor3<T> vjp(const Image<T>& img, const std::vector<Tensor3<T>>& d_features) const
    {
        Tensor3<T> d(3, img.height(), img.width());
        for (const auto& df : d_features)
            d += nn::adaptive_avg_pool_adjoint(df, img.height(), img.width());
        return fold_gray(img, std::move(d));
    }

    static Tensor3<T> fold_gray(const Image<T>& img, Tensor3<T> d_rgb)
    {
        if (img.channels() == 3)
            return d_rgb;
        Tensor3<T> d(1, img.height(), img.width());
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < d.size(); ++i)
                d.data[i] += d_rgb.plane(c)[i];
        return d;
    }
};

// First three stages of VGG-19 (taps after relu1_2, relu2_2, relu3_4) with
// ImageNet input normalization. Weights use torchvision's `features.<i>` names.
template <class T>
class VggExtractor {
public:
    explicit VggExtractor(const Archive& ar)
    {
        for (const auto& l : layout) {
            Conv c;
            c.shape = {l.in, l.out, 3};
            c.weight = fetch(ar, "features." + std::to_string(l.index) + ".weight", c.shape.weight_size());
            c.bias = fetch(ar, "features." + std::to_string(l.index) + ".bias", static_cast<std::size_t>(l.out));
            convs_.push_back(std::move(c));
        }
    }

    static std::shared_ptr<const VggExtractor> from_file(const std::filesystem::path& path)
    {
        return std::make_shared<const VggExtractor>(read_archive(path));
    }

    std::vector<Tensor3<T>> features(const Image<T>& img) const { return run(img, nullptr); }

    Tensor3<T> vjp(const Image<T>& img, const std::vector<Tensor3<T>>& d_features) const
    {
        Tape tape;
        run(img, &tape);
        Tensor3<T> grad;
        int tap = static_cast<int>(d_features.size()) - 1;
        for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
            if (layout[i].tap) {
                if (grad.empty())
                    grad = d_features[tap];
                else
                    grad += d_features[tap];
                --tap;
            }
            nn::relu_backward_inplace(std::span<const T>(tape.outputs[i].data), std::span<T>(grad.data));
            grad = nn::conv2d_input_grad(convs_[i].shape, std::span<const T>(convs_[i].weight), grad);
            if (layout[i].pool_before)
                grad = nn::max_pool2x2_backward(grad, tape.argmax[i], tape.outputs[i - 1].height,
                                                tape.outputs[i - 1].width);
        }
        for (int c = 0; c < 3; ++c)
            for (auto& v : grad.plane(c))
                v = static_cast<T>(v / imagenet_std[c]);
        return PooledStatsExtractor<T>::fold_gray(img, std::move(grad));
    }

    static constexpr double imagenet_mean[3] = {0.485, 0.456, 0.406};
    static constexpr double imagenet_std[3] = {0.229, 0.224, 0.225};

private:
    struct LayerSpec {
        int index, in, out;
        bool pool_before, tap;
    };
    static constexpr std::array<LayerSpec, 8> layout = {{{0, 3, 64, false, false},
                                                         {2, 64, 64, false, true},
                                                         {5, 64, 128, true, false},
                                                         {7, 128, 128, false, true},
                                                         {10, 128, 256, true, false},
                                                         {12, 256, 256, false, false},
                                                         {14, 256, 256, false, false},
                                                         {16, 256, 256, false, true}}};

    struct Conv {
        nn::ConvShape shape;
        std::vector<T> weight, bias;
    };

    // outputs[i] is the ReLU output of conv i, before any following pool.
    struct Tape {
        std::vector<Tensor3<T>> outputs;
        std::vector<std::vector<int>> argmax;
    };

    std::vector<Tensor3<T>> run(const Image<T>& img, Tape* tape) const
    {
        Tensor3<T> x = to_three_channels(img).pixels;
        for (int c = 0; c < 3; ++c)
            for (auto& v : x.plane(c))
                v = static_cast<T>((v - imagenet_mean[c]) / imagenet_std[c]);
        std::vector<Tensor3<T>> taps;
        if (tape) {
            tape->outputs.assign(convs_.size(), {});
            tape->argmax.assign(convs_.size(), {});
        }
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            if (layout[i].pool_before) {
                if (x.height < 2 || x.width < 2)
                    throw invalid_input("vgg perceptual features need images of at least 4x4");
                x = nn::max_pool2x2(x, tape ? &tape->argmax[i] : nullptr);
            }
            x = nn::conv2d(x, convs_[i].shape, std::span<const T>(convs_[i].weight), std::span<const T>(convs_[i].bias));
            nn::relu_inplace(x);
            if (tape)
                tape->outputs[i] = x;
            if (layout[i].tap)
                taps.push_back(x);
        }
        return taps;
    }

    static std::vector<T> fetch(const Archive& ar, const std::string& name, std::size_t n)
    {
        const StoredArray* a = ar.find(name);
        if (!a)
            throw archive_format_error("vgg weights: missing array '" + name + "'");
        if (a->numel() != n)
            throw archive_format_error("vgg weights: array '" + name + "' has wrong size");
        return a->template values<T>();
    }

    std::vector<Conv> convs_;
};

// Feature extractor used by the perceptual loss; the backend follows the encoder's.
template <class T>
class FeatureExtractor {
public:
    FeatureExtractor() : impl_(std::make_shared<const PooledStatsExtractor<T>>()) {}

    static FeatureExtractor for_encoder(const EncoderSpec& spec)
    {
        FeatureExtractor f;
        if (spec.backend == EncoderBackend::pretrained)
            f.impl_ = VggExtractor<T>::from_file(resolve_weights({}, vgg_weights_file));
        return f;
    }

    static FeatureExtractor vgg(std::shared_ptr<const VggExtractor<T>> v)
    {
        FeatureExtractor f;
        f.impl_ = std::move(v);
        return f;
    }

    std::vector<Tensor3<T>> features(const Image<T>& img) const
    {
        return std::visit([&](const auto& p) { return p->features(img); }, impl_);
    }

    Tensor3<T> vjp(const Image<T>& img, const std::vector<Tensor3<T>>& d_features) const
    {
        return std::visit([&](const auto& p) { return p->vjp(img, d_features); }, impl_);
    }

private:
    std::variant<std::shared_ptr<const PooledStatsExtractor<T>>, std::shared_ptr<const VggExtractor<T>>> impl_;
};

} // namespace cdasr
