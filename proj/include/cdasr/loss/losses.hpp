#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdasr/core/error.hpp"
#include "cdasr/data/image.hpp"
#include "cdasr/encoder/encoder.hpp"
#include "cdasr/loss/perceptual.hpp"

namespace cdasr {

struct LossWeights {
    double pixel = 1.0;
    double perceptual = 0.1;
    double semantic = 0.01;

    void validate() const
    {
        if (!(pixel >= 0.0) || !(perceptual >= 0.0) || !(semantic >= 0.0))
            throw invalid_input("loss weights must be non-negative");
    }
    bool operator==(const LossWeights&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossWeights, pixel, perceptual, semantic)

struct LossReport {
    double total = 0.0;
    double pixel = 0.0;
    double perceptual = 0.0;
    double semantic = 0.0;

    bool finite() const
    {
        return std::isfinite(total) && std::isfinite(pixel) && std::isfinite(perceptual) && std::isfinite(semantic);
    }
};

namespace detail {

template <class T>
void require_same_dims(const Image<T>& a, const Image<T>& b, const char* what)
{
    if (!a.pixels.same_shape(b.pixels))
        throw invalid_input(std::string(what) + ": shape mismatch " + shape_string(a.pixels) + " vs " +
                            shape_string(b.pixels));
}

} // namespace detail

template <class T>
double l1_loss(const Image<T>& pred, const Image<T>& target, Tensor3<T>* grad = nullptr, double scale = 1.0)
{
    detail::require_same_dims(pred, target, "l1_loss");
    const std::size_t n = pred.pixels.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        sum += std::abs(static_cast<double>(pred.pixels.data[i]) - static_cast<double>(target.pixels.data[i]));
    if (grad) {
        const double g = scale / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const T d = pred.pixels.data[i] - target.pixels.data[i];
            grad->data[i] += static_cast<T>(d > T(0) ? g : (d < T(0) ? -g : 0.0));
        }
    }
    return sum / static_cast<double>(n);
}

// Sum over feature layers of the mean squared feature difference.
template <class T>
double perceptual_loss(const Image<T>& pred, const Image<T>& target, const FeatureExtractor<T>& fx,
                       Tensor3<T>* grad = nullptr, double scale = 1.0)
{
    detail::require_same_dims(pred, target, "perceptual_loss");
    const auto fp = fx.features(pred);
    const auto ft = fx.features(target);
    double total = 0.0;
    std::vector<Tensor3<T>> d(fp.size());
    for (std::size_t l = 0; l < fp.size(); ++l) {
        const std::size_t n = fp[l].size();
        double s = 0.0;
        if (grad)
            d[l] = Tensor3<T>(fp[l].channels, fp[l].height, fp[l].width);
        for (std::size_t i = 0; i < n; ++i) {
            const double diff = static_cast<double>(fp[l].data[i]) - static_cast<double>(ft[l].data[i]);
            s += diff * diff;
            if (grad)
                d[l].data[i] = static_cast<T>(2.0 * scale * diff / static_cast<double>(n));
        }
        total += s / static_cast<double>(n);
    }
    if (grad)
        *grad += fx.vjp(pred, d);
    return total;
}

// Squared distance between unit embeddings; the target side is a constant.
template <class T>
double semantic_loss(const Image<T>& pred, const Image<T>& target, const Encoder<T>& enc,
                     Tensor3<T>* grad = nullptr, double scale = 1.0)
{
    detail::require_same_dims(pred, target, "semantic_loss");
    const SemanticEmbedding ep = enc.encode(pred);
    const SemanticEmbedding et = enc.encode(target);
    double s = 0.0;
    std::vector<double> d(ep.values.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double diff = ep.values[i] - et.values[i];
        s += diff * diff;
        d[i] = 2.0 * scale * diff;
    }
    if (grad)
        *grad += enc.vjp(pred, d);
    return s;
}

// Frozen models the loss terms need.
template <class T>
struct LossContext {
    const Encoder<T>* encoder = nullptr;
    const FeatureExtractor<T>* features = nullptr;
};

// Weighted total; when `grad` is given, dTotal/dpred is accumulated into it.
// Terms with zero weight are still reported but skip their backward pass.
template <class T>
LossReport total_loss(const Image<T>& pred, const Image<T>& target, const LossWeights& w, const LossContext<T>& ctx,
                      Tensor3<T>* grad = nullptr)
{
    w.validate();
    detail::require_same_dims(pred, target, "total_loss");
    if (!ctx.encoder || !ctx.features)
        throw invalid_input("total_loss: encoder and feature extractor are required");
    if (grad && !grad->same_shape(pred.pixels))
        *grad = Tensor3<T>(pred.channels(), pred.height(), pred.width());
    LossReport r;
    r.pixel = l1_loss(pred, target, w.pixel != 0.0 ? grad : nullptr, w.pixel);
    r.perceptual = perceptual_loss(pred, target, *ctx.features, w.perceptual != 0.0 ? grad : nullptr, w.perceptual);
    r.semantic = semantic_loss(pred, target, *ctx.encoder, w.semantic != 0.0 ? grad : nullptr, w.semantic);
    r.total = w.pixel * r.pixel + w.perceptual * r.perceptual + w.semantic * r.semantic;
    return r;
}

} // namespace cdasr
