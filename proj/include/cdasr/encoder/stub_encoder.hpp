#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cdasr/core/random.hpp"
#include "cdasr/data/image.hpp"
#include "cdasr/data/resample.hpp"
#include "cdasr/nn/pooling.hpp"

namespace cdasr {

// Cheap deterministic stand-in for the semantic encoder:
//   resize -> grayscale -> 8x8 average pool -> z = gain * P (s - 0.5) + b -> tanh
// P and b are drawn once from a constant seed. The bias keeps a black image
// away from the zero vector and makes the output sensitive to global mean
// shifts even where tanh is flat.
template <class T>
class StubEncoder {
public:
    static constexpr int grid = 8;
    static constexpr int features = grid * grid;
    static constexpr double gain = 4.0;
    static constexpr std::uint64_t seed = 0x5354554245ull;

    StubEncoder(int input_size, int embed_dim) : input_size_(input_size), embed_dim_(embed_dim)
    {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(embed_dim)));
        projection_.resize(static_cast<std::size_t>(embed_dim) * features);
        const double scale = 1.0 / std::sqrt(static_cast<double>(features));
        for (auto& p : projection_)
            p = rng.normal() * scale;
        bias_.resize(embed_dim);
        for (auto& b : bias_)
            b = rng.normal();
    }

    int embed_dim() const noexcept { return embed_dim_; }
    int input_size() const noexcept { return input_size_; }
    std::string id() const
    {
        return "stub-d" + std::to_string(embed_dim_) + "-s" + std::to_string(input_size_);
    }

    // Pre-normalization output.
    std::vector<T> raw(const Image<T>& img) const
    {
        const std::vector<T> s = pooled(img);
        std::vector<T> out(embed_dim_);
        for (int k = 0; k < embed_dim_; ++k) {
            double z = bias_[k];
            const double* row = projection_.data() + static_cast<std::size_t>(k) * features;
            for (int j = 0; j < features; ++j)
                z += gain * row[j] * (static_cast<double>(s[j]) - 0.5);
            out[k] = static_cast<T>(std::tanh(z));
        }
        return out;
    }

    // Gradient of <d_raw, raw(img)> with respect to the image pixels.
    Tensor3<T> raw_vjp(const Image<T>& img, std::span<const double> d_raw) const
    {
        const std::vector<T> e = raw(img);
        std::vector<double> ds(features, 0.0);
        for (int k = 0; k < embed_dim_; ++k) {
            const double dz = d_raw[k] * (1.0 - static_cast<double>(e[k]) * static_cast<double>(e[k]));
            const double* row = projection_.data() + static_cast<std::size_t>(k) * features;
            for (int j = 0; j < features; ++j)
                ds[j] += gain * row[j] * dz;
        }
        Tensor3<T> d_pool(1, grid, grid);
        for (int j = 0; j < features; ++j)
            d_pool.data[j] = static_cast<T>(ds[j]);
        const Tensor3<T> d_gray = nn::adaptive_avg_pool_adjoint(d_pool, input_size_, input_size_);

        Tensor3<T> d_resized(3, input_size_, input_size_);
        for (int c = 0; c < 3; ++c) {
            auto plane = d_resized.plane(c);
            for (std::size_t i = 0; i < plane.size(); ++i)
                plane[i] = static_cast<T>(gray_weights[c]) * d_gray.data[i];
        }
        Tensor3<T> d_rgb = img.height() == input_size_ && img.width() == input_size_
                               ? d_resized
                               : Resampler(img.height(), img.width(), input_size_, input_size_, true)
                                     .adjoint(d_resized);
        if (img.channels() == 3)
            return d_rgb;
        Tensor3<T> d_gray_in(1, img.height(), img.width());
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < d_gray_in.size(); ++i)
                d_gray_in.data[i] += d_rgb.plane(c)[i];
        return d_gray_in;
    }

    static constexpr double gray_weights[3] = {0.299, 0.587, 0.114};

private:
    std::vector<T> pooled(const Image<T>& img) const
    {
        const Image<T> rgb = to_three_channels(img);
        const Tensor3<T> resized = resize(rgb.pixels, input_size_, input_size_, true);
        Tensor3<T> gray(1, input_size_, input_size_);
        for (std::size_t i = 0; i < gray.size(); ++i)
            gray.data[i] = static_cast<T>(gray_weights[0] * resized.plane(0)[i] +
                                          gray_weights[1] * resized.plane(1)[i] +
                                          gray_weights[2] * resized.plane(2)[i]);
        const auto pooled = nn::adaptive_avg_pool(gray, grid, grid);
        return std::vector<T>(pooled.data.begin(), pooled.data.end());
    }

    int input_size_;
    int embed_dim_;
    std::vector<double> projection_;
    std::vector<double> bias_;
};

} // namespace cdasr
