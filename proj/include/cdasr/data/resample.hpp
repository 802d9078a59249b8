#pragma once

// Separable cubic resampling (Catmull-Rom family, a = -0.5) with optional
// antialiasing, edge-replicate borders, and the exact adjoint used to
// backpropagate through resizes.

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdasr/core/error.hpp"
#include "cdasr/data/image.hpp"

namespace cdasr {

inline constexpr double bicubic_a = -0.5;

inline double cubic_kernel(double x, double a = bicubic_a)
{
    x = std::abs(x);
    if (x <= 1.0)
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0)
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

inline bool is_supported_scale(int scale)
{
    return scale == 2 || scale == 4 || scale == 8 || scale == 16;
}

inline void require_supported_scale(int scale)
{
    if (!is_supported_scale(scale))
        throw invalid_input("unsupported scale " + std::to_string(scale) + " (allowed: 2, 4, 8, 16)");
}

// Per-output-sample tap lists along one axis. Tap indices are already
// clamped into [0, in_size), which realizes edge replication.
struct ResampleAxis {
    int in_size = 0;
    int out_size = 0;
    std::vector<std::vector<std::pair<int, double>>> taps;
};

inline ResampleAxis make_resample_axis(int in_size, int out_size, bool antialias)
{
    if (in_size < 1 || out_size < 1)
        throw invalid_input("resample: sizes must be positive");
    ResampleAxis axis{in_size, out_size, {}};
    axis.taps.resize(out_size);
    const double ratio = static_cast<double>(out_size) / in_size;
    const bool widen = antialias && ratio < 1.0;
    const double support = widen ? 2.0 / ratio : 2.0;
    for (int i = 0; i < out_size; ++i) {
        const double center = (i + 0.5) / ratio - 0.5;
        const int first = static_cast<int>(std::floor(center - support));
        const int last = static_cast<int>(std::ceil(center + support));
        std::vector<std::pair<int, double>> taps;
        double total = 0.0;
        for (int j = first; j <= last; ++j) {
            const double d = center - j;
            const double w = widen ? ratio * cubic_kernel(ratio * d) : cubic_kernel(d);
            if (w == 0.0)
                continue;
            taps.emplace_back(std::clamp(j, 0, in_size - 1), w);
            total += w;
        }
        for (auto& t : taps)
            t.second /= total;
        axis.taps[i] = std::move(taps);
    }
    return axis;
}

namespace detail {

template <class T>
void resample_plane(const T* src, int h, int w, const ResampleAxis& ay, const ResampleAxis& ax, T* dst)
{
    // Horizontal pass into a h x out_w buffer, then vertical.
    std::vector<double> tmp(static_cast<std::size_t>(h) * ax.out_size);
    for (int y = 0; y < h; ++y) {
        const T* row = src + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < ax.out_size; ++x) {
            double acc = 0.0;
            for (const auto& [j, wt] : ax.taps[x])
                acc += wt * row[j];
            tmp[static_cast<std::size_t>(y) * ax.out_size + x] = acc;
        }
    }
    for (int y = 0; y < ay.out_size; ++y) {
        for (int x = 0; x < ax.out_size; ++x) {
            double acc = 0.0;
            for (const auto& [j, wt] : ay.taps[y])
                acc += wt * tmp[static_cast<std::size_t>(j) * ax.out_size + x];
            dst[static_cast<std::size_t>(y) * ax.out_size + x] = static_cast<T>(acc);
        }
    }
}

template <class T>
void resample_plane_adjoint(const T* grad_out, const ResampleAxis& ay, const ResampleAxis& ax, T* grad_in)
{
    const int h = ay.in_size, w = ax.in_size;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ax.out_size, 0.0);
    for (int y = 0; y < ay.out_size; ++y)
        for (const auto& [j, wt] : ay.taps[y])
            for (int x = 0; x < ax.out_size; ++x)
                tmp[static_cast<std::size_t>(j) * ax.out_size + x]
                    += wt * grad_out[static_cast<std::size_t>(y) * ax.out_size + x];
    std::vector<double> acc(static_cast<std::size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ax.out_size; ++x)
            for (const auto& [j, wt] : ax.taps[x])
                acc[static_cast<std::size_t>(y) * w + j] += wt * tmp[static_cast<std::size_t>(y) * ax.out_size + x];
    for (std::size_t i = 0; i < acc.size(); ++i)
        grad_in[i] = static_cast<T>(acc[i]);
}

} // namespace detail

// Reusable resize operator between two fixed geometries.
class Resampler {
public:
    Resampler(int in_h, int in_w, int out_h, int out_w, bool antialias = true)
        : ay_(make_resample_axis(in_h, out_h, antialias)), ax_(make_resample_axis(in_w, out_w, antialias))
    {
    }

    int in_height() const { return ay_.in_size; }
    int in_width() const { return ax_.in_size; }
    int out_height() const { return ay_.out_size; }
    int out_width() const { return ax_.out_size; }

    template <class T>
    Tensor3<T> apply(const Tensor3<T>& in) const
    {
        if (in.height != ay_.in_size || in.width != ax_.in_size)
            throw invalid_input("Resampler: input geometry mismatch");
        Tensor3<T> out(in.channels, ay_.out_size, ax_.out_size);
        for (int c = 0; c < in.channels; ++c)
            detail::resample_plane(in.plane(c).data(), in.height, in.width, ay_, ax_, out.plane(c).data());
        return out;
    }

    // Transpose of apply(): maps a gradient on the output to the input.
    template <class T>
    Tensor3<T> adjoint(const Tensor3<T>& grad_out) const
    {
        if (grad_out.height != ay_.out_size || grad_out.width != ax_.out_size)
            throw invalid_input("Resampler: gradient geometry mismatch");
        Tensor3<T> grad_in(grad_out.channels, ay_.in_size, ax_.in_size);
        for (int c = 0; c < grad_out.channels; ++c)
            detail::resample_plane_adjoint(grad_out.plane(c).data(), ay_, ax_, grad_in.plane(c).data());
        return grad_in;
    }

private:
    ResampleAxis ay_;
    ResampleAxis ax_;
};

template <class T>
Tensor3<T> resize(const Tensor3<T>& in, int out_h, int out_w, bool antialias = true)
{
    if (in.height == out_h && in.width == out_w)
        return in;
    return Resampler(in.height, in.width, out_h, out_w, antialias).apply(in);
}

// Downscale by an integer factor with antialiasing. Sides that are not
// multiples of the scale are center-cropped first.
template <class T>
Image<T> bicubic_downsample(const Image<T>& img, int scale)
{
    require_supported_scale(scale);
    validate_image(img);
    const Image<T> src = crop_to_multiple(img, scale);
    return Image<T>(resize(src.pixels, src.height() / scale, src.width() / scale, true), src.color_space,
                    src.source_path);
}

template <class T>
Tensor3<T> bicubic_upsample(const Tensor3<T>& in, int scale)
{
    require_supported_scale(scale);
    return Resampler(in.height, in.width, in.height * scale, in.width * scale, false).apply(in);
}

template <class T>
Image<T> bicubic_upsample(const Image<T>& img, int scale)
{
    validate_image(img);
    return Image<T>(bicubic_upsample(img.pixels, scale), img.color_space, img.source_path);
}

} // namespace cdasr
