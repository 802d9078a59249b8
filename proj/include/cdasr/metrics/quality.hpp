#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cdasr/core/error.hpp"
#include "cdasr/data/dataset.hpp"
#include "cdasr/data/image.hpp"
#include "cdasr/encoder/encoder.hpp"
#include "cdasr/model/network.hpp"

namespace cdasr {

inline constexpr double psnr_cap_db = 100.0;

enum class ProtocolKind { y_channel_cropped, rgb_full };

inline std::string to_string(ProtocolKind k) { return k == ProtocolKind::rgb_full ? "rgb_full" : "y_channel_cropped"; }

// How images are compared: luma with a border crop (the usual SR benchmark
// convention) or all RGB channels uncropped.
struct EvalProtocol {
    ProtocolKind kind = ProtocolKind::y_channel_cropped;
    int border = 0;

    static EvalProtocol y_cropped(int scale) { return {ProtocolKind::y_channel_cropped, scale}; }
    static EvalProtocol rgb() { return {ProtocolKind::rgb_full, 0}; }
};

namespace detail {

// Planes actually compared under the protocol, in double precision.
template <class T>
Tensor3<double> comparison_planes(const Image<T>& img, const EvalProtocol& p)
{
    Tensor3<double> px = img.pixels.template cast<double>();
    if (p.kind == ProtocolKind::rgb_full)
        return px;
    Tensor3<double> y = luma_bt601(px);
    const int b = p.border;
    if (b == 0)
        return y;
    if (y.height <= 2 * b || y.width <= 2 * b)
        throw invalid_input("image " + shape_string(y) + " too small for a border crop of " + std::to_string(b));
    Tensor3<double> out(1, y.height - 2 * b, y.width - 2 * b);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            out.at(0, r, c) = y.at(0, r + b, c + b);
    return out;
}

template <class T>
void require_comparable(const Image<T>& a, const Image<T>& b, const char* what)
{
    validate_image(a);
    validate_image(b);
    if (!a.pixels.same_shape(b.pixels))
        throw invalid_input(std::string(what) + ": shape mismatch " + shape_string(a.pixels) + " vs " +
                            shape_string(b.pixels));
}

} // namespace detail

inline double psnr_from_mse(double mse) { return mse <= 0.0 ? psnr_cap_db : std::min(psnr_cap_db, 10.0 * std::log10(1.0 / mse)); }

template <class T>
double psnr(const Image<T>& pred, const Image<T>& target, const EvalProtocol& protocol = EvalProtocol::rgb())
{
    detail::require_comparable(pred, target, "psnr");
    const Tensor3<double> a = detail::comparison_planes(pred, protocol);
    const Tensor3<double> b = detail::comparison_planes(target, protocol);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return psnr_from_mse(s / static_cast<double>(a.size()));
}

inline constexpr int ssim_window = 11;
inline constexpr double ssim_sigma = 1.5;
inline constexpr double ssim_k1 = 0.01;
inline constexpr double ssim_k2 = 0.03;

inline std::vector<double> gaussian_window_1d(int size = ssim_window, double sigma = ssim_sigma)
{
    std::vector<double> w(size);
    double s = 0.0;
    for (int i = 0; i < size; ++i) {
        const double x = i - (size - 1) / 2.0;
        w[i] = std::exp(-x * x / (2 * sigma * sigma));
        s += w[i];
    }
    for (auto& v : w)
        v /= s;
    return w;
}

namespace detail {

// Valid-mode separable filtering of one plane.
inline std::vector<double> filter_valid(const double* src, int h, int w, const std::vector<double>& k)
{
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i)
                s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i)
                s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

inline double ssim_plane(const double* a, const double* b, int h, int w)
{
    if (h < ssim_window || w < ssim_window)
        throw invalid_input("ssim needs at least " + std::to_string(ssim_window) + "x" + std::to_string(ssim_window) +
                            " pixels after cropping, got " + std::to_string(h) + "x" + std::to_string(w));
    const auto k = gaussian_window_1d();
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, h, w, k), mu_b = filter_valid(b, h, w, k);
    const auto e_aa = filter_valid(aa.data(), h, w, k), e_bb = filter_valid(bb.data(), h, w, k);
    const auto e_ab = filter_valid(ab.data(), h, w, k);
    const double c1 = ssim_k1 * ssim_k1, c2 = ssim_k2 * ssim_k2;
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        sum += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    return sum / static_cast<double>(mu_a.size());
}

} // namespace detail

// Mean SSIM (Gaussian 11x11, sigma 1.5, valid windows, data range 1); with
// several channels, the average of per-channel values.
template <class T>
double ssim(const Image<T>& pred, const Image<T>& target, const EvalProtocol& protocol = EvalProtocol::rgb())
{
    detail::require_comparable(pred, target, "ssim");
    const Tensor3<double> a = detail::comparison_planes(pred, protocol);
    const Tensor3<double> b = detail::comparison_planes(target, protocol);
    double s = 0.0;
    for (int c = 0; c < a.channels; ++c)
        s += detail::ssim_plane(a.plane(c).data(), b.plane(c).data(), a.height, a.width);
    return s / a.channels;
}

struct ImageScore {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    int n_images = 0;
    ProtocolKind protocol = ProtocolKind::y_channel_cropped;
    std::vector<ImageScore> per_image;
};

inline MetricReport summarize(std::vector<ImageScore> scores, ProtocolKind protocol)
{
    MetricReport r;
    r.protocol = protocol;
    r.n_images = static_cast<int>(scores.size());
    for (const auto& s : scores) {
        r.psnr_db += s.psnr_db;
        r.ssim += s.ssim;
    }
    if (r.n_images > 0) {
        r.psnr_db /= r.n_images;
        r.ssim /= r.n_images;
    }
    r.per_image = std::move(scores);
    return r;
}

template <class T>
ImageScore score_image(const Image<T>& pred, const Image<T>& target, const EvalProtocol& protocol, std::string name)
{
    const Image<T> clamped = clamp01(pred);
    return {std::move(name), psnr(clamped, target, protocol), ssim(clamped, target, protocol)};
}

// Mean PSNR/SSIM of the network's clamped outputs against the HR images.
template <class T>
MetricReport evaluate(const ParameterSet<T>& params, const NetworkConfig& cfg, const PairedDataset& ds,
                      const EvalProtocol& protocol, const Encoder<T>& encoder)
{
    if (ds.empty())
        throw empty_dataset_error("cannot evaluate on an empty dataset");
    if (ds.scale != cfg.scale)
        throw invalid_input("dataset scale " + std::to_string(ds.scale) + " does not match network scale " +
                            std::to_string(cfg.scale));
    std::vector<ImageScore> scores;
    for (const auto& pair : ds.pairs) {
        const Image<T> lr = pair.lr.template cast<T>();
        const Image<T> out = forward(params, cfg, lr, encoder.encode(lr));
        scores.push_back(score_image(out, pair.hr.template cast<T>(), protocol, pair.name));
    }
    return summarize(std::move(scores), protocol.kind);
}

// Same report for plain bicubic upsampling of the LR inputs.
inline MetricReport evaluate_bicubic(const PairedDataset& ds, const EvalProtocol& protocol)
{
    if (ds.empty())
        throw empty_dataset_error("cannot evaluate on an empty dataset");
    std::vector<ImageScore> scores;
    for (const auto& pair : ds.pairs)
        scores.push_back(score_image(bicubic_upsample(pair.lr, ds.scale), pair.hr, protocol, pair.name));
    return summarize(std::move(scores), protocol.kind);
}

} // namespace cdasr
