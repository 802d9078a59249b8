#pragma once

#include <algorithm>
#include <optional>
#include <string>

#include "cdasr/core/error.hpp"
#include "cdasr/core/tensor.hpp"

namespace cdasr {

enum class ColorSpace { rgb, y };

// Pixel values live in [0, 1]; storage is channel-major.
template <class T = float>
struct Image {
    Tensor3<T> pixels;
    ColorSpace color_space = ColorSpace::rgb;
    std::optional<std::string> source_path;

    Image() = default;
    explicit Image(Tensor3<T> px, ColorSpace cs = ColorSpace::rgb, std::optional<std::string> path = {})
        : pixels(std::move(px)), color_space(cs), source_path(std::move(path))
    {
    }
    Image(int channels, int height, int width, T fill = T(0))
        : pixels(channels, height, width, fill), color_space(channels == 1 ? ColorSpace::y : ColorSpace::rgb)
    {
    }

    int channels() const noexcept { return pixels.channels; }
    int height() const noexcept { return pixels.height; }
    int width() const noexcept { return pixels.width; }

    T& at(int c, int y, int x) { return pixels.at(c, y, x); }
    const T& at(int c, int y, int x) const { return pixels.at(c, y, x); }

    template <class U>
    Image<U> cast() const
    {
        return Image<U>(pixels.template cast<U>(), color_space, source_path);
    }
};

template <class T>
void validate_image(const Image<T>& img)
{
    if (img.height() < 1 || img.width() < 1)
        throw invalid_input("image must be at least 1x1");
    if (img.channels() != 1 && img.channels() != 3)
        throw invalid_input("image must have 1 or 3 channels, got " + std::to_string(img.channels()));
}

template <class T>
Image<T> clamp01(Image<T> img)
{
    for (auto& v : img.pixels.data)
        v = std::clamp(v, T(0), T(1));
    return img;
}

template <class T>
Image<T> crop(const Image<T>& img, int y0, int x0, int h, int w)
{
    if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > img.height() || x0 + w > img.width())
        throw invalid_input("crop window outside image");
    Image<T> out(Tensor3<T>(img.channels(), h, w), img.color_space, img.source_path);
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < h; ++y)
            std::copy_n(&img.at(c, y0 + y, x0), w, &out.at(c, y, 0));
    return out;
}

// Center crop to the largest size whose sides are multiples of `multiple`.
template <class T>
Image<T> crop_to_multiple(const Image<T>& img, int multiple)
{
    const int h = img.height() / multiple * multiple;
    const int w = img.width() / multiple * multiple;
    if (h < 1 || w < 1)
        throw invalid_input("image " + std::to_string(img.height()) + "x" + std::to_string(img.width())
                            + " is smaller than the scale factor " + std::to_string(multiple));
    if (h == img.height() && w == img.width())
        return img;
    return crop(img, (img.height() - h) / 2, (img.width() - w) / 2, h, w);
}

template <class T>
Image<T> flip_horizontal(const Image<T>& img)
{
    Image<T> out = img;
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                out.at(c, y, x) = img.at(c, y, img.width() - 1 - x);
    return out;
}

// Counter-clockwise rotation by k * 90 degrees.
template <class T>
Image<T> rotate90(const Image<T>& img, int k)
{
    k = ((k % 4) + 4) % 4;
    if (k == 0)
        return img;
    const int h = img.height(), w = img.width();
    const bool swap = (k % 2) == 1;
    Image<T> out(Tensor3<T>(img.channels(), swap ? w : h, swap ? h : w), img.color_space, img.source_path);
    for (int c = 0; c < img.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const T v = img.at(c, y, x);
                switch (k) {
                case 1: out.at(c, w - 1 - x, y) = v; break;
                case 2: out.at(c, h - 1 - y, w - 1 - x) = v; break;
                case 3: out.at(c, x, h - 1 - y) = v; break;
                }
            }
        }
    }
    return out;
}

template <class T>
Image<T> to_three_channels(const Image<T>& img)
{
    if (img.channels() == 3)
        return img;
    Image<T> out(Tensor3<T>(3, img.height(), img.width()), ColorSpace::rgb, img.source_path);
    for (int c = 0; c < 3; ++c)
        std::copy(img.pixels.data.begin(), img.pixels.data.end(), out.pixels.plane(c).begin());
    return out;
}

// ITU-R BT.601 luma in the studio-swing form used by SR benchmark tooling
// (Y in [16/255, 235/255] for RGB in [0, 1]). Single-channel input passes through.
template <class T>
Tensor3<T> luma_bt601(const Tensor3<T>& rgb)
{
    if (rgb.channels == 1)
        return rgb;
    if (rgb.channels != 3)
        throw invalid_input("luma conversion needs 1 or 3 channels");
    Tensor3<T> y(1, rgb.height, rgb.width);
    const auto r = rgb.plane(0), g = rgb.plane(1), b = rgb.plane(2);
    for (std::size_t i = 0; i < y.data.size(); ++i)
        y.data[i] = static_cast<T>((65.481 * r[i] + 128.553 * g[i] + 24.966 * b[i] + 16.0) / 255.0);
    return y;
}

} // namespace cdasr
