#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cdasr/core/aligned.hpp"
#include "cdasr/core/error.hpp"

namespace cdasr {

// Dense channel-major (C x H x W) array. Used for images and feature maps.
template <class T>
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    AlignedVector<T> data;

    Tensor3() = default;
    Tensor3(int c, int h, int w, T fill = T(0))
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill)
    {
        if (c < 0 || h < 0 || w < 0)
            throw invalid_input("Tensor3: negative dimension");
    }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }
    bool empty() const noexcept { return data.empty(); }

    T& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    const T& at(int c, int y, int x) const
    {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::span<T> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
    std::span<const T> plane(int c) const { return {data.data() + c * plane_size(), plane_size()}; }

    bool same_shape(const Tensor3& other) const noexcept
    {
        return channels == other.channels && height == other.height && width == other.width;
    }

    template <class U>
    Tensor3<U> cast() const
    {
        Tensor3<U> out;
        out.channels = channels;
        out.height = height;
        out.width = width;
        out.data.assign(data.begin(), data.end());
        return out;
    }

    Tensor3& operator+=(const Tensor3& other)
    {
        if (!same_shape(other))
            throw invalid_input("Tensor3 +=: shape mismatch");
        for (std::size_t i = 0; i < data.size(); ++i)
            data[i] += other.data[i];
        return *this;
    }

    Tensor3& operator*=(T s)
    {
        for (auto& v : data)
            v *= s;
        return *this;
    }

    bool all_finite() const
    {
        return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
    }
};

template <class T>
std::string shape_string(const Tensor3<T>& t)
{
    return std::to_string(t.channels) + "x" + std::to_string(t.height) + "x" + std::to_string(t.width);
}

} // namespace cdasr
