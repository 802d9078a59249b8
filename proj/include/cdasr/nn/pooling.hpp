#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "cdasr/core/error.hpp"
#include "cdasr/core/tensor.hpp"

namespace cdasr::nn {

// Cell i of an adaptive pool over `in` samples covers
// [floor(i * in / out), ceil((i + 1) * in / out)).
inline std::pair<int, int> adaptive_range(int i, int in, int out)
{
    const int lo = static_cast<int>((static_cast<long long>(i) * in) / out);
    const int hi = static_cast<int>(((static_cast<long long>(i) + 1) * in + out - 1) / out);
    return {lo, hi};
}

template <class T>
Tensor3<T> adaptive_avg_pool(const Tensor3<T>& x, int out_h, int out_w)
{
    if (out_h < 1 || out_w < 1)
        throw invalid_input("adaptive_avg_pool: output size must be positive");
    Tensor3<T> y(x.channels, out_h, out_w);
    for (int c = 0; c < x.channels; ++c)
        for (int i = 0; i < out_h; ++i) {
            const auto [y0, y1] = adaptive_range(i, x.height, out_h);
            for (int j = 0; j < out_w; ++j) {
                const auto [x0, x1] = adaptive_range(j, x.width, out_w);
                double acc = 0.0;
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx)
                        acc += x.at(c, yy, xx);
                y.at(c, i, j) = static_cast<T>(acc / ((y1 - y0) * (x1 - x0)));
            }
        }
    return y;
}

template <class T>
Tensor3<T> adaptive_avg_pool_adjoint(const Tensor3<T>& dy, int in_h, int in_w)
{
    Tensor3<T> dx(dy.channels, in_h, in_w);
    for (int c = 0; c < dy.channels; ++c)
        for (int i = 0; i < dy.height; ++i) {
            const auto [y0, y1] = adaptive_range(i, in_h, dy.height);
            for (int j = 0; j < dy.width; ++j) {
                const auto [x0, x1] = adaptive_range(j, in_w, dy.width);
                const T share = dy.at(c, i, j) / static_cast<T>((y1 - y0) * (x1 - x0));
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx)
                        dx.at(c, yy, xx) += share;
            }
        }
    return dx;
}

// 2x2 max pool, stride 2 (odd trailing row/column dropped).
template <class T>
Tensor3<T> max_pool2x2(const Tensor3<T>& x, std::vector<int>* argmax = nullptr)
{
    const int H = x.height / 2, W = x.width / 2;
    Tensor3<T> y(x.channels, H, W);
    if (argmax)
        argmax->assign(y.size(), 0);
    for (int c = 0; c < x.channels; ++c)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                T best = -std::numeric_limits<T>::infinity();
                int best_idx = 0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const T v = x.at(c, 2 * i + dy, 2 * j + dx);
                        if (v > best) {
                            best = v;
                            best_idx = (2 * i + dy) * x.width + 2 * j + dx;
                        }
                    }
                y.at(c, i, j) = best;
                if (argmax)
                    (*argmax)[(static_cast<std::size_t>(c) * H + i) * W + j] = best_idx;
            }
    return y;
}

template <class T>
Tensor3<T> max_pool2x2_backward(const Tensor3<T>& dy, const std::vector<int>& argmax, int in_h, int in_w)
{
    Tensor3<T> dx(dy.channels, in_h, in_w);
    for (int c = 0; c < dy.channels; ++c) {
        auto plane = dx.plane(c);
        for (int i = 0; i < dy.height; ++i)
            for (int j = 0; j < dy.width; ++j) {
                const std::size_t k = (static_cast<std::size_t>(c) * dy.height + i) * dy.width + j;
                plane[argmax[k]] += dy.data[k];
            }
    }
    return dx;
}

} // namespace cdasr::nn
