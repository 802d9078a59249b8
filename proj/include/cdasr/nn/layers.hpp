#pragma once

// Differentiable building blocks on channel-major feature maps. Every forward
// has a matching backward that accumulates parameter gradients (+=) and
// returns/overwrites the input gradient.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cdasr/core/error.hpp"
#include "cdasr/core/tensor.hpp"

namespace cdasr::nn {

template <class T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <class T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;
template <class T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Square kernel, stride 1, zero padding k/2 ("same" output size).
struct ConvShape {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;

    std::size_t weight_size() const
    {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
    }
};

// Unfolds x into a (C*k*k) x (H*W) matrix (rows ordered c, ky, kx).
template <class T>
void im2col(const Tensor3<T>& x, int k, MatrixRM<T>& col)
{
    const int H = x.height, W = x.width, pad = k / 2;
    col.resize(static_cast<Eigen::Index>(x.channels) * k * k, static_cast<Eigen::Index>(H) * W);
    for (int c = 0; c < x.channels; ++c) {
        const T* src = x.plane(c).data();
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
                const int dy = ky - pad, dx = kx - pad;
                const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                for (int y = 0; y < H; ++y) {
                    T* drow = dst + static_cast<std::size_t>(y) * W;
                    const int sy = y + dy;
                    if (sy < 0 || sy >= H || x0 >= x1) {
                        std::fill(drow, drow + W, T(0));
                        continue;
                    }
                    std::fill(drow, drow + x0, T(0));
                    std::copy(src + static_cast<std::size_t>(sy) * W + x0 + dx, src + static_cast<std::size_t>(sy) * W + x1 + dx,
                              drow + x0);
                    std::fill(drow + x1, drow + W, T(0));
                }
            }
        }
    }
}

template <class T>
void col2im_add(const MatrixRM<T>& col, int k, Tensor3<T>& dx)
{
    const int H = dx.height, W = dx.width, pad = k / 2;
    for (int c = 0; c < dx.channels; ++c) {
        T* dst = dx.plane(c).data();
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* src = col.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
                const int dy = ky - pad, dxo = kx - pad;
                const int x0 = std::max(0, -dxo), x1 = std::min(W, W - dxo);
                for (int y = 0; y < H; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= H)
                        continue;
                    const T* srow = src + static_cast<std::size_t>(y) * W;
                    T* drow = dst + static_cast<std::size_t>(sy) * W + dxo;
                    for (int xx = x0; xx < x1; ++xx)
                        drow[xx] += srow[xx];
                }
            }
        }
    }
}

template <class T>
Tensor3<T> conv2d(const Tensor3<T>& x, const ConvShape& s, std::span<const T> weight, std::span<const T> bias)
{
    if (x.channels != s.in_channels)
        throw invalid_input("conv2d: expected " + std::to_string(s.in_channels) + " input channels, got "
                            + std::to_string(x.channels));
    const Eigen::Index hw = static_cast<Eigen::Index>(x.plane_size());
    Tensor3<T> y(s.out_channels, x.height, x.width);
    MapRM<T> ym(y.data.data(), s.out_channels, hw);
    ConstMapRM<T> wm(weight.data(), s.out_channels, static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel);
    if (s.kernel == 1) {
        ConstMapRM<T> xm(x.data.data(), x.channels, hw);
        ym.noalias() = wm * xm;
    } else {
        MatrixRM<T> col;
        im2col(x, s.kernel, col);
        ym.noalias() = wm * col;
    }
    for (int o = 0; o < s.out_channels; ++o)
        ym.row(o).array() += bias[o];
    return y;
}

// Input gradient only, for frozen layers.
template <class T>
Tensor3<T> conv2d_input_grad(const ConvShape& s, std::span<const T> weight, const Tensor3<T>& dy)
{
    const Eigen::Index hw = static_cast<Eigen::Index>(dy.plane_size());
    const Eigen::Index kk = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
    ConstMapRM<T> dym(dy.data.data(), s.out_channels, hw);
    ConstMapRM<T> wm(weight.data(), s.out_channels, kk);
    Tensor3<T> dx(s.in_channels, dy.height, dy.width);
    if (s.kernel == 1) {
        MapRM<T> dxm(dx.data.data(), s.in_channels, hw);
        dxm.noalias() = wm.transpose() * dym;
        return dx;
    }
    MatrixRM<T> dcol = wm.transpose() * dym;
    col2im_add(dcol, s.kernel, dx);
    return dx;
}

// Accumulates dW, db; writes dx when requested.
template <class T>
void conv2d_backward(const Tensor3<T>& x, const ConvShape& s, std::span<const T> weight, const Tensor3<T>& dy,
                     std::span<T> dweight, std::span<T> dbias, Tensor3<T>* dx)
{
    const Eigen::Index hw = static_cast<Eigen::Index>(x.plane_size());
    const Eigen::Index kk = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
    ConstMapRM<T> dym(dy.data.data(), s.out_channels, hw);
    ConstMapRM<T> wm(weight.data(), s.out_channels, kk);
    MapRM<T> dwm(dweight.data(), s.out_channels, kk);
    for (int o = 0; o < s.out_channels; ++o)
        dbias[o] += dym.row(o).sum();
    if (s.kernel == 1) {
        ConstMapRM<T> xm(x.data.data(), x.channels, hw);
        dwm.noalias() += dym * xm.transpose();
        if (dx) {
            *dx = Tensor3<T>(x.channels, x.height, x.width);
            MapRM<T> dxm(dx->data.data(), x.channels, hw);
            dxm.noalias() = wm.transpose() * dym;
        }
        return;
    }
    MatrixRM<T> col;
    im2col(x, s.kernel, col);
    dwm.noalias() += dym * col.transpose();
    if (dx) {
        MatrixRM<T> dcol = wm.transpose() * dym;
        *dx = Tensor3<T>(x.channels, x.height, x.width);
        col2im_add(dcol, s.kernel, *dx);
    }
}

template <class T>
void relu_inplace(Tensor3<T>& x)
{
    for (auto& v : x.data)
        v = v > T(0) ? v : T(0);
}

template <class T>
void relu_inplace(std::vector<T>& x)
{
    for (auto& v : x)
        v = v > T(0) ? v : T(0);
}

// Masks grad by (activation > 0); `activation` is the ReLU output.
template <class T>
void relu_backward_inplace(std::span<const T> activation, std::span<T> grad)
{
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(activation[i] > T(0)))
            grad[i] = T(0);
    }
}

// (C*r*r, H, W) -> (C, r*H, r*W); out[c, y*r+i, x*r+j] = in[c*r*r + i*r + j, y, x].
template <class T>
Tensor3<T> pixel_shuffle(const Tensor3<T>& in, int r)
{
    if (in.channels % (r * r) != 0)
        throw invalid_input("pixel_shuffle: channels not divisible by r^2");
    const int C = in.channels / (r * r);
    Tensor3<T> out(C, in.height * r, in.width * r);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
                const int src_c = c * r * r + i * r + j;
                for (int y = 0; y < in.height; ++y)
                    for (int x = 0; x < in.width; ++x)
                        out.at(c, y * r + i, x * r + j) = in.at(src_c, y, x);
            }
    return out;
}

// Inverse permutation of pixel_shuffle (also its adjoint).
template <class T>
Tensor3<T> pixel_unshuffle(const Tensor3<T>& in, int r)
{
    const int H = in.height / r, W = in.width / r;
    Tensor3<T> out(in.channels * r * r, H, W);
    for (int c = 0; c < in.channels; ++c)
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
                const int dst_c = c * r * r + i * r + j;
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                        out.at(dst_c, y, x) = in.at(c, y * r + i, x * r + j);
            }
    return out;
}

// y = W x + b with W stored (out x in) row-major.
template <class T>
std::vector<T> linear(std::span<const T> x, std::span<const T> weight, std::span<const T> bias, int out)
{
    const int in = static_cast<int>(x.size());
    if (weight.size() != static_cast<std::size_t>(out) * in)
        throw invalid_input("linear: weight/input size mismatch");
    // Plain loops: Eigen's GEMV path depends on the operands' alignment.
    std::vector<T> y(out);
    for (int o = 0; o < out; ++o) {
        const T* w = weight.data() + static_cast<std::size_t>(o) * in;
        T acc = bias.empty() ? T(0) : bias[o];
        for (int i = 0; i < in; ++i)
            acc += w[i] * x[i];
        y[o] = acc;
    }
    return y;
}

template <class T>
std::vector<T> linear_backward(std::span<const T> x, std::span<const T> weight, std::span<const T> dy,
                               std::span<T> dweight, std::span<T> dbias)
{
    const int in = static_cast<int>(x.size()), out = static_cast<int>(dy.size());
    std::vector<T> dx(in, T(0));
    for (int o = 0; o < out; ++o) {
        const T* w = weight.data() + static_cast<std::size_t>(o) * in;
        T* dw = dweight.data() + static_cast<std::size_t>(o) * in;
        const T g = dy[o];
        if (!dbias.empty())
            dbias[o] += g;
        for (int i = 0; i < in; ++i) {
            dw[i] += g * x[i];
            dx[i] += w[i] * g;
        }
    }
    return dx;
}

inline constexpr double layer_norm_eps = 1e-5;

template <class T>
struct LayerNormCache {
    std::vector<T> normalized; // (x - mean) / sqrt(var + eps)
    T inv_std = T(0);
};

template <class T>
std::vector<T> layer_norm(std::span<const T> x, std::span<const T> gain, std::span<const T> bias,
                          LayerNormCache<T>* cache = nullptr)
{
    const std::size_t n = x.size();
    T mean = T(0);
    for (T v : x)
        mean += v;
    mean /= static_cast<T>(n);
    T var = T(0);
    for (T v : x)
        var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    const T inv_std = T(1) / std::sqrt(var + static_cast<T>(layer_norm_eps));
    std::vector<T> xhat(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        xhat[i] = (x[i] - mean) * inv_std;
        y[i] = xhat[i] * gain[i] + bias[i];
    }
    if (cache) {
        cache->normalized = std::move(xhat);
        cache->inv_std = inv_std;
    }
    return y;
}

template <class T>
std::vector<T> layer_norm_backward(const LayerNormCache<T>& cache, std::span<const T> gain, std::span<const T> dy,
                                   std::span<T> dgain, std::span<T> dbias)
{
    const std::size_t n = dy.size();
    std::vector<T> dxhat(n);
    T sum_d = T(0), sum_dx = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        dgain[i] += dy[i] * cache.normalized[i];
        dbias[i] += dy[i];
        dxhat[i] = dy[i] * gain[i];
        sum_d += dxhat[i];
        sum_dx += dxhat[i] * cache.normalized[i];
    }
    std::vector<T> dx(n);
    const T inv_n = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
        dx[i] = cache.inv_std * (dxhat[i] - inv_n * sum_d - cache.normalized[i] * inv_n * sum_dx);
    return dx;
}

// 3x3 "same" convolution of a map whose every channel is constant (value
// f[c] everywhere). Equivalent to broadcasting f to H x W and calling conv2d,
// but each output pixel only needs the sum of per-tap responses W_k f over
// the taps that fall inside the image.
template <class T>
Tensor3<T> broadcast_conv3x3(std::span<const T> f, int height, int width, const ConvShape& s,
                             std::span<const T> weight, std::span<const T> bias)
{
    if (s.kernel != 3 || f.size() != static_cast<std::size_t>(s.in_channels))
        throw invalid_input("broadcast_conv3x3: shape mismatch");
    // tap[k][o] = sum_c W[o, c, k] f[c]
    MatrixRM<T> tap(9, s.out_channels);
    ConstMapRM<T> wm(weight.data(), static_cast<Eigen::Index>(s.out_channels) * s.in_channels, 9);
    for (int o = 0; o < s.out_channels; ++o)
        for (int k = 0; k < 9; ++k) {
            T acc = T(0);
            for (int c = 0; c < s.in_channels; ++c)
                acc += wm(static_cast<Eigen::Index>(o) * s.in_channels + c, k) * f[c];
            tap(k, o) = acc;
        }
    Tensor3<T> y(s.out_channels, height, width);
    for (int yy = 0; yy < height; ++yy)
        for (int xx = 0; xx < width; ++xx)
            for (int o = 0; o < s.out_channels; ++o) {
                T acc = bias[o];
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = yy + ky - 1;
                    if (sy < 0 || sy >= height)
                        continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sx = xx + kx - 1;
                        if (sx >= 0 && sx < width)
                            acc += tap(ky * 3 + kx, o);
                    }
                }
                y.at(o, yy, xx) = acc;
            }
    return y;
}

template <class T>
std::vector<T> broadcast_conv3x3_backward(std::span<const T> f, const ConvShape& s, std::span<const T> weight,
                                          const Tensor3<T>& dy, std::span<T> dweight, std::span<T> dbias)
{
    const int H = dy.height, W = dy.width;
    // g[k][o] = sum of dy[o] over pixels where tap k lands inside the image.
    MatrixRM<T> g = MatrixRM<T>::Zero(9, s.out_channels);
    for (int o = 0; o < s.out_channels; ++o) {
        T total = T(0);
        for (int yy = 0; yy < H; ++yy)
            for (int xx = 0; xx < W; ++xx)
                total += dy.at(o, yy, xx);
        dbias[o] += total;
        for (int ky = 0; ky < 3; ++ky) {
            const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
            for (int kx = 0; kx < 3; ++kx) {
                const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
                T acc = T(0);
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx)
                        acc += dy.at(o, yy, xx);
                g(ky * 3 + kx, o) = acc;
            }
        }
    }
    std::vector<T> df(s.in_channels, T(0));
    for (int o = 0; o < s.out_channels; ++o)
        for (int c = 0; c < s.in_channels; ++c) {
            const std::size_t base = (static_cast<std::size_t>(o) * s.in_channels + c) * 9;
            for (int k = 0; k < 9; ++k) {
                dweight[base + k] += g(k, o) * f[c];
                df[c] += g(k, o) * weight[base + k];
            }
        }
    return df;
}

} // namespace cdasr::nn
