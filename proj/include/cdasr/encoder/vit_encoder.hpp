#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cdasr/core/archive.hpp"
#include "cdasr/data/image.hpp"
#include "cdasr/data/resample.hpp"
#include "cdasr/nn/layers.hpp"

namespace cdasr {

// Architecture of a CLIP-style vision transformer. Defaults are ViT-B/32.
struct VitConfig {
    int image_size = 224;
    int patch_size = 32;
    int width = 768;
    int layers = 12;
    int heads = 12;
    int embed_dim = 512;

    int grid() const { return image_size / patch_size; }
    int tokens() const { return grid() * grid() + 1; }
    int head_dim() const { return width / heads; }

    void validate() const
    {
        if (image_size < 1 || patch_size < 1 || image_size % patch_size != 0)
            throw invalid_input("vit: image_size must be a positive multiple of patch_size");
        if (width < 1 || heads < 1 || width % heads != 0)
            throw invalid_input("vit: width must be a positive multiple of heads");
        if (layers < 0 || embed_dim < 1)
            throw invalid_input("vit: bad layer count or embed_dim");
    }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(VitConfig, image_size, patch_size, width, layers, heads, embed_dim)

inline constexpr double clip_mean[3] = {0.48145466, 0.4578275, 0.40821073};
inline constexpr double clip_std[3] = {0.26862954, 0.26130258, 0.27577711};

namespace vit_detail {

template <class T>
using Mat = nn::MatrixRM<T>;
template <class T>
using Vec = nn::VectorX<T>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <class T>
struct Norm {
    RowVec<T> gain, bias;
};

template <class T>
struct Block {
    Norm<T> ln1, ln2;
    Mat<T> in_w;  // 3D x D, rows ordered q, k, v
    RowVec<T> in_b;
    Mat<T> out_w; // D x D
    RowVec<T> out_b;
    Mat<T> fc_w;  // 4D x D
    RowVec<T> fc_b;
    Mat<T> proj_w; // D x 4D
    RowVec<T> proj_b;
};

template <class T>
struct RowNormCache {
    Mat<T> normalized;
    Vec<T> inv_std;
};

template <class T>
Mat<T> row_norm(const Mat<T>& x, const Norm<T>& p, RowNormCache<T>* cache)
{
    const Eigen::Index n = x.rows(), d = x.cols();
    Mat<T> xhat(n, d);
    Vec<T> inv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const T mean = x.row(i).mean();
        const T var = (x.row(i).array() - mean).square().mean();
        inv(i) = T(1) / std::sqrt(var + static_cast<T>(nn::layer_norm_eps));
        xhat.row(i) = (x.row(i).array() - mean) * inv(i);
    }
    Mat<T> y = (xhat.array().rowwise() * p.gain.array()).rowwise() + p.bias.array();
    if (cache) {
        cache->normalized = std::move(xhat);
        cache->inv_std = std::move(inv);
    }
    return y;
}

template <class T>
Mat<T> row_norm_backward(const RowNormCache<T>& c, const Norm<T>& p, const Mat<T>& dy)
{
    const T d = static_cast<T>(dy.cols());
    Mat<T> dxhat = dy.array().rowwise() * p.gain.array();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const T m1 = dxhat.row(i).mean();
        const T m2 = (dxhat.row(i).array() * c.normalized.row(i).array()).sum() / d;
        dx.row(i) = (dxhat.row(i).array() - m1 - c.normalized.row(i).array() * m2) * c.inv_std(i);
    }
    return dx;
}

template <class T>
T quick_gelu(T m)
{
    return m / (T(1) + std::exp(T(-1.702) * m));
}

template <class T>
T quick_gelu_grad(T m)
{
    const T s = T(1) / (T(1) + std::exp(T(-1.702) * m));
    return s + T(1.702) * m * s * (T(1) - s);
}

template <class T>
struct BlockTape {
    RowNormCache<T> ln1, ln2;
    Mat<T> h1, qkv, attn_concat, h2, pre_act, act;
    std::vector<Mat<T>> probs;
};

} // namespace vit_detail

// CLIP image tower evaluated in T precision with frozen weights. Supports the
// vector-Jacobian product with respect to input pixels so that a loss on the
// embedding can be back-propagated into an image generator.
template <class T>
class VitEncoder {
public:
    VitEncoder(VitConfig cfg, const Archive& ar, std::string id) : cfg_(cfg), id_(std::move(id))
    {
        cfg_.validate();
        load(ar);
    }

    static std::shared_ptr<const VitEncoder> from_file(const std::filesystem::path& path)
    {
        const Archive ar = read_archive(path);
        if (!ar.meta.contains("vit"))
            throw archive_format_error("encoder weights " + path.string() + " carry no 'vit' config");
        const VitConfig cfg = ar.meta.at("vit").get<VitConfig>();
        const std::string id = ar.meta.value("encoder_id", std::string("clip-vit"));
        return std::make_shared<const VitEncoder>(cfg, ar, id);
    }

    const VitConfig& config() const noexcept { return cfg_; }
    int embed_dim() const noexcept { return cfg_.embed_dim; }
    int input_size() const noexcept { return cfg_.image_size; }
    const std::string& id() const noexcept { return id_; }

    std::vector<T> raw(const Image<T>& img) const
    {
        return forward(img, nullptr);
    }

    Tensor3<T> raw_vjp(const Image<T>& img, std::span<const double> d_raw) const
    {
        using namespace vit_detail;
        Tape tape;
        forward(img, &tape);
        const int D = cfg_.width, N = cfg_.tokens();

        RowVec de(cfg_.embed_dim);
        for (int k = 0; k < cfg_.embed_dim; ++k)
            de(k) = static_cast<T>(d_raw[k]);
        Mat d_pooled = de * proj_.transpose(); // 1 x D
        Mat dx = Mat::Zero(N, D);
        dx.row(0) = row_norm_backward(tape.ln_post, ln_post_, d_pooled).row(0);

        for (int l = cfg_.layers - 1; l >= 0; --l)
            dx = block_backward(blocks_[l], tape.blocks[l], dx);

        dx = row_norm_backward(tape.ln_pre, ln_pre_, dx);
        // Patch tokens came from a stride-P convolution, i.e. a per-patch linear map.
        const Mat d_patches = dx.bottomRows(N - 1) * conv_;

        const int S = cfg_.image_size, P = cfg_.patch_size, G = cfg_.grid();
        Tensor3<T> d_norm(3, S, S);
        for (int py = 0; py < G; ++py)
            for (int px = 0; px < G; ++px) {
                const auto row = d_patches.row(py * G + px);
                int k = 0;
                for (int c = 0; c < 3; ++c)
                    for (int ky = 0; ky < P; ++ky)
                        for (int kx = 0; kx < P; ++kx)
                            d_norm.at(c, py * P + ky, px * P + kx) = row(k++);
            }
        for (int c = 0; c < 3; ++c)
            for (auto& v : d_norm.plane(c))
                v = static_cast<T>(v / clip_std[c]);

        Tensor3<T> d_rgb = img.height() == S && img.width() == S
                               ? d_norm
                               : Resampler(img.height(), img.width(), S, S, true).adjoint(d_norm);
        if (img.channels() == 3)
            return d_rgb;
        Tensor3<T> d_gray(1, img.height(), img.width());
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < d_gray.size(); ++i)
                d_gray.data[i] += d_rgb.plane(c)[i];
        return d_gray;
    }

private:
    using Mat = vit_detail::Mat<T>;
    using RowVec = vit_detail::RowVec<T>;

    struct Tape {
        vit_detail::RowNormCache<T> ln_pre, ln_post;
        std::vector<vit_detail::BlockTape<T>> blocks;
    };

    std::vector<T> forward(const Image<T>& img, Tape* tape) const
    {
        using namespace vit_detail;
        const int S = cfg_.image_size, P = cfg_.patch_size, G = cfg_.grid(), D = cfg_.width;
        const int N = cfg_.tokens();
        const Image<T> rgb = to_three_channels(img);
        Tensor3<T> x = resize(rgb.pixels, S, S, true);
        for (int c = 0; c < 3; ++c)
            for (auto& v : x.plane(c))
                v = static_cast<T>((v - clip_mean[c]) / clip_std[c]);

        Mat patches(N - 1, 3 * P * P);
        for (int py = 0; py < G; ++py)
            for (int px = 0; px < G; ++px) {
                int k = 0;
                for (int c = 0; c < 3; ++c)
                    for (int ky = 0; ky < P; ++ky)
                        for (int kx = 0; kx < P; ++kx)
                            patches(py * G + px, k++) = x.at(c, py * P + ky, px * P + kx);
            }
        Mat tokens(N, D);
        tokens.row(0) = class_embedding_;
        tokens.bottomRows(N - 1) = patches * conv_.transpose();
        tokens += positional_;
        tokens = row_norm(tokens, ln_pre_, tape ? &tape->ln_pre : nullptr);

        if (tape)
            tape->blocks.resize(cfg_.layers);
        for (int l = 0; l < cfg_.layers; ++l)
            tokens = block_forward(blocks_[l], tokens, tape ? &tape->blocks[l] : nullptr);

        const Mat first = tokens.topRows(1);
        const Mat pooled = row_norm(first, ln_post_, tape ? &tape->ln_post : nullptr);
        const Mat e = pooled * proj_;
        return std::vector<T>(e.data(), e.data() + e.size());
    }

    Mat block_forward(const vit_detail::Block<T>& b, const Mat& x, vit_detail::BlockTape<T>* tape) const
    {
        using namespace vit_detail;
        const int D = cfg_.width, H = cfg_.heads, dh = cfg_.head_dim();
        const Eigen::Index N = x.rows();
        RowNormCache<T> c1, c2;
        Mat h1 = row_norm(x, b.ln1, &c1);
        Mat qkv = (h1 * b.in_w.transpose()).rowwise() + b.in_b;
        const T scale = T(1) / std::sqrt(static_cast<T>(dh));
        Mat concat(N, D);
        std::vector<Mat> probs;
        for (int h = 0; h < H; ++h) {
            const auto q = qkv.middleCols(h * dh, dh);
            const auto k = qkv.middleCols(D + h * dh, dh);
            const auto v = qkv.middleCols(2 * D + h * dh, dh);
            Mat s = (q * k.transpose()) * scale;
            for (Eigen::Index i = 0; i < N; ++i) {
                const T mx = s.row(i).maxCoeff();
                s.row(i) = (s.row(i).array() - mx).exp();
                s.row(i) /= s.row(i).sum();
            }
            concat.middleCols(h * dh, dh) = s * v;
            if (tape)
                probs.push_back(std::move(s));
        }
        Mat mid = x + ((concat * b.out_w.transpose()).rowwise() + b.out_b);
        Mat h2 = row_norm(mid, b.ln2, &c2);
        Mat pre = (h2 * b.fc_w.transpose()).rowwise() + b.fc_b;
        Mat act = pre.unaryExpr([](T m) { return quick_gelu(m); });
        Mat out = mid + ((act * b.proj_w.transpose()).rowwise() + b.proj_b);
        if (tape) {
            tape->ln1 = std::move(c1);
            tape->ln2 = std::move(c2);
            tape->h1 = std::move(h1);
            tape->qkv = std::move(qkv);
            tape->attn_concat = std::move(concat);
            tape->h2 = std::move(h2);
            tape->pre_act = std::move(pre);
            tape->act = std::move(act);
            tape->probs = std::move(probs);
        }
        return out;
    }

    Mat block_backward(const vit_detail::Block<T>& b, const vit_detail::BlockTape<T>& t, const Mat& dy) const
    {
        using namespace vit_detail;
        const int D = cfg_.width, H = cfg_.heads, dh = cfg_.head_dim();
        const Eigen::Index N = dy.rows();
        // MLP branch.
        Mat d_act = dy * b.proj_w;
        Mat d_pre = d_act.array() * t.pre_act.unaryExpr([](T m) { return quick_gelu_grad(m); }).array();
        Mat d_mid = dy + row_norm_backward(t.ln2, b.ln2, Mat(d_pre * b.fc_w));
        // Attention branch.
        const Mat d_concat = d_mid * b.out_w;
        const T scale = T(1) / std::sqrt(static_cast<T>(dh));
        Mat d_qkv(N, 3 * D);
        for (int h = 0; h < H; ++h) {
            const auto q = t.qkv.middleCols(h * dh, dh);
            const auto k = t.qkv.middleCols(D + h * dh, dh);
            const auto v = t.qkv.middleCols(2 * D + h * dh, dh);
            const Mat& a = t.probs[h];
            const auto d_o = d_concat.middleCols(h * dh, dh);
            const Mat d_a = d_o * v.transpose();
            d_qkv.middleCols(2 * D + h * dh, dh) = a.transpose() * d_o;
            Mat d_s(N, N);
            for (Eigen::Index i = 0; i < N; ++i) {
                const T dot = (d_a.row(i).array() * a.row(i).array()).sum();
                d_s.row(i) = a.row(i).array() * (d_a.row(i).array() - dot);
            }
            d_s *= scale;
            d_qkv.middleCols(h * dh, dh) = d_s * k;
            d_qkv.middleCols(D + h * dh, dh) = d_s.transpose() * q;
        }
        return d_mid + row_norm_backward(t.ln1, b.ln1, Mat(d_qkv * b.in_w));
    }

    Mat matrix(const Archive& ar, const std::string& name, Eigen::Index rows, Eigen::Index cols) const
    {
        const StoredArray* a = ar.find(name);
        if (!a)
            throw archive_format_error("encoder weights: missing array '" + name + "'");
        if (a->numel() != static_cast<std::size_t>(rows * cols))
            throw archive_format_error("encoder weights: array '" + name + "' has " + std::to_string(a->numel()) +
                                       " values, expected " + std::to_string(rows * cols));
        const std::vector<T> v = a->template values<T>();
        return Eigen::Map<const Mat>(v.data(), rows, cols);
    }

    RowVec row(const Archive& ar, const std::string& name, Eigen::Index n) const
    {
        return matrix(ar, name, 1, n);
    }

    vit_detail::Norm<T> norm(const Archive& ar, const std::string& prefix) const
    {
        return {row(ar, prefix + ".weight", cfg_.width), row(ar, prefix + ".bias", cfg_.width)};
    }

    void load(const Archive& ar)
    {
        const int D = cfg_.width, P = cfg_.patch_size;
        conv_ = matrix(ar, "visual.conv1.weight", D, 3 * P * P);
        class_embedding_ = row(ar, "visual.class_embedding", D);
        positional_ = matrix(ar, "visual.positional_embedding", cfg_.tokens(), D);
        ln_pre_ = norm(ar, "visual.ln_pre");
        ln_post_ = norm(ar, "visual.ln_post");
        proj_ = matrix(ar, "visual.proj", D, cfg_.embed_dim);
        blocks_.resize(cfg_.layers);
        for (int l = 0; l < cfg_.layers; ++l) {
            const std::string p = "visual.transformer.resblocks." + std::to_string(l) + ".";
            auto& b = blocks_[l];
            b.ln1 = norm(ar, p + "ln_1");
            b.ln2 = norm(ar, p + "ln_2");
            b.in_w = matrix(ar, p + "attn.in_proj_weight", 3 * D, D);
            b.in_b = row(ar, p + "attn.in_proj_bias", 3 * D);
            b.out_w = matrix(ar, p + "attn.out_proj.weight", D, D);
            b.out_b = row(ar, p + "attn.out_proj.bias", D);
            b.fc_w = matrix(ar, p + "mlp.c_fc.weight", 4 * D, D);
            b.fc_b = row(ar, p + "mlp.c_fc.bias", 4 * D);
            b.proj_w = matrix(ar, p + "mlp.c_proj.weight", D, 4 * D);
            b.proj_b = row(ar, p + "mlp.c_proj.bias", D);
        }
    }

    VitConfig cfg_;
    std::string id_;
    Mat conv_;
    RowVec class_embedding_;
    Mat positional_;
    vit_detail::Norm<T> ln_pre_, ln_post_;
    Mat proj_;
    std::vector<vit_detail::Block<T>> blocks_;
};

} // namespace cdasr
