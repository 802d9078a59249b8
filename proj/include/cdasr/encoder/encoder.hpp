#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cdasr/core/error.hpp"
#include "cdasr/data/image.hpp"
#include "cdasr/encoder/embedding.hpp"
#include "cdasr/encoder/spec.hpp"
#include "cdasr/encoder/stub_encoder.hpp"
#include "cdasr/encoder/vit_encoder.hpp"

namespace cdasr {

inline constexpr const char* encoder_cache_env = "CDASR_ENCODER_CACHE";
inline constexpr const char* clip_weights_file = "clip-vit-b32.cdasr";

// Directory holding converted weight archives: $CDASR_ENCODER_CACHE, else
// ~/.cache/cdasr.
inline std::filesystem::path encoder_cache_dir()
{
    if (const char* env = std::getenv(encoder_cache_env); env && *env)
        return env;
    if (const char* home = std::getenv("HOME"); home && *home)
        return std::filesystem::path(home) / ".cache" / "cdasr";
    return std::filesystem::path(".cache") / "cdasr";
}

inline std::filesystem::path resolve_weights(const std::string& explicit_path, const char* default_name)
{
    const std::filesystem::path p =
        explicit_path.empty() ? encoder_cache_dir() / default_name : std::filesystem::path(explicit_path);
    if (!std::filesystem::is_regular_file(p))
        throw io_error("weights not found at " + p.string() + "; convert them with tools/convert_weights.py and set " +
                       encoder_cache_env);
    return p;
}

namespace detail {

// Loaded towers are immutable and shared per (path, precision).
template <class T>
std::shared_ptr<const VitEncoder<T>> cached_vit(const std::filesystem::path& path)
{
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<const VitEncoder<T>>> cache;
    const std::string key = std::filesystem::absolute(path).lexically_normal().string();
    std::lock_guard lock(mu);
    auto it = cache.find(key);
    if (it != cache.end())
        return it->second;
    auto enc = VitEncoder<T>::from_file(path);
    cache.emplace(key, enc);
    return enc;
}

} // namespace detail

// Frozen image encoder producing unit-norm embeddings. Holds no trainable
// state: nothing here is ever part of a ParameterSet.
template <class T>
class Encoder {
public:
    explicit Encoder(const EncoderSpec& spec) : spec_(spec)
    {
        spec_.validate();
        if (spec_.backend == EncoderBackend::stub) {
            impl_ = std::make_shared<const StubEncoder<T>>(spec_.input_size, spec_.embed_dim);
            return;
        }
        auto vit = detail::cached_vit<T>(resolve_weights(spec_.weights_path, clip_weights_file));
        if (vit->input_size() != spec_.input_size || vit->embed_dim() != spec_.embed_dim)
            throw invalid_input("encoder spec (input " + std::to_string(spec_.input_size) + ", dim " +
                                std::to_string(spec_.embed_dim) + ") does not match weights (input " +
                                std::to_string(vit->input_size()) + ", dim " + std::to_string(vit->embed_dim()) +
                                ")");
        impl_ = std::move(vit);
    }

    const EncoderSpec& spec() const noexcept { return spec_; }
    int embed_dim() const noexcept { return spec_.embed_dim; }

    std::string id() const
    {
        return std::visit([](const auto& p) { return std::string(p->id()); }, impl_);
    }

    SemanticEmbedding encode(const Image<T>& img) const
    {
        validate_image(img);
        const std::vector<T> raw = raw_output(img);
        return {normalize_embedding<T>(raw).unit, id()};
    }

    std::vector<SemanticEmbedding> encode_batch(std::span<const Image<T>> imgs) const
    {
        if (imgs.empty())
            throw invalid_input("encode_batch: empty image list");
        std::vector<SemanticEmbedding> out;
        out.reserve(imgs.size());
        for (const auto& img : imgs)
            out.push_back(encode(img));
        return out;
    }

    // Gradient with respect to img of <d_embedding, encode(img)>.
    Tensor3<T> vjp(const Image<T>& img, std::span<const double> d_embedding) const
    {
        validate_image(img);
        if (static_cast<int>(d_embedding.size()) != spec_.embed_dim)
            throw invalid_input("encoder vjp: gradient has wrong dimension");
        const std::vector<T> raw = raw_output(img);
        const NormalizedEmbedding n = normalize_embedding<T>(raw);
        const std::vector<double> d_raw = normalize_embedding_vjp(n, d_embedding);
        return std::visit([&](const auto& p) { return p->raw_vjp(img, d_raw); }, impl_);
    }

private:
    std::vector<T> raw_output(const Image<T>& img) const
    {
        return std::visit([&](const auto& p) { return p->raw(img); }, impl_);
    }

    EncoderSpec spec_;
    std::variant<std::shared_ptr<const StubEncoder<T>>, std::shared_ptr<const VitEncoder<T>>> impl_;
};

template <class T>
SemanticEmbedding encode(const EncoderSpec& spec, const Image<T>& img)
{
    return Encoder<T>(spec).encode(img);
}

template <class T>
std::vector<SemanticEmbedding> encode_batch(const EncoderSpec& spec, std::span<const Image<T>> imgs)
{
    return Encoder<T>(spec).encode_batch(imgs);
}

} // namespace cdasr
