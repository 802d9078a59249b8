#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "cdasr/core/error.hpp"

namespace cdasr {

enum class EncoderBackend { pretrained, stub };

NLOHMANN_JSON_SERIALIZE_ENUM(EncoderBackend, {{EncoderBackend::pretrained, "pretrained"},
                                              {EncoderBackend::stub, "stub"}})

inline std::string to_string(EncoderBackend b) { return b == EncoderBackend::stub ? "stub" : "pretrained"; }

inline EncoderBackend parse_encoder_backend(const std::string& s)
{
    if (s == "stub")
        return EncoderBackend::stub;
    if (s == "pretrained")
        return EncoderBackend::pretrained;
    throw invalid_input("unknown encoder backend '" + s + "' (expected pretrained or stub)");
}

struct EncoderSpec {
    EncoderBackend backend = EncoderBackend::pretrained;
    int input_size = 224;
    int embed_dim = 512;
    // Weight archive for the pretrained backend. Empty means look it up in
    // $CDASR_ENCODER_CACHE.
    std::string weights_path;

    static EncoderSpec stub(int embed_dim = 512, int input_size = 32)
    {
        return {EncoderBackend::stub, input_size, embed_dim, {}};
    }
    static EncoderSpec pretrained() { return {EncoderBackend::pretrained, 224, 512, {}}; }

    void validate() const
    {
        if (embed_dim < 8)
            throw invalid_input("encoder embed_dim must be >= 8, got " + std::to_string(embed_dim));
        if (input_size < 8)
            throw invalid_input("encoder input_size must be >= 8, got " + std::to_string(input_size));
    }

    bool operator==(const EncoderSpec&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EncoderSpec, backend, input_size, embed_dim, weights_path)

} // namespace cdasr
