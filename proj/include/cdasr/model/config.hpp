#pragma once

#include <bit>
#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

#include "cdasr/core/error.hpp"
#include "cdasr/data/resample.hpp"

namespace cdasr {

struct NetworkConfig {
    int scale = 4;
    int channels = 3; // image channels
    int backbone_channels = 64;
    int backbone_blocks = 8;
    int clip_dim = 512;
    int mlp_hidden = 1024;
    int mlp_out = 512;
    int recon_blocks_per_stage = 2;

    void validate() const
    {
        require_supported_scale(scale);
        if (channels != 1 && channels != 3)
            throw invalid_input("network channels must be 1 or 3");
        if (backbone_channels < 1 || backbone_blocks < 0 || clip_dim < 1 || mlp_hidden < 1 || mlp_out < 1
            || recon_blocks_per_stage < 0)
            throw invalid_input("network widths must be >= 1 (block counts >= 0)");
    }

    int upsample_stages() const { return std::countr_zero(static_cast<unsigned>(scale)); }

    // x8 and x16 heads get residual blocks between consecutive upsampling stages.
    int recon_gap_blocks() const { return scale >= 8 ? recon_blocks_per_stage : 0; }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NetworkConfig, scale, channels, backbone_channels, backbone_blocks,
                                                clip_dim, mlp_hidden, mlp_out, recon_blocks_per_stage)

// Number of named parameter arrays init_network() creates for cfg.
inline std::size_t expected_parameter_entries(const NetworkConfig& cfg)
{
    const std::size_t stages = static_cast<std::size_t>(cfg.upsample_stages());
    std::size_t n = 0;
    n += 2 + 4 * static_cast<std::size_t>(cfg.backbone_blocks) + 2; // head, blocks, tail
    n += 4 + 2 + 4 + 2;                                            // mlp, norm, spatial convs, fusion
    n += 4 * stages;                                                // expand + refine per stage
    n += 4 * static_cast<std::size_t>(cfg.recon_gap_blocks()) * (stages - 1);
    n += 2; // output conv
    return n;
}

} // namespace cdasr
