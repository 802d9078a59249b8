#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cdasr/core/archive.hpp"
#include "cdasr/encoder/spec.hpp"
#include "cdasr/loss/losses.hpp"
#include "cdasr/model/config.hpp"
#include "cdasr/model/network.hpp"
#include "cdasr/train/adam.hpp"

namespace cdasr {

class checkpoint_shape_error : public archive_error {
public:
    using archive_error::archive_error;
};

inline constexpr const char* checkpoint_kind = "cdasr-checkpoint";
inline constexpr const char* param_prefix = "param/";
inline constexpr const char* adam_m_prefix = "adam.m/";
inline constexpr const char* adam_v_prefix = "adam.v/";

struct CheckpointMeta {
    NetworkConfig network;
    EncoderSpec encoder;
    std::string encoder_id;
    std::uint64_t seed = 0;
    std::int64_t step = 0;
    LossWeights weights;
    // Free-form, run-specific details (timestamps, command, adaptation
    // settings). Excluded when comparing checkpoints.
    nlohmann::json provenance = nlohmann::json::object();
};

template <class T>
struct Checkpoint {
    ParameterSet<T> params;
    std::optional<OptimizerState<T>> optimizer;
    CheckpointMeta meta;
};

inline nlohmann::json checkpoint_meta_json(const CheckpointMeta& m)
{
    return {{"kind", checkpoint_kind}, {"network", m.network}, {"encoder", m.encoder},
            {"encoder_id", m.encoder_id}, {"seed", m.seed}, {"step", m.step},
            {"loss_weights", m.weights}, {"provenance", m.provenance}};
}

template <class T>
Archive checkpoint_archive(const ParameterSet<T>& params, const OptimizerState<T>* opt, const CheckpointMeta& meta)
{
    Archive ar;
    ar.meta = checkpoint_meta_json(meta);
    ar.add_all(params.values, param_prefix);
    if (opt) {
        ar.meta["adam"] = {{"step", opt->step},
                           {"beta1", opt->hyper.beta1},
                           {"beta2", opt->hyper.beta2},
                           {"eps", opt->hyper.eps}};
        ar.add_all(opt->first_moment, adam_m_prefix);
        ar.add_all(opt->second_moment, adam_v_prefix);
    }
    return ar;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params, const OptimizerState<T>* opt,
                     const CheckpointMeta& meta)
{
    write_archive(path, checkpoint_archive(params, opt, meta));
}

template <class T>
Checkpoint<T> checkpoint_from_archive(const Archive& ar)
{
    if (ar.meta.value("kind", std::string()) != checkpoint_kind)
        throw archive_format_error("archive is not a checkpoint");
    Checkpoint<T> ck;
    try {
        ck.meta.network = ar.meta.at("network").get<NetworkConfig>();
        ck.meta.encoder = ar.meta.at("encoder").get<EncoderSpec>();
        ck.meta.encoder_id = ar.meta.at("encoder_id").get<std::string>();
        ck.meta.seed = ar.meta.at("seed").get<std::uint64_t>();
        ck.meta.step = ar.meta.at("step").get<std::int64_t>();
        ck.meta.weights = ar.meta.at("loss_weights").get<LossWeights>();
        ck.meta.provenance = ar.meta.value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw archive_format_error(std::string("checkpoint metadata: ") + e.what());
    }
    ck.meta.network.validate();

    ck.params = ParameterSet<T>::from_values(ar.extract<T>(param_prefix));
    const auto expected = init_network<T>(ck.meta.network, 0);
    if (!ck.params.values.same_layout(expected.values))
        throw checkpoint_shape_error("checkpoint parameters do not match the stored network config");

    if (ar.meta.contains("adam")) {
        OptimizerState<T> opt;
        opt.first_moment = ar.extract<T>(adam_m_prefix);
        opt.second_moment = ar.extract<T>(adam_v_prefix);
        const auto& a = ar.meta.at("adam");
        opt.step = a.at("step").get<std::int64_t>();
        opt.hyper = {a.at("beta1").get<double>(), a.at("beta2").get<double>(), a.at("eps").get<double>()};
        if (!opt.matches(ck.params))
            throw checkpoint_shape_error("optimizer moments do not match the parameter layout");
        ck.optimizer = std::move(opt);
    }
    return ck;
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path)
{
    return checkpoint_from_archive<T>(read_archive(path));
}

// Serialized bytes with the provenance block blanked, for identity checks.
inline std::vector<unsigned char> normalized_checkpoint_bytes(const std::filesystem::path& path)
{
    Archive ar = read_archive(path);
    ar.meta["provenance"] = nlohmann::json::object();
    return serialize_archive(ar);
}

} // namespace cdasr
