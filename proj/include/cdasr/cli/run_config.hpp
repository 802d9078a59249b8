#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdasr/core/error.hpp"
#include "cdasr/encoder/spec.hpp"
#include "cdasr/loss/losses.hpp"
#include "cdasr/meta/meta_adapter.hpp"
#include "cdasr/metrics/quality.hpp"
#include "cdasr/model/config.hpp"
#include "cdasr/train/trainer.hpp"

namespace cdasr {

struct DatasetRef {
    std::string tag;
    std::string dir;
    bool operator==(const DatasetRef&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetRef, tag, dir)

struct DataConfig {
    std::string hr_dir;
    std::string lr_dir;
    std::string out;
    std::string checkpoint;
    std::string resume;
    std::vector<DatasetRef> datasets;
    bool operator==(const DataConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DataConfig, hr_dir, lr_dir, out, checkpoint, resume, datasets)

struct EvalConfig {
    std::string protocol = "y"; // "y" (luma, border crop = scale) or "rgb"
    std::string kernel = "linear"; // MMD kernel for analyze-domains: linear | rbf
    bool operator==(const EvalConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalConfig, protocol, kernel)

// Everything a command needs. Every field has a default; config files may
// set any subset, and unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 0;
    NetworkConfig network;
    EncoderSpec encoder;
    LossWeights loss_weights;
    TrainConfig train;
    AdaptConfig adapt;
    EvalConfig eval;
    DataConfig data;

    // Seed and loss weights live at the top level; push them into the
    // per-stage configs.
    void sync()
    {
        train.seed = seed;
        adapt.seed = seed;
        train.weights = loss_weights;
        adapt.weights = loss_weights;
    }

    void validate() const
    {
        network.validate();
        encoder.validate();
        loss_weights.validate();
        train.validate();
        adapt.validate();
        if (eval.protocol != "y" && eval.protocol != "rgb")
            throw invalid_input("protocol must be 'y' or 'rgb', got '" + eval.protocol + "'");
        if (eval.kernel != "linear" && eval.kernel != "rbf")
            throw invalid_input("kernel must be 'linear' or 'rbf', got '" + eval.kernel + "'");
        if (network.clip_dim != encoder.embed_dim)
            throw invalid_input("network.clip_dim " + std::to_string(network.clip_dim) +
                                " does not match encoder.embed_dim " + std::to_string(encoder.embed_dim));
    }

    EvalProtocol protocol() const
    {
        return eval.protocol == "rgb" ? EvalProtocol::rgb() : EvalProtocol::y_cropped(network.scale);
    }
};

inline void to_json(nlohmann::json& j, const RunConfig& c)
{
    j = {{"seed", c.seed},       {"network", c.network}, {"encoder", c.encoder}, {"loss_weights", c.loss_weights},
         {"train", c.train},     {"adapt", c.adapt},     {"eval", c.eval},       {"data", c.data}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c)
{
    const RunConfig d;
    c.seed = j.value("seed", d.seed);
    c.network = j.value("network", d.network);
    c.encoder = j.value("encoder", d.encoder);
    c.loss_weights = j.value("loss_weights", d.loss_weights);
    c.train = j.value("train", d.train);
    c.adapt = j.value("adapt", d.adapt);
    c.eval = j.value("eval", d.eval);
    c.data = j.value("data", d.data);
    c.sync();
}

namespace detail {

// Every key in `given` must exist in `reference` (recursively for objects).
inline void reject_unknown_keys(const nlohmann::json& given, const nlohmann::json& reference, const std::string& path)
{
    if (!given.is_object())
        return;
    if (!reference.is_object())
        throw invalid_input("config: '" + path + "' must not be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!reference.contains(key))
            throw invalid_input("config: unknown key '" + here + "'");
        if (value.is_object())
            reject_unknown_keys(value, reference.at(key), here);
        else if (value.is_array() && key == "datasets")
            for (const auto& item : value)
                reject_unknown_keys(item, nlohmann::json(DatasetRef{}), here + "[]");
    }
}

// Enum fields deserialize unknown strings to their first value, so check the
// spelling up front.
inline void require_enum_value(const nlohmann::json& j, const char* section, const char* key,
                               std::initializer_list<const char*> allowed)
{
    if (!j.contains(section) || !j.at(section).is_object() || !j.at(section).contains(key))
        return;
    const auto& v = j.at(section).at(key);
    if (v.is_string())
        for (const char* a : allowed)
            if (v.get<std::string>() == a)
                return;
    std::string list;
    for (const char* a : allowed)
        list += (list.empty() ? "" : ", ") + std::string(a);
    throw invalid_input(std::string("config: ") + section + "." + key + " must be one of " + list + ", got " + v.dump());
}

} // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j)
{
    if (!j.is_object())
        throw invalid_input("config must be a JSON object");
    detail::reject_unknown_keys(j, nlohmann::json(RunConfig{}), "");
    detail::require_enum_value(j, "train", "scheduler", {"none", "halve_every"});
    detail::require_enum_value(j, "adapt", "mode", {"maml_first_order", "reptile"});
    detail::require_enum_value(j, "encoder", "backend", {"pretrained", "stub"});
    try {
        return j.get<RunConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw invalid_input(std::string("config: ") + e.what());
    }
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw invalid_input("cannot read config file '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw invalid_input("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

inline void write_run_config(const std::filesystem::path& path, const RunConfig& cfg)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw io_error("cannot write " + path.string());
    out << nlohmann::json(cfg).dump(2) << "\n";
}

} // namespace cdasr
