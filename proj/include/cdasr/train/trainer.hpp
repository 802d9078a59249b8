#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdasr/core/error.hpp"
#include "cdasr/core/log.hpp"
#include "cdasr/core/random.hpp"
#include "cdasr/data/dataset.hpp"
#include "cdasr/encoder/encoder.hpp"
#include "cdasr/loss/losses.hpp"
#include "cdasr/model/network.hpp"
#include "cdasr/train/adam.hpp"
#include "cdasr/train/checkpoint.hpp"

namespace cdasr {

enum class SchedulerKind { none, halve_every };

NLOHMANN_JSON_SERIALIZE_ENUM(SchedulerKind, {{SchedulerKind::none, "none"}, {SchedulerKind::halve_every, "halve_every"}})

struct TrainConfig {
    int epochs = 50;
    // When positive, overrides epochs as the total number of optimizer steps.
    int steps = 0;
    int batch_size = 16;
    double learning_rate = 1e-4;
    SchedulerKind scheduler = SchedulerKind::halve_every;
    int halve_every = 200; // epochs
    std::uint64_t seed = 0;
    LossWeights weights;
    int patch_size = 48; // LR pixels
    double grad_clip = 0.0; // global-norm threshold, 0 = off
    int checkpoint_every = 0; // steps, 0 = only the final checkpoint

    void validate() const
    {
        if (epochs < 1)
            throw invalid_input("epochs must be >= 1");
        if (steps < 0)
            throw invalid_input("steps must be >= 0");
        if (batch_size < 1)
            throw invalid_input("batch_size must be >= 1");
        if (!(learning_rate > 0.0))
            throw invalid_input("learning_rate must be > 0");
        if (scheduler == SchedulerKind::halve_every && halve_every < 1)
            throw invalid_input("halve_every must be >= 1");
        if (patch_size < 1)
            throw invalid_input("patch_size must be >= 1");
        if (grad_clip < 0.0)
            throw invalid_input("grad_clip must be >= 0");
        if (checkpoint_every < 0)
            throw invalid_input("checkpoint_every must be >= 0");
        weights.validate();
    }
    bool operator==(const TrainConfig&) const = default;
};

// seed and weights are stored once at run-config level.
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, epochs, steps, batch_size, learning_rate, scheduler,
                                                halve_every, patch_size, grad_clip, checkpoint_every)

inline std::int64_t steps_per_epoch(std::size_t dataset_size, int batch_size)
{
    return std::max<std::int64_t>(1, (static_cast<std::int64_t>(dataset_size) + batch_size - 1) / batch_size);
}

inline std::int64_t total_steps(const TrainConfig& cfg, std::size_t dataset_size)
{
    return cfg.steps > 0 ? cfg.steps : cfg.epochs * steps_per_epoch(dataset_size, cfg.batch_size);
}

// Learning rate in effect during the given (0-based) epoch.
inline double scheduled_lr(const TrainConfig& cfg, std::int64_t epoch)
{
    if (cfg.scheduler == SchedulerKind::none)
        return cfg.learning_rate;
    return cfg.learning_rate * std::pow(0.5, static_cast<double>(epoch / cfg.halve_every));
}

struct StepRecord {
    std::int64_t step = 0; // 1-based index of the completed step
    std::int64_t epoch = 0;
    double lr = 0.0;
    LossReport loss;
};

class non_finite_loss_error : public numeric_error {
public:
    non_finite_loss_error(const std::string& what, nlohmann::json diag)
        : numeric_error(what), diagnostic(std::move(diag))
    {
    }
    nlohmann::json diagnostic;
};

template <class T>
struct TrainState {
    ParameterSet<T> params;
    OptimizerState<T> optimizer;
    std::int64_t step = 0; // completed steps
};

template <class T>
struct TrainResult {
    ParameterSet<T> params;
    OptimizerState<T> optimizer;
    std::int64_t step = 0;
    std::vector<StepRecord> log;
};

// Called after every optimizer step with the record and the updated state.
template <class T>
using StepObserver = std::function<void(const StepRecord&, const TrainState<T>&)>;

// Loss and parameter gradients for one batch, averaged over its pairs.
// Gradients accumulate into params.grads.
template <class T>
LossReport batch_loss_and_grad(ParameterSet<T>& params, const NetworkConfig& net, const std::vector<ImagePair>& batch,
                               const LossWeights& w, const LossContext<T>& ctx, bool want_grad = true)
{
    LossReport mean;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& pair : batch) {
        const Image<T> lr = pair.lr.template cast<T>();
        const Image<T> hr = pair.hr.template cast<T>();
        const SemanticEmbedding emb = ctx.encoder->encode(lr);
        ForwardTape<T> tape;
        const Image<T> out = forward(params, net, lr, emb, want_grad ? &tape : nullptr);
        Tensor3<T> g;
        const LossReport r = total_loss(out, hr, w, ctx, want_grad ? &g : nullptr);
        mean.total += r.total * inv;
        mean.pixel += r.pixel * inv;
        mean.perceptual += r.perceptual * inv;
        mean.semantic += r.semantic * inv;
        if (want_grad) {
            g *= static_cast<T>(inv);
            backward(params, net, tape, g);
        }
    }
    return mean;
}

// Source-domain training: per step, sample a batch, encode the LR inputs,
// run the network, compute the weighted loss and take one Adam step on all
// network parameters. The learning rate follows the scheduler per epoch.
// Passing `resume` continues from a saved state; the batch sequence depends
// only on (seed, step), so resumed and uninterrupted runs coincide.
template <class T>
TrainResult<T> train(const PairedDataset& ds, const TrainConfig& cfg, const NetworkConfig& net,
                     const Encoder<T>& encoder, const FeatureExtractor<T>& features,
                     std::optional<std::type_identity_t<TrainState<T>>> resume = std::nullopt,
                     const std::type_identity_t<StepObserver<T>>& observer = {})
{
    cfg.validate();
    net.validate();
    if (ds.empty())
        throw empty_dataset_error("training dataset is empty");
    if (ds.scale != net.scale)
        throw invalid_input("dataset scale " + std::to_string(ds.scale) + " does not match network scale " +
                            std::to_string(net.scale));
    if (encoder.embed_dim() != net.clip_dim)
        throw invalid_input("encoder dimension " + std::to_string(encoder.embed_dim()) +
                            " does not match network clip_dim " + std::to_string(net.clip_dim));
    if (cfg.patch_size > ds.min_lr_side())
        log_info("patch size " + std::to_string(cfg.patch_size) + " clipped to smallest LR side " +
                 std::to_string(ds.min_lr_side()));

    TrainState<T> st;
    if (resume) {
        st = std::move(*resume);
        const auto fresh = init_network<T>(net, cfg.seed);
        if (!st.params.values.same_layout(fresh.values) || !st.optimizer.matches(st.params))
            throw invalid_input("resume state does not match the network config");
    } else {
        st.params = init_network<T>(net, cfg.seed);
        st.optimizer = OptimizerState<T>::fresh(st.params);
    }

    const LossContext<T> ctx{&encoder, &features};
    const std::int64_t per_epoch = steps_per_epoch(ds.size(), cfg.batch_size);
    const std::int64_t last = total_steps(cfg, ds.size());
    TrainResult<T> result;
    for (std::int64_t step = st.step; step < last; ++step) {
        const std::int64_t epoch = step / per_epoch;
        const double lr = scheduled_lr(cfg, epoch);
        const auto specs = sample_patch_specs(ds, std::min(cfg.patch_size, ds.min_lr_side()), cfg.batch_size,
                                              mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));
        std::vector<ImagePair> batch;
        for (const auto& s : specs)
            batch.push_back(extract_patch(ds, s, std::min(cfg.patch_size, ds.min_lr_side())));

        st.params.zero_grad();
        const LossReport rep = batch_loss_and_grad(st.params, net, batch, cfg.weights, ctx);
        const std::string bad_grad = st.params.grads.first_non_finite();
        if (!rep.finite() || !bad_grad.empty()) {
            nlohmann::json diag = {{"step", step},
                                   {"epoch", epoch},
                                   {"lr", lr},
                                   {"batch_indices", nlohmann::json::array()},
                                   {"total", rep.total},
                                   {"pixel", rep.pixel},
                                   {"perceptual", rep.perceptual},
                                   {"semantic", rep.semantic},
                                   {"non_finite_gradient", bad_grad}};
            for (const auto& s : specs)
                diag["batch_indices"].push_back(s.pair_index);
            throw non_finite_loss_error("non-finite loss or gradient at step " + std::to_string(step), diag);
        }
        if (cfg.grad_clip > 0.0)
            clip_gradients(st.params, cfg.grad_clip);
        optimizer_step(st.params, st.optimizer, lr);
        st.step = step + 1;

        StepRecord rec{st.step, epoch, lr, rep};
        result.log.push_back(rec);
        if (observer)
            observer(rec, st);
    }
    result.params = std::move(st.params);
    result.optimizer = std::move(st.optimizer);
    result.step = st.step;
    return result;
}

} // namespace cdasr
