#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdasr/core/array_set.hpp"
#include "cdasr/core/error.hpp"
#include "cdasr/core/random.hpp"
#include "cdasr/data/dataset.hpp"
#include "cdasr/encoder/encoder.hpp"
#include "cdasr/loss/losses.hpp"
#include "cdasr/model/network.hpp"
#include "cdasr/train/trainer.hpp"

namespace cdasr {

enum class MetaMode { maml_first_order, reptile };

NLOHMANN_JSON_SERIALIZE_ENUM(MetaMode, {{MetaMode::maml_first_order, "maml_first_order"}, {MetaMode::reptile, "reptile"}})

struct AdaptConfig {
    int episodes = 20;
    int shots = default_shots;
    int query_size = 5;
    int inner_steps = 1;
    double alpha_init = 1e-4;
    double gamma = 1e-5;
    int batch_size = 4; // query pairs per meta-update
    std::uint64_t seed = 0;
    MetaMode mode = MetaMode::maml_first_order;
    double alpha_max = 1e-2;
    double reptile_fraction = 0.1;
    int patch_size = 48; // LR crop per episode pair; 0 uses whole images
    LossWeights weights;

    void validate() const
    {
        if (episodes < 0)
            throw invalid_input("episodes must be >= 0");
        if (shots < 1 || query_size < 1 || inner_steps < 1 || batch_size < 1)
            throw invalid_input("shots, query_size, inner_steps and batch_size must be >= 1");
        if (alpha_init < 0.0 || gamma < 0.0 || !(alpha_max > 0.0))
            throw invalid_input("alpha_init and gamma must be >= 0, alpha_max > 0");
        if (reptile_fraction < 0.0 || reptile_fraction > 1.0)
            throw invalid_input("reptile_fraction must lie in [0, 1]");
        if (patch_size < 0)
            throw invalid_input("patch_size must be >= 0");
        weights.validate();
    }
    bool operator==(const AdaptConfig&) const = default;
};

// seed and weights are stored once at run-config level.
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdaptConfig, episodes, shots, query_size, inner_steps, alpha_init, gamma,
                                                batch_size, mode, alpha_max, reptile_fraction, patch_size)

// Learned per-scalar inner step sizes plus the outer-loop settings.
template <class T>
struct MetaLearnerState {
    ArraySet<T> alphas;
    double gamma = 1e-5;
    MetaMode mode = MetaMode::maml_first_order;
    double alpha_max = 1e-2;
    double reptile_fraction = 0.1;

    static MetaLearnerState fresh(const ParameterSet<T>& p, const AdaptConfig& cfg)
    {
        MetaLearnerState s;
        s.alphas = p.values.zeros_like();
        s.alphas.fill(static_cast<T>(std::clamp(cfg.alpha_init, 0.0, cfg.alpha_max)));
        s.gamma = cfg.gamma;
        s.mode = cfg.mode;
        s.alpha_max = cfg.alpha_max;
        s.reptile_fraction = cfg.reptile_fraction;
        return s;
    }

    double mean_alpha() const
    {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& a : alphas) {
            for (T v : a.data)
                s += v;
            n += a.data.size();
        }
        return n ? s / static_cast<double>(n) : 0.0;
    }
};

// Evaluates a loss at p.values, writes its gradient into p.grads (which the
// caller has zeroed) and returns the loss value.
template <class T>
using GradientOracle = std::function<double(ParameterSet<T>&)>;

template <class T>
struct InnerTrace {
    double loss_before = 0.0;
    // Sum of the support gradients over all inner steps; the first-order
    // derivative of the adapted parameters w.r.t. alpha is minus this.
    ArraySet<T> support_grad_sum;
};

// theta' = theta - alpha (elementwise) * grad of the support loss, repeated
// inner_steps times. The input is left untouched.
template <class T>
ParameterSet<T> inner_adapt(const ParameterSet<T>& params, const MetaLearnerState<T>& state,
                            const GradientOracle<T>& support, int inner_steps = 1, InnerTrace<T>* trace = nullptr)
{
    if (inner_steps < 1)
        throw invalid_input("inner_steps must be >= 1");
    if (!state.alphas.same_layout(params.values))
        throw invalid_input("step sizes do not cover the parameter set");
    ParameterSet<T> work = ParameterSet<T>::from_values(params.values);
    if (trace)
        trace->support_grad_sum = params.values.zeros_like();
    for (int s = 0; s < inner_steps; ++s) {
        work.zero_grad();
        const double loss = support(work);
        if (s == 0 && trace)
            trace->loss_before = loss;
        require_finite_gradients(work);
        for (std::size_t k = 0; k < work.values.size(); ++k) {
            auto& w = work.values.at(k).data;
            const auto& g = work.grads.at(k).data;
            const auto& a = state.alphas.at(k).data;
            for (std::size_t i = 0; i < w.size(); ++i)
                w[i] -= a[i] * g[i];
            if (trace) {
                auto& acc = trace->support_grad_sum.at(k).data;
                for (std::size_t i = 0; i < w.size(); ++i)
                    acc[i] += g[i];
            }
        }
    }
    work.zero_grad();
    return work;
}

// Outer update. First-order MAML: with theta' = theta - alpha * g_s,
// dL_q(theta')/dalpha = -g_s * g_q once the second-order term (the
// dependence of g_s on theta) is dropped, so
//   alpha <- clamp(alpha + gamma * g_s * g_q, 0, alpha_max).
// `support_grad_sum` holds g_s, `query_grads` holds g_q at theta'.
// Reptile: alpha stays fixed and `params` moves toward `adapted`.
template <class T>
void meta_update(MetaLearnerState<T>& state, ParameterSet<T>& params, const ParameterSet<T>& adapted,
                 const ArraySet<T>& support_grad_sum, const ArraySet<T>& query_grads)
{
    if (state.mode == MetaMode::reptile) {
        if (!adapted.values.same_layout(params.values))
            throw invalid_input("reptile update: adapted parameters do not match");
        const double eps = state.reptile_fraction;
        for (std::size_t k = 0; k < params.values.size(); ++k) {
            auto& w = params.values.at(k).data;
            const auto& a = adapted.values.at(k).data;
            for (std::size_t i = 0; i < w.size(); ++i)
                w[i] = static_cast<T>(w[i] + eps * (a[i] - w[i]));
        }
        return;
    }
    if (!support_grad_sum.same_layout(state.alphas) || !query_grads.same_layout(state.alphas))
        throw invalid_input("meta update: gradient layout does not match the step sizes");
    if (state.gamma == 0.0)
        return;
    for (std::size_t k = 0; k < state.alphas.size(); ++k) {
        auto& a = state.alphas.at(k).data;
        const auto& gs = support_grad_sum.at(k).data;
        const auto& gq = query_grads.at(k).data;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double hyper_grad = -static_cast<double>(gs[i]) * static_cast<double>(gq[i]);
            a[i] = static_cast<T>(std::clamp(a[i] - state.gamma * hyper_grad, 0.0, state.alpha_max));
        }
    }
}

struct EpisodeRecord {
    int episode = 0;
    double support_loss_pre = 0.0;
    double support_loss_post = 0.0;
    double query_loss = 0.0;
    double mean_alpha = 0.0;
};

// One episode's data: a support oracle and one oracle per query batch.
template <class T>
struct EpisodeTask {
    GradientOracle<T> support;
    std::vector<GradientOracle<T>> query_batches;
};

template <class T>
struct AdaptResult {
    ParameterSet<T> params;
    MetaLearnerState<T> state;
    std::vector<EpisodeRecord> log;
};

// Episodic loop shared by the SR pipeline and toy problems. In first-order
// MAML mode the base parameters stay fixed and only alpha learns; in Reptile
// mode the base parameters move each episode. The returned parameters are the
// base adapted once more on the final episode's support set; with zero
// episodes they are the input, unchanged.
template <class T>
AdaptResult<T> run_episodes(const ParameterSet<T>& params, MetaLearnerState<T> state, int episodes, int inner_steps,
                            const std::function<EpisodeTask<T>(int)>& make_task,
                            const std::function<void(const EpisodeRecord&)>& observer = {})
{
    AdaptResult<T> res;
    ParameterSet<T> base = ParameterSet<T>::from_values(params.values);
    GradientOracle<T> last_support;
    for (int e = 0; e < episodes; ++e) {
        EpisodeTask<T> task = make_task(e);
        if (task.query_batches.empty())
            throw invalid_input("episode has no query batches");
        InnerTrace<T> trace;
        const ParameterSet<T> adapted = inner_adapt(base, state, task.support, inner_steps, &trace);

        EpisodeRecord rec;
        rec.episode = e;
        rec.support_loss_pre = trace.loss_before;
        {
            ParameterSet<T> probe = ParameterSet<T>::from_values(adapted.values);
            rec.support_loss_post = task.support(probe);
        }
        double qsum = 0.0;
        for (const auto& q : task.query_batches) {
            ParameterSet<T> at = ParameterSet<T>::from_values(adapted.values);
            qsum += q(at);
            require_finite_gradients(at);
            meta_update(state, base, adapted, trace.support_grad_sum, at.grads);
            if (state.mode == MetaMode::reptile)
                break; // one move per episode
        }
        rec.query_loss = qsum / static_cast<double>(state.mode == MetaMode::reptile ? 1 : task.query_batches.size());
        rec.mean_alpha = state.mean_alpha();
        res.log.push_back(rec);
        if (observer)
            observer(rec);
        last_support = std::move(task.support);
    }
    res.params = last_support ? inner_adapt(base, state, last_support, inner_steps) : std::move(base);
    res.state = std::move(state);
    return res;
}

template <class T>
GradientOracle<T> pair_oracle(const NetworkConfig& net, std::vector<ImagePair> pairs, const LossWeights& w,
                              const LossContext<T>& ctx)
{
    return [net, pairs = std::move(pairs), w, ctx](ParameterSet<T>& p) {
        return batch_loss_and_grad(p, net, pairs, w, ctx).total;
    };
}

// Few-shot adaptation of a trained network to a target dataset.
template <class T>
AdaptResult<T> adapt(const ParameterSet<T>& params, const NetworkConfig& net, const PairedDataset& target,
                     const AdaptConfig& cfg, const Encoder<T>& encoder, const FeatureExtractor<T>& features,
                     const std::function<void(const EpisodeRecord&)>& observer = {})
{
    cfg.validate();
    if (target.scale != net.scale)
        throw invalid_input("target dataset scale " + std::to_string(target.scale) + " does not match network scale " +
                            std::to_string(net.scale));
    const std::size_t need = static_cast<std::size_t>(cfg.shots) + static_cast<std::size_t>(cfg.query_size);
    if (target.size() < need)
        throw invalid_input("adaptation needs " + std::to_string(need) + " pairs (shots + query) but the dataset has " +
                            std::to_string(target.size()));
    const LossContext<T> ctx{&encoder, &features};
    const int patch = cfg.patch_size > 0 ? std::min(cfg.patch_size, target.min_lr_side()) : 0;

    auto crop_pairs = [&](const std::vector<ImagePair>& pairs, std::uint64_t seed) {
        if (patch == 0)
            return pairs;
        Rng rng(seed);
        std::vector<ImagePair> out;
        for (const auto& p : pairs) {
            const int y = static_cast<int>(rng.index(p.lr.height() - patch + 1));
            const int x = static_cast<int>(rng.index(p.lr.width() - patch + 1));
            ImagePair c;
            c.name = p.name;
            c.lr = crop(p.lr, y, x, patch, patch);
            c.hr = crop(p.hr, y * target.scale, x * target.scale, patch * target.scale, patch * target.scale);
            out.push_back(std::move(c));
        }
        return out;
    };

    auto make_task = [&](int e) {
        const std::uint64_t es = mix_seed(cfg.seed, static_cast<std::uint64_t>(e));
        const EpisodeSplit split = sample_episode(target, cfg.shots, cfg.query_size, es);
        EpisodeTask<T> task;
        task.support = pair_oracle<T>(net, crop_pairs(split.support, mix_seed(es, 1)), cfg.weights, ctx);
        const auto query = crop_pairs(split.query, mix_seed(es, 2));
        for (std::size_t i = 0; i < query.size(); i += cfg.batch_size) {
            const auto end = query.begin() + static_cast<std::ptrdiff_t>(std::min(query.size(), i + cfg.batch_size));
            task.query_batches.push_back(
                pair_oracle<T>(net, std::vector<ImagePair>(query.begin() + static_cast<std::ptrdiff_t>(i), end),
                               cfg.weights, ctx));
        }
        return task;
    };
    return run_episodes(params, MetaLearnerState<T>::fresh(params, cfg), cfg.episodes, cfg.inner_steps,
                        std::function<EpisodeTask<T>(int)>(make_task), observer);
}

} // namespace cdasr
