#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "cdasr/core/array_set.hpp"
#include "cdasr/core/error.hpp"

namespace cdasr {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
struct OptimizerState {
    ArraySet<T> first_moment;
    ArraySet<T> second_moment;
    std::int64_t step = 0;
    AdamHyper hyper;

    static OptimizerState fresh(const ParameterSet<T>& p)
    {
        OptimizerState s;
        s.first_moment = p.values.zeros_like();
        s.second_moment = p.values.zeros_like();
        return s;
    }

    bool matches(const ParameterSet<T>& p) const
    {
        return first_moment.same_layout(p.values) && second_moment.same_layout(p.values);
    }
};

// Throws numeric_error naming the first parameter with a non-finite gradient.
template <class T>
void require_finite_gradients(const ParameterSet<T>& p)
{
    if (const std::string bad = p.grads.first_non_finite(); !bad.empty())
        throw numeric_error("non-finite gradient in parameter '" + bad + "'");
}

template <class T>
double gradient_norm(const ParameterSet<T>& p)
{
    double s = 0.0;
    for (const auto& g : p.grads)
        for (T v : g.data)
            s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
}

// Rescales gradients so their global L2 norm is at most max_norm.
template <class T>
void clip_gradients(ParameterSet<T>& p, double max_norm)
{
    const double n = gradient_norm(p);
    if (max_norm <= 0.0 || n <= max_norm)
        return;
    const T f = static_cast<T>(max_norm / n);
    for (auto& g : p.grads)
        for (T& v : g.data)
            v *= f;
}

// One bias-corrected Adam update of every parameter from its gradient.
template <class T>
void optimizer_step(ParameterSet<T>& p, OptimizerState<T>& s, double lr)
{
    if (!s.matches(p))
        throw invalid_input("optimizer state does not match the parameter layout");
    require_finite_gradients(p);
    ++s.step;
    const double b1 = s.hyper.beta1, b2 = s.hyper.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
    for (std::size_t k = 0; k < p.values.size(); ++k) {
        auto& w = p.values.at(k).data;
        const auto& g = p.grads.at(k).data;
        auto& m = s.first_moment.at(k).data;
        auto& v = s.second_moment.at(k).data;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            w[i] = static_cast<T>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + s.hyper.eps));
        }
    }
}

} // namespace cdasr
