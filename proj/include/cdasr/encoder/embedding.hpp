#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cdasr/core/error.hpp"
#include "cdasr/core/log.hpp"

namespace cdasr {

struct SemanticEmbedding {
    std::vector<double> values;
    std::string encoder_id;

    int dim() const noexcept { return static_cast<int>(values.size()); }
    double norm() const
    {
        double s = 0.0;
        for (double v : values)
            s += v * v;
        return std::sqrt(s);
    }
};

template <class T>
std::vector<T> embedding_values(const SemanticEmbedding& e)
{
    return std::vector<T>(e.values.begin(), e.values.end());
}

inline double cosine_similarity(const SemanticEmbedding& a, const SemanticEmbedding& b)
{
    if (a.dim() != b.dim())
        throw invalid_input("cosine_similarity: dimension mismatch");
    double dot = 0.0;
    for (int i = 0; i < a.dim(); ++i)
        dot += a.values[i] * b.values[i];
    return dot / (a.norm() * b.norm());
}

// Result of dividing a raw encoder output by its L2 norm. A zero (or
// non-finite) raw vector maps to the first basis vector; `degenerate` marks
// that case so the backward pass can treat it as constant.
struct NormalizedEmbedding {
    std::vector<double> unit;
    double raw_norm = 0.0;
    bool degenerate = false;
};

template <class T>
NormalizedEmbedding normalize_embedding(std::span<const T> raw)
{
    if (raw.empty())
        throw invalid_input("normalize_embedding: empty vector");
    NormalizedEmbedding out;
    double s = 0.0;
    for (T v : raw)
        s += static_cast<double>(v) * static_cast<double>(v);
    out.raw_norm = std::sqrt(s);
    out.unit.assign(raw.size(), 0.0);
    if (!(out.raw_norm > 0.0) || !std::isfinite(out.raw_norm)) {
        log_warning("encoder produced a zero-norm embedding; falling back to the first basis vector");
        out.unit[0] = 1.0;
        out.degenerate = true;
        return out;
    }
    for (std::size_t i = 0; i < raw.size(); ++i)
        out.unit[i] = static_cast<double>(raw[i]) / out.raw_norm;
    return out;
}

// Vector-Jacobian product of v = r / |r|: given dL/dv, returns dL/dr.
inline std::vector<double> normalize_embedding_vjp(const NormalizedEmbedding& n, std::span<const double> d_unit)
{
    if (d_unit.size() != n.unit.size())
        throw invalid_input("normalize_embedding_vjp: dimension mismatch");
    std::vector<double> d_raw(n.unit.size(), 0.0);
    if (n.degenerate)
        return d_raw;
    double proj = 0.0;
    for (std::size_t i = 0; i < n.unit.size(); ++i)
        proj += n.unit[i] * d_unit[i];
    for (std::size_t i = 0; i < n.unit.size(); ++i)
        d_raw[i] = (d_unit[i] - n.unit[i] * proj) / n.raw_norm;
    return d_raw;
}

} // namespace cdasr
