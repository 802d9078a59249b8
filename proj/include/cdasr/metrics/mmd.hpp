#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdasr/core/error.hpp"
#include "cdasr/encoder/embedding.hpp"

namespace cdasr {

enum class KernelKind { linear, rbf };

struct Kernel {
    KernelKind kind = KernelKind::linear;
    // RBF bandwidth; <= 0 selects the median heuristic over the pooled sample.
    double sigma = 0.0;

    static Kernel linear() { return {}; }
    static Kernel rbf(double sigma = 0.0) { return {KernelKind::rbf, sigma}; }

    std::string describe() const
    {
        return kind == KernelKind::linear ? "linear" : "rbf(" + std::to_string(sigma) + ")";
    }
};

namespace detail {

inline Eigen::MatrixXd stack_embeddings(const std::vector<SemanticEmbedding>& e)
{
    const int d = e.front().dim();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(e.size()), d);
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (e[i].dim() != d)
            throw invalid_input("mmd: embeddings have inconsistent dimensions");
        for (int j = 0; j < d; ++j)
            m(static_cast<Eigen::Index>(i), j) = e[i].values[j];
    }
    return m;
}

inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    const Eigen::VectorXd na = a.rowwise().squaredNorm(), nb = b.rowwise().squaredNorm();
    Eigen::MatrixXd d = (-2.0 * a * b.transpose()).colwise() + na;
    d.rowwise() += nb.transpose();
    return d.cwiseMax(0.0);
}

} // namespace detail

// Median of pairwise squared distances over the pooled sample, as a bandwidth.
inline double median_heuristic_sigma(const std::vector<SemanticEmbedding>& a, const std::vector<SemanticEmbedding>& b)
{
    std::vector<SemanticEmbedding> all(a);
    all.insert(all.end(), b.begin(), b.end());
    const Eigen::MatrixXd x = detail::stack_embeddings(all);
    const Eigen::MatrixXd d = detail::squared_distances(x, x);
    std::vector<double> v;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
        for (Eigen::Index j = i + 1; j < d.cols(); ++j)
            v.push_back(d(i, j));
    if (v.empty())
        return 1.0;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    const double med = v[v.size() / 2];
    return med > 0.0 ? std::sqrt(med) : 1.0;
}

inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Kernel& k)
{
    if (k.kind == KernelKind::linear)
        return a * b.transpose();
    const double s2 = 2.0 * k.sigma * k.sigma;
    return (-detail::squared_distances(a, b) / s2).array().exp().matrix();
}

// Squared MMD before flooring. Unbiased (U-statistic, diagonal excluded)
// within-set terms when both sets have >= 2 points; a singleton set has no
// off-diagonal pairs, so then the biased V-statistic is used for both.
inline double mmd_squared(const std::vector<SemanticEmbedding>& a, const std::vector<SemanticEmbedding>& b,
                          const Kernel& kernel = Kernel::linear())
{
    if (a.empty() || b.empty())
        throw invalid_input("mmd: both embedding sets must be non-empty");
    if (a.front().dim() != b.front().dim())
        throw invalid_input("mmd: embedding dimensions differ");
    Kernel k = kernel;
    if (k.kind == KernelKind::rbf && k.sigma <= 0.0)
        k.sigma = median_heuristic_sigma(a, b);
    const Eigen::MatrixXd xa = detail::stack_embeddings(a), xb = detail::stack_embeddings(b);
    const Eigen::MatrixXd kaa = kernel_matrix(xa, xa, k), kbb = kernel_matrix(xb, xb, k), kab = kernel_matrix(xa, xb, k);
    const double m = static_cast<double>(a.size()), n = static_cast<double>(b.size());
    const bool unbiased = a.size() > 1 && b.size() > 1;
    double taa, tbb;
    if (unbiased) {
        taa = (kaa.sum() - kaa.trace()) / (m * (m - 1));
        tbb = (kbb.sum() - kbb.trace()) / (n * (n - 1));
    } else {
        taa = kaa.sum() / (m * m);
        tbb = kbb.sum() / (n * n);
    }
    return taa + tbb - 2.0 * kab.sum() / (m * n);
}

inline double mmd(const std::vector<SemanticEmbedding>& a, const std::vector<SemanticEmbedding>& b,
                  const Kernel& kernel = Kernel::linear())
{
    return std::sqrt(std::max(0.0, mmd_squared(a, b, kernel)));
}

} // namespace cdasr
