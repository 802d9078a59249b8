#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "cdasr/core/error.hpp"
#include "cdasr/core/random.hpp"

namespace cdasr {

struct TsneOptions {
    double perplexity = 30.0;
    int iterations = 1000;
    int exaggeration_iterations = 250;
    double exaggeration = 12.0;
    double learning_rate = 200.0;
    std::uint64_t seed = 0;
};

// Exact t-SNE needs n - 1 >= 3 * perplexity neighbours for a meaningful
// bandwidth search.
inline bool tsne_feasible(std::size_t n, double perplexity) { return static_cast<double>(n) - 1.0 >= 3.0 * perplexity; }

namespace detail {

// Row-conditional affinities with per-point bandwidths matched to the target
// perplexity by bisection on the precision beta.
inline Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& d2, double perplexity)
{
    const Eigen::Index n = d2.rows();
    const double target = std::log(perplexity);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        Eigen::VectorXd row(n);
        for (int it = 0; it < 200; ++it) {
            double sum = 0.0, weighted = 0.0;
            double dmin = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < n; ++j)
                if (j != i)
                    dmin = std::min(dmin, d2(i, j));
            for (Eigen::Index j = 0; j < n; ++j) {
                row(j) = j == i ? 0.0 : std::exp(-beta * (d2(i, j) - dmin));
                sum += row(j);
                weighted += row(j) * (d2(i, j) - dmin);
            }
            const double entropy = std::log(sum) + beta * weighted / sum;
            row /= sum;
            if (std::abs(entropy - target) < 1e-5)
                break;
            if (entropy > target) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        p.row(i) = row.transpose();
    }
    return p;
}

} // namespace detail

// Exact (O(n^2)) t-SNE to two dimensions. Deterministic for a given seed.
inline Eigen::MatrixX2d tsne_2d(const Eigen::MatrixXd& x, const TsneOptions& opt = {})
{
    const Eigen::Index n = x.rows();
    if (!tsne_feasible(static_cast<std::size_t>(n), opt.perplexity))
        throw invalid_input("t-SNE needs at least " + std::to_string(static_cast<int>(3 * opt.perplexity) + 1) +
                            " points for perplexity " + std::to_string(opt.perplexity));
    const Eigen::VectorXd sq = x.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = ((-2.0 * x * x.transpose()).colwise() + sq).rowwise() + sq.transpose();
    d2 = d2.cwiseMax(0.0);
    Eigen::MatrixXd p = detail::conditional_affinities(d2, opt.perplexity);
    p = (p + p.transpose()) / (2.0 * static_cast<double>(n));
    p = p.cwiseMax(1e-12);

    Rng rng(mix_seed(opt.seed, 0x74736E65));
    Eigen::MatrixX2d y(n, 2), velocity = Eigen::MatrixX2d::Zero(n, 2), gains = Eigen::MatrixX2d::Ones(n, 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int c = 0; c < 2; ++c)
            y(i, c) = 1e-4 * rng.normal();

    Eigen::MatrixXd num(n, n);
    for (int it = 0; it < opt.iterations; ++it) {
        const double exag = it < opt.exaggeration_iterations ? opt.exaggeration : 1.0;
        const double momentum = it < opt.exaggeration_iterations ? 0.5 : 0.8;
        const Eigen::VectorXd ysq = y.rowwise().squaredNorm();
        num = ((-2.0 * y * y.transpose()).colwise() + ysq).rowwise() + ysq.transpose();
        num = (1.0 + num.array()).inverse().matrix();
        num.diagonal().setZero();
        const double z = num.sum();
        // dC/dy_i = 4 sum_j (exag p_ij - q_ij) num_ij (y_i - y_j)
        const Eigen::MatrixXd w = ((exag * p).array() - num.array() / z).matrix().cwiseProduct(num);
        Eigen::MatrixX2d grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int c = 0; c < 2; ++c) {
                const bool same_sign = (grad(i, c) > 0) == (velocity(i, c) > 0);
                gains(i, c) = std::max(0.01, same_sign ? gains(i, c) * 0.8 : gains(i, c) + 0.2);
                velocity(i, c) = momentum * velocity(i, c) - opt.learning_rate * gains(i, c) * grad(i, c);
                y(i, c) += velocity(i, c);
            }
        y.rowwise() -= y.colwise().mean();
    }
    return y;
}

// Projection onto the two leading principal axes. Axis signs are fixed so
// that each axis' largest-magnitude loading is positive.
inline Eigen::MatrixX2d pca_2d(const Eigen::MatrixXd& x)
{
    const Eigen::Index n = x.rows();
    if (n == 0)
        throw invalid_input("pca: no points");
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    Eigen::MatrixX2d out = Eigen::MatrixX2d::Zero(n, 2);
    if (n == 1)
        return out;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const Eigen::MatrixXd& v = svd.matrixV();
    for (int c = 0; c < 2 && c < v.cols(); ++c) {
        Eigen::VectorXd axis = v.col(c);
        Eigen::Index arg;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis(arg) < 0)
            axis = -axis;
        out.col(c) = centered * axis;
    }
    return out;
}

} // namespace cdasr
