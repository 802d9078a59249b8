#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cdasr/core/error.hpp"
#include "cdasr/core/log.hpp"
#include "cdasr/data/dataset.hpp"
#include "cdasr/data/image_io.hpp"
#include "cdasr/encoder/encoder.hpp"
#include "cdasr/metrics/mmd.hpp"
#include "cdasr/metrics/tsne.hpp"

namespace cdasr {

struct EmbeddingPoint {
    double x = 0.0;
    double y = 0.0;
    std::string tag;
    std::string source;
};

struct TaggedEmbeddings {
    std::string tag;
    std::vector<SemanticEmbedding> embeddings;
    std::vector<std::string> sources;
};

struct DomainGapReport {
    std::vector<std::string> tags;
    std::vector<int> counts;
    Kernel kernel;
    // mmd_matrix[i][j] is the MMD between datasets i and j.
    std::vector<std::vector<double>> mmd_matrix;
    std::vector<EmbeddingPoint> coords;
    std::string reduction; // "tsne" or "pca"
    bool fallback = false; // true when t-SNE was infeasible

    // Two-set view: MMD between the first two datasets.
    double mmd() const { return mmd_matrix.size() > 1 ? mmd_matrix[0][1] : 0.0; }
    int n_a() const { return counts.empty() ? 0 : counts[0]; }
    int n_b() const { return counts.size() > 1 ? counts[1] : 0; }
};

inline DomainGapReport domain_gap_report(const std::vector<TaggedEmbeddings>& sets, std::uint64_t seed,
                                         const Kernel& kernel = Kernel::linear(), const TsneOptions& tsne = {})
{
    if (sets.empty())
        throw invalid_input("domain analysis needs at least one dataset");
    DomainGapReport r;
    r.kernel = kernel;
    std::size_t total = 0;
    for (const auto& s : sets) {
        if (s.embeddings.empty())
            throw empty_dataset_error("dataset '" + s.tag + "' has no embeddings");
        r.tags.push_back(s.tag);
        r.counts.push_back(static_cast<int>(s.embeddings.size()));
        total += s.embeddings.size();
    }
    const std::size_t k = sets.size();
    r.mmd_matrix.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            r.mmd_matrix[i][j] = mmd(sets[i].embeddings, sets[j].embeddings, kernel);

    const int d = sets.front().embeddings.front().dim();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(total), d);
    Eigen::Index row = 0;
    for (const auto& s : sets)
        for (const auto& e : s.embeddings) {
            if (e.dim() != d)
                throw invalid_input("embedding dimensions differ across datasets");
            for (int c = 0; c < d; ++c)
                x(row, c) = e.values[c];
            ++row;
        }
    Eigen::MatrixX2d y;
    TsneOptions opt = tsne;
    opt.seed = seed;
    if (tsne_feasible(total, opt.perplexity)) {
        y = tsne_2d(x, opt);
        r.reduction = "tsne";
    } else {
        log_warning("only " + std::to_string(total) + " points for perplexity " + std::to_string(opt.perplexity) +
                    "; using a principal-axes projection instead of t-SNE");
        y = pca_2d(x);
        r.reduction = "pca";
        r.fallback = true;
    }
    row = 0;
    for (const auto& s : sets)
        for (std::size_t i = 0; i < s.embeddings.size(); ++i, ++row)
            r.coords.push_back({y(row, 0), y(row, 1), s.tag, i < s.sources.size() ? s.sources[i] : std::string()});
    return r;
}

// Encodes every decodable image under each directory and reports pairwise
// MMD plus 2-D coordinates.
template <class T = float>
DomainGapReport export_embeddings_2d(const std::vector<std::pair<std::string, std::filesystem::path>>& datasets,
                                     const EncoderSpec& spec, std::uint64_t seed,
                                     const Kernel& kernel = Kernel::linear())
{
    const Encoder<T> enc(spec);
    std::vector<TaggedEmbeddings> sets;
    for (const auto& [tag, dir] : datasets) {
        TaggedEmbeddings s{tag, {}, {}};
        for (const auto& f : list_image_files(dir)) {
            try {
                s.embeddings.push_back(enc.encode(load_image(dir / f).template cast<T>()));
                s.sources.push_back(f.generic_string());
            } catch (const io_error& e) {
                log_warning(std::string("skipping ") + (dir / f).string() + ": " + e.what());
            }
        }
        if (s.embeddings.empty())
            throw empty_dataset_error("no decodable images under " + dir.string() + " (tag '" + tag + "')");
        sets.push_back(std::move(s));
    }
    return domain_gap_report(sets, seed, kernel);
}

} // namespace cdasr
