#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdasr/core/error.hpp"
#include "cdasr/core/log.hpp"
#include "cdasr/core/random.hpp"
#include "cdasr/data/image.hpp"
#include "cdasr/data/image_io.hpp"
#include "cdasr/data/resample.hpp"

namespace cdasr {

struct ImagePair {
    Image<float> lr;
    Image<float> hr;
    std::string name; // path relative to the dataset root
};

// Immutable after construction; hr sides are exactly scale x lr sides.
struct PairedDataset {
    std::vector<ImagePair> pairs;
    int scale = 4;
    std::string domain_tag;

    std::size_t size() const noexcept { return pairs.size(); }
    bool empty() const noexcept { return pairs.empty(); }

    int min_lr_side() const
    {
        int m = 0;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const int s = std::min(pairs[i].lr.height(), pairs[i].lr.width());
            m = i == 0 ? s : std::min(m, s);
        }
        return m;
    }
};

struct DatasetBuild {
    PairedDataset dataset;
    std::size_t skipped = 0;
    std::vector<std::string> skipped_files;
};

inline ImagePair make_pair(const Image<float>& hr_full, int scale, std::string name = {})
{
    ImagePair p;
    p.hr = crop_to_multiple(hr_full, scale);
    p.lr = clamp01(bicubic_downsample(p.hr, scale));
    p.name = std::move(name);
    return p;
}

inline PairedDataset make_paired_dataset(const std::vector<Image<float>>& hr_images, int scale,
                                         std::string domain_tag = {})
{
    require_supported_scale(scale);
    PairedDataset ds;
    ds.scale = scale;
    ds.domain_tag = std::move(domain_tag);
    for (std::size_t i = 0; i < hr_images.size(); ++i)
        ds.pairs.push_back(make_pair(hr_images[i], scale, hr_images[i].source_path.value_or("image_" + std::to_string(i))));
    return ds;
}

// Image files under root (recursive), sorted by relative path.
inline std::vector<std::filesystem::path> list_image_files(const std::filesystem::path& root)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(root))
        throw invalid_input("not a directory: '" + root.string() + "'");
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file() && has_image_extension(entry.path()))
            files.push_back(fs::relative(entry.path(), root));
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });
    return files;
}

// One pair per decodable HR image; undecodable files are skipped and counted.
inline DatasetBuild build_dataset(const std::filesystem::path& hr_dir, int scale, std::string domain_tag = {})
{
    require_supported_scale(scale);
    DatasetBuild out;
    out.dataset.scale = scale;
    out.dataset.domain_tag = domain_tag.empty() ? hr_dir.filename().string() : std::move(domain_tag);
    const auto files = list_image_files(hr_dir);
    for (const auto& rel : files) {
        Image<float> hr;
        try {
            hr = load_image(hr_dir / rel);
        } catch (const io_error& e) {
            log_warning(std::string("skipping ") + e.what());
            ++out.skipped;
            out.skipped_files.push_back(rel.generic_string());
            continue;
        }
        if (hr.height() < scale || hr.width() < scale) {
            log_warning("skipping '" + rel.generic_string() + "': smaller than the scale factor");
            ++out.skipped;
            out.skipped_files.push_back(rel.generic_string());
            continue;
        }
        out.dataset.pairs.push_back(make_pair(hr, scale, rel.generic_string()));
    }
    if (out.dataset.empty())
        throw empty_dataset_error("no decodable images in '" + hr_dir.string() + "'");
    return out;
}

// Pairs HR files with pre-degraded LR files of the same relative path
// (extension may differ).
inline DatasetBuild build_dataset_from_pairs(const std::filesystem::path& hr_dir, const std::filesystem::path& lr_dir,
                                             int scale, std::string domain_tag = {})
{
    namespace fs = std::filesystem;
    require_supported_scale(scale);
    if (!fs::is_directory(lr_dir))
        throw invalid_input("not a directory: '" + lr_dir.string() + "'");
    DatasetBuild out;
    out.dataset.scale = scale;
    out.dataset.domain_tag = domain_tag.empty() ? hr_dir.filename().string() : std::move(domain_tag);
    std::vector<fs::path> lr_files = list_image_files(lr_dir);
    for (const auto& rel : list_image_files(hr_dir)) {
        auto stem = rel;
        stem.replace_extension();
        auto match = std::find_if(lr_files.begin(), lr_files.end(), [&](const fs::path& p) {
            auto s = p;
            s.replace_extension();
            return s == stem;
        });
        try {
            if (match == lr_files.end())
                throw io_error("no LR counterpart for '" + rel.generic_string() + "'");
            ImagePair p;
            p.hr = crop_to_multiple(load_image(hr_dir / rel), scale);
            p.lr = load_image(lr_dir / *match);
            p.name = rel.generic_string();
            if (p.hr.height() != scale * p.lr.height() || p.hr.width() != scale * p.lr.width())
                throw io_error("LR/HR size mismatch for '" + rel.generic_string() + "'");
            out.dataset.pairs.push_back(std::move(p));
        } catch (const io_error& e) {
            log_warning(std::string("skipping ") + e.what());
            ++out.skipped;
            out.skipped_files.push_back(rel.generic_string());
        }
    }
    if (out.dataset.empty())
        throw empty_dataset_error("no usable pairs in '" + hr_dir.string() + "'");
    return out;
}

inline nlohmann::json dataset_manifest(const DatasetBuild& build, const std::string& lr_prefix = {})
{
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : build.dataset.pairs) {
        auto lr_name = std::filesystem::path(p.name).replace_extension(".png").generic_string();
        pairs.push_back({{"hr", p.name},
                         {"lr", lr_prefix + lr_name},
                         {"hr_size", {p.hr.height(), p.hr.width()}},
                         {"lr_size", {p.lr.height(), p.lr.width()}}});
    }
    return {{"scale", build.dataset.scale},
            {"domain_tag", build.dataset.domain_tag},
            {"skipped", build.skipped},
            {"skipped_files", build.skipped_files},
            {"pairs", pairs}};
}

// Writes <out>/X<scale>/<relative path>.png for every LR image plus
// <out>/X<scale>/manifest.json. Returns the X<scale> directory.
inline std::filesystem::path write_degraded_set(const DatasetBuild& build, const std::filesystem::path& out_root)
{
    namespace fs = std::filesystem;
    const fs::path dir = out_root / ("X" + std::to_string(build.dataset.scale));
    fs::create_directories(dir);
    for (const auto& p : build.dataset.pairs)
        save_image(p.lr, dir / fs::path(p.name).replace_extension(".png"));
    std::ofstream manifest(dir / "manifest.json");
    if (!manifest)
        throw io_error("cannot write manifest in '" + dir.string() + "'");
    manifest << dataset_manifest(build).dump(2) << '\n';
    return dir;
}

// ---------------------------------------------------------------------------
// Sampling

struct PatchSpec {
    std::size_t pair_index = 0;
    int y = 0; // LR top-left
    int x = 0;
    bool flip = false;
    int rotation = 0; // quarter turns, counter-clockwise

    friend bool operator==(const PatchSpec&, const PatchSpec&) = default;
};

inline std::vector<PatchSpec> sample_patch_specs(const PairedDataset& ds, int patch, int batch, std::uint64_t seed)
{
    if (ds.empty())
        throw empty_dataset_error("cannot sample patches from an empty dataset");
    if (batch < 1)
        throw invalid_input("batch must be >= 1");
    if (patch < 1 || patch > ds.min_lr_side())
        throw invalid_input("patch " + std::to_string(patch) + " larger than the smallest LR image side "
                            + std::to_string(ds.min_lr_side()));
    Rng rng(mix_seed(seed, 0x7061746368ULL));
    std::vector<PatchSpec> specs(batch);
    for (auto& s : specs) {
        s.pair_index = rng.index(ds.size());
        const auto& lr = ds.pairs[s.pair_index].lr;
        s.y = static_cast<int>(rng.index(lr.height() - patch + 1));
        s.x = static_cast<int>(rng.index(lr.width() - patch + 1));
        s.flip = rng.coin();
        s.rotation = static_cast<int>(rng.index(4));
    }
    return specs;
}

inline ImagePair extract_patch(const PairedDataset& ds, const PatchSpec& s, int patch)
{
    const auto& src = ds.pairs.at(s.pair_index);
    ImagePair out;
    out.name = src.name;
    out.lr = crop(src.lr, s.y, s.x, patch, patch);
    out.hr = crop(src.hr, s.y * ds.scale, s.x * ds.scale, patch * ds.scale, patch * ds.scale);
    if (s.flip) {
        out.lr = flip_horizontal(out.lr);
        out.hr = flip_horizontal(out.hr);
    }
    out.lr = rotate90(out.lr, s.rotation);
    out.hr = rotate90(out.hr, s.rotation);
    return out;
}

// Co-located LR/HR crops with identical flip + rot90 augmentation; a pure
// function of (ds, patch, batch, seed).
inline std::vector<ImagePair> sample_patch_batch(const PairedDataset& ds, int patch, int batch, std::uint64_t seed)
{
    std::vector<ImagePair> out;
    for (const auto& s : sample_patch_specs(ds, patch, batch, seed))
        out.push_back(extract_patch(ds, s, patch));
    return out;
}

struct EpisodeSplit {
    std::vector<std::size_t> support_indices;
    std::vector<std::size_t> query_indices;
    std::vector<ImagePair> support;
    std::vector<ImagePair> query;
};

inline constexpr int default_shots = 5;

// Disjoint uniform sample without replacement.
inline EpisodeSplit sample_episode(const PairedDataset& ds, int shots, int query_size, std::uint64_t seed)
{
    if (shots < 1 || query_size < 0)
        throw invalid_input("shots must be >= 1 and query_size >= 0");
    const std::size_t need = static_cast<std::size_t>(shots) + static_cast<std::size_t>(query_size);
    if (need > ds.size())
        throw invalid_input("episode needs " + std::to_string(need) + " pairs but the dataset has "
                            + std::to_string(ds.size()));
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(mix_seed(seed, 0x657069736F6465ULL));
    for (std::size_t i = 0; i < need; ++i) {
        const std::size_t j = i + rng.index(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    EpisodeSplit split;
    split.support_indices.assign(idx.begin(), idx.begin() + shots);
    split.query_indices.assign(idx.begin() + shots, idx.begin() + static_cast<std::ptrdiff_t>(need));
    for (auto i : split.support_indices)
        split.support.push_back(ds.pairs[i]);
    for (auto i : split.query_indices)
        split.query.push_back(ds.pairs[i]);
    return split;
}

} // namespace cdasr
