#pragma once

// The five subcommands as plain functions returning process exit codes:
// 0 success, 1 runtime failure, 2 usage or validation failure.

#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdasr/cli/run_config.hpp"
#include "cdasr/core/archive.hpp"
#include "cdasr/core/csv.hpp"
#include "cdasr/core/error.hpp"
#include "cdasr/core/log.hpp"
#include "cdasr/data/dataset.hpp"
#include "cdasr/encoder/encoder.hpp"
#include "cdasr/loss/perceptual.hpp"
#include "cdasr/meta/meta_adapter.hpp"
#include "cdasr/metrics/domain_gap.hpp"
#include "cdasr/metrics/quality.hpp"
#include "cdasr/train/checkpoint.hpp"
#include "cdasr/train/trainer.hpp"

namespace cdasr {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int usage = 2;
} // namespace exit_code

// Flag values; unset flags leave the config file (or default) value alone.
struct CommandArgs {
    std::optional<std::string> config;
    std::optional<std::string> hr_dir;
    std::optional<std::string> lr_dir;
    std::optional<std::string> out;
    std::optional<std::string> checkpoint;
    std::optional<std::string> resume;
    std::optional<std::string> encoder;
    std::optional<std::string> protocol;
    std::optional<std::string> kernel;
    std::optional<int> scale;
    std::optional<int> episodes;
    std::optional<int> shots;
    std::optional<int> steps;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> datasets; // "tag=dir"
};

struct ResolvedRun {
    RunConfig cfg;
    bool scale_given = false; // by flag or config file
    bool encoder_given = false;
};

inline ResolvedRun resolve_run(const CommandArgs& a)
{
    ResolvedRun r;
    if (a.config) {
        std::ifstream in(*a.config);
        if (!in)
            throw invalid_input("cannot read config file '" + *a.config + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw invalid_input("config file '" + *a.config + "' is not valid JSON: " + e.what());
        }
        r.cfg = parse_run_config(j);
        r.scale_given = j.contains("network") && j["network"].is_object() && j["network"].contains("scale");
        r.encoder_given = j.contains("encoder");
    }
    RunConfig& c = r.cfg;
    if (a.seed)
        c.seed = *a.seed;
    if (a.scale) {
        c.network.scale = *a.scale;
        r.scale_given = true;
    }
    if (a.encoder) {
        c.encoder.backend = parse_encoder_backend(*a.encoder);
        r.encoder_given = true;
    }
    if (a.protocol)
        c.eval.protocol = *a.protocol;
    if (a.kernel)
        c.eval.kernel = *a.kernel;
    if (a.episodes)
        c.adapt.episodes = *a.episodes;
    if (a.shots)
        c.adapt.shots = *a.shots;
    if (a.steps)
        c.train.steps = *a.steps;
    if (a.epochs)
        c.train.epochs = *a.epochs;
    if (a.hr_dir)
        c.data.hr_dir = *a.hr_dir;
    if (a.lr_dir)
        c.data.lr_dir = *a.lr_dir;
    if (a.out)
        c.data.out = *a.out;
    if (a.checkpoint)
        c.data.checkpoint = *a.checkpoint;
    if (a.resume)
        c.data.resume = *a.resume;
    if (!a.datasets.empty()) {
        c.data.datasets.clear();
        for (const auto& d : a.datasets) {
            const auto eq = d.find('=');
            if (eq == std::string::npos || eq == 0 || eq + 1 == d.size())
                throw invalid_input("--dataset expects tag=dir, got '" + d + "'");
            c.data.datasets.push_back({d.substr(0, eq), d.substr(eq + 1)});
        }
    }
    c.sync();
    c.validate();
    return r;
}

namespace detail {

inline std::string utc_timestamp()
{
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void require_field(const std::string& value, const char* flag, const char* command)
{
    if (value.empty())
        throw invalid_input(std::string(command) + " needs " + flag);
}

inline DatasetBuild load_dataset(const DataConfig& d, int scale)
{
    return d.lr_dir.empty() ? build_dataset(d.hr_dir, scale) : build_dataset_from_pairs(d.hr_dir, d.lr_dir, scale);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw io_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out)
        throw io_error("write failed: " + path.string());
}

// The checkpoint fixes the network and encoder; an explicit scale that
// disagrees is a usage error.
inline Checkpoint<float> load_source_checkpoint(const ResolvedRun& run, const char* command)
{
    require_field(run.cfg.data.checkpoint, "--checkpoint", command);
    if (!std::filesystem::is_regular_file(run.cfg.data.checkpoint))
        throw invalid_input("checkpoint not found: '" + run.cfg.data.checkpoint + "'");
    Checkpoint<float> ck = load_checkpoint<float>(run.cfg.data.checkpoint);
    if (run.scale_given && run.cfg.network.scale != ck.meta.network.scale)
        throw invalid_input("scale mismatch: checkpoint was trained at x" + std::to_string(ck.meta.network.scale) +
                            " but the config asks for x" + std::to_string(run.cfg.network.scale));
    if (run.encoder_given && !(run.cfg.encoder == ck.meta.encoder))
        throw invalid_input("encoder mismatch: checkpoint uses " + to_string(ck.meta.encoder.backend) +
                            " but the config asks for " + to_string(run.cfg.encoder.backend));
    return ck;
}

inline std::vector<std::string> loss_row(const StepRecord& r)
{
    return {format_number(static_cast<long long>(r.step)), format_number(static_cast<long long>(r.epoch)),
            format_number(r.lr),         format_number(r.loss.total),
            format_number(r.loss.pixel), format_number(r.loss.perceptual),
            format_number(r.loss.semantic)};
}

inline const std::vector<std::string>& train_log_header()
{
    static const std::vector<std::string> h{"step", "epoch", "lr", "total", "pixel", "perceptual", "semantic"};
    return h;
}

// Keeps log rows up to and including `step`, so a resumed run appends
// cleanly to a log left behind by an interrupted one.
inline void truncate_train_log(const std::filesystem::path& path, std::int64_t step)
{
    auto rows = read_csv(path);
    CsvWriter w(path, train_log_header());
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (!rows[i].empty() && std::stoll(rows[i][0]) <= step)
            w.row(rows[i]);
}

} // namespace detail

inline int cmd_degrade(const CommandArgs& args, std::ostream& out = std::cout)
{
    if (!args.hr_dir || !args.out || (!args.scale && !args.config))
        throw invalid_input("degrade needs --hr-dir, --scale and --out");
    const ResolvedRun run = resolve_run(args);
    const DatasetBuild build = build_dataset(run.cfg.data.hr_dir, run.cfg.network.scale);
    const auto dir = write_degraded_set(build, run.cfg.data.out);
    out << "wrote " << build.dataset.size() << " LR images to " << dir.string();
    if (build.skipped)
        out << " (skipped " << build.skipped << ")";
    out << "\n";
    return exit_code::ok;
}

inline int cmd_train(const CommandArgs& args, std::ostream& out = std::cout)
{
    namespace fs = std::filesystem;
    const ResolvedRun run = resolve_run(args);
    const RunConfig& cfg = run.cfg;
    detail::require_field(cfg.data.hr_dir, "--hr-dir", "train");
    detail::require_field(cfg.data.out, "--out", "train");
    const fs::path dir = cfg.data.out;

    std::optional<TrainState<float>> resume;
    if (!cfg.data.resume.empty()) {
        if (!fs::is_regular_file(cfg.data.resume))
            throw invalid_input("resume checkpoint not found: '" + cfg.data.resume + "'");
        Checkpoint<float> ck = load_checkpoint<float>(cfg.data.resume);
        if (ck.meta.network.scale != cfg.network.scale)
            throw invalid_input("scale mismatch: checkpoint was trained at x" + std::to_string(ck.meta.network.scale) +
                                " but the config asks for x" + std::to_string(cfg.network.scale));
        if (!(ck.meta.network == cfg.network))
            throw invalid_input("resume checkpoint network differs from the configured network");
        if (!ck.optimizer)
            throw invalid_input("resume checkpoint has no optimizer state");
        if (ck.meta.seed != cfg.seed)
            log_warning("resuming with seed " + std::to_string(cfg.seed) + " but the checkpoint used " +
                        std::to_string(ck.meta.seed));
        resume = TrainState<float>{std::move(ck.params), std::move(*ck.optimizer), ck.meta.step};
    }

    const DatasetBuild build = detail::load_dataset(cfg.data, cfg.network.scale);
    const Encoder<float> encoder(cfg.encoder);
    const auto features = FeatureExtractor<float>::for_encoder(cfg.encoder);

    fs::create_directories(dir);
    write_run_config(dir / "config.resolved.json", cfg);

    const fs::path log_path = dir / "train_log.csv";
    const std::int64_t start = resume ? resume->step : 0;
    if (resume && fs::exists(log_path))
        detail::truncate_train_log(log_path, start);
    CsvWriter log(log_path, detail::train_log_header(), resume.has_value() && fs::exists(log_path));

    CheckpointMeta meta;
    meta.network = cfg.network;
    meta.encoder = cfg.encoder;
    meta.encoder_id = encoder.id();
    meta.seed = cfg.seed;
    meta.weights = cfg.loss_weights;
    meta.provenance = {{"command", "train"}, {"created", detail::utc_timestamp()}};

    const std::int64_t last = total_steps(cfg.train, build.dataset.size());
    auto observer = [&](const StepRecord& r, const TrainState<float>& st) {
        log.row(detail::loss_row(r));
        out << "step " << r.step << "/" << last << " epoch " << r.epoch << " lr " << format_number(r.lr) << " loss "
            << format_number(r.loss.total) << " pixel " << format_number(r.loss.pixel) << " perceptual "
            << format_number(r.loss.perceptual) << " semantic " << format_number(r.loss.semantic) << "\n";
        if (cfg.train.checkpoint_every > 0 && r.step % cfg.train.checkpoint_every == 0) {
            CheckpointMeta m = meta;
            m.step = st.step;
            save_checkpoint(dir / "checkpoints" / ("step_" + std::to_string(r.step)), st.params, &st.optimizer, m);
        }
    };

    TrainResult<float> result;
    try {
        result = train<float>(build.dataset, cfg.train, cfg.network, encoder, features, std::move(resume), observer);
    } catch (const non_finite_loss_error& e) {
        detail::write_json(dir / "nonfinite_diagnostic.json", e.diagnostic);
        throw;
    }
    meta.step = result.step;
    save_checkpoint(dir / "final", result.params, &result.optimizer, meta);
    out << "trained " << (result.step - start) << " steps; final checkpoint " << (dir / "final").string() << "\n";
    return exit_code::ok;
}

inline int cmd_adapt(const CommandArgs& args, std::ostream& out = std::cout)
{
    namespace fs = std::filesystem;
    ResolvedRun run = resolve_run(args);
    detail::require_field(run.cfg.data.hr_dir, "--hr-dir", "adapt");
    detail::require_field(run.cfg.data.out, "--out", "adapt");
    Checkpoint<float> ck = detail::load_source_checkpoint(run, "adapt");
    RunConfig& cfg = run.cfg;
    cfg.network = ck.meta.network;
    cfg.encoder = ck.meta.encoder;
    cfg.validate();
    const fs::path dir = cfg.data.out;

    const DatasetBuild build = detail::load_dataset(cfg.data, cfg.network.scale);
    const Encoder<float> encoder(cfg.encoder);
    const auto features = FeatureExtractor<float>::for_encoder(cfg.encoder);

    fs::create_directories(dir);
    write_run_config(dir / "config.resolved.json", cfg);
    CsvWriter log(dir / "episodes.csv",
                  {"episode", "support_loss_pre", "support_loss_post", "query_loss", "mean_alpha"});
    auto observer = [&](const EpisodeRecord& r) {
        log.row({format_number(static_cast<long long>(r.episode)), format_number(r.support_loss_pre),
                 format_number(r.support_loss_post), format_number(r.query_loss), format_number(r.mean_alpha)});
        out << "episode " << r.episode << " support " << format_number(r.support_loss_pre) << " -> "
            << format_number(r.support_loss_post) << " query " << format_number(r.query_loss) << " mean_alpha "
            << format_number(r.mean_alpha) << "\n";
    };
    const AdaptResult<float> res =
        adapt<float>(ck.params, cfg.network, build.dataset, cfg.adapt, encoder, features, observer);

    CheckpointMeta meta = ck.meta;
    meta.provenance = {{"command", "adapt"},
                       {"created", detail::utc_timestamp()},
                       {"source", cfg.data.checkpoint},
                       {"target", cfg.data.hr_dir},
                       {"adapt", cfg.adapt}};
    save_checkpoint(dir / "adapted", res.params, ck.optimizer ? &*ck.optimizer : nullptr, meta);

    Archive alphas;
    alphas.meta = {{"kind", "cdasr-meta-lr"},
                   {"mean_alpha", res.state.mean_alpha()},
                   {"gamma", res.state.gamma},
                   {"alpha_max", res.state.alpha_max},
                   {"mode", res.state.mode}};
    alphas.add_all(res.state.alphas, "alpha/");
    write_archive(dir / "alphas", alphas);
    out << "adapted over " << cfg.adapt.episodes << " episodes; checkpoint " << (dir / "adapted").string() << "\n";
    return exit_code::ok;
}

inline int cmd_eval(const CommandArgs& args, std::ostream& out = std::cout)
{
    namespace fs = std::filesystem;
    ResolvedRun run = resolve_run(args);
    detail::require_field(run.cfg.data.hr_dir, "--hr-dir", "eval");
    detail::require_field(run.cfg.data.out, "--out", "eval");
    const Checkpoint<float> ck = detail::load_source_checkpoint(run, "eval");
    RunConfig& cfg = run.cfg;
    cfg.network = ck.meta.network;
    cfg.encoder = ck.meta.encoder;
    cfg.validate();
    const fs::path dir = cfg.data.out;

    const DatasetBuild build = detail::load_dataset(cfg.data, cfg.network.scale);
    const Encoder<float> encoder(cfg.encoder);
    if (!ck.meta.encoder_id.empty() && encoder.id() != ck.meta.encoder_id)
        log_warning("encoder '" + encoder.id() + "' differs from the one recorded in the checkpoint ('" +
                    ck.meta.encoder_id + "')");
    const EvalProtocol protocol = cfg.protocol();
    const MetricReport rep = evaluate(ck.params, cfg.network, build.dataset, protocol, encoder);
    const MetricReport base = evaluate_bicubic(build.dataset, protocol);

    fs::create_directories(dir);
    write_run_config(dir / "config.resolved.json", cfg);
    {
        CsvWriter csv(dir / "metrics.csv", {"image", "psnr", "ssim"});
        for (const auto& s : rep.per_image)
            csv.row({s.name, format_number(s.psnr_db), format_number(s.ssim)});
    }
    {
        CsvWriter csv(dir / "summary.csv", {"protocol", "n_images", "psnr", "ssim", "bicubic_psnr", "bicubic_ssim"});
        csv.row({cfg.eval.protocol, format_number(static_cast<long long>(rep.n_images)), format_number(rep.psnr_db),
                 format_number(rep.ssim), format_number(base.psnr_db), format_number(base.ssim)});
    }
    detail::write_json(dir / "summary.json", {{"protocol", cfg.eval.protocol},
                                              {"border", protocol.border},
                                              {"n_images", rep.n_images},
                                              {"psnr", rep.psnr_db},
                                              {"ssim", rep.ssim},
                                              {"bicubic_psnr", base.psnr_db},
                                              {"bicubic_ssim", base.ssim}});
    out << "evaluated " << rep.n_images << " images (" << cfg.eval.protocol << "): PSNR " << format_number(rep.psnr_db)
        << " dB, SSIM " << format_number(rep.ssim) << "; bicubic " << format_number(base.psnr_db) << " dB\n";
    return exit_code::ok;
}

inline int cmd_analyze(const CommandArgs& args, std::ostream& out = std::cout)
{
    namespace fs = std::filesystem;
    const ResolvedRun run = resolve_run(args);
    const RunConfig& cfg = run.cfg;
    detail::require_field(cfg.data.out, "--out", "analyze-domains");
    std::vector<std::pair<std::string, fs::path>> sets;
    for (const auto& d : cfg.data.datasets) {
        for (const auto& s : sets)
            if (s.first == d.tag)
                throw invalid_input("duplicate dataset tag '" + d.tag + "'");
        sets.emplace_back(d.tag, d.dir);
    }
    if (sets.empty() && !cfg.data.hr_dir.empty())
        sets.emplace_back(fs::path(cfg.data.hr_dir).filename().string(), cfg.data.hr_dir);
    if (sets.empty())
        throw invalid_input("analyze-domains needs at least one --dataset tag=dir");

    const Kernel kernel = cfg.eval.kernel == "rbf" ? Kernel::rbf() : Kernel::linear();
    const DomainGapReport rep = export_embeddings_2d<float>(sets, cfg.encoder, cfg.seed, kernel);

    const fs::path dir = cfg.data.out;
    fs::create_directories(dir);
    write_run_config(dir / "config.resolved.json", cfg);
    {
        CsvWriter csv(dir / "coords.csv", {"x", "y", "tag", "source"});
        for (const auto& p : rep.coords)
            csv.row({format_number(p.x), format_number(p.y), p.tag, p.source});
    }
    {
        std::vector<std::string> header{"tag"};
        header.insert(header.end(), rep.tags.begin(), rep.tags.end());
        CsvWriter csv(dir / "mmd.csv", header);
        for (std::size_t i = 0; i < rep.tags.size(); ++i) {
            std::vector<std::string> row{rep.tags[i]};
            for (double v : rep.mmd_matrix[i])
                row.push_back(format_number(v));
            csv.row(row);
        }
    }
    detail::write_json(dir / "report.json", {{"tags", rep.tags},
                                             {"counts", rep.counts},
                                             {"kernel", rep.kernel.describe()},
                                             {"reduction", rep.reduction},
                                             {"fallback", rep.fallback},
                                             {"mmd", rep.mmd_matrix}});
    out << "embedded " << rep.coords.size() << " images from " << rep.tags.size() << " datasets (" << rep.reduction
        << ")\n";
    for (std::size_t i = 0; i < rep.tags.size(); ++i)
        for (std::size_t j = i + 1; j < rep.tags.size(); ++j)
            out << "MMD(" << rep.tags[i] << ", " << rep.tags[j] << ") = " << format_number(rep.mmd_matrix[i][j])
                << "\n";
    return exit_code::ok;
}

// Runs a command and maps exceptions onto exit codes.
template <class F>
int run_guarded(const std::string& name, F&& command, std::ostream& err = std::cerr)
{
    try {
        return command();
    } catch (const invalid_input& e) {
        err << "cdasr " << name << ": error: " << e.what() << "\n"
            << "Run 'cdasr " << name << " --help' for usage.\n";
        return exit_code::usage;
    } catch (const std::exception& e) {
        err << "cdasr " << name << ": failed: " << e.what() << "\n";
        return exit_code::failure;
    }
}

} // namespace cdasr
