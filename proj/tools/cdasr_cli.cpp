#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cdasr/cli/commands.hpp"

namespace {

using cdasr::CommandArgs;

void add_common(CLI::App* sub, CommandArgs& a)
{
    sub->add_option("--config", a.config, "JSON run config; flags override its values");
    sub->add_option("--seed", a.seed, "Random seed");
    sub->add_option("--out", a.out, "Output directory");
}

void add_data(CLI::App* sub, CommandArgs& a)
{
    sub->add_option("--hr-dir", a.hr_dir, "Directory of high-resolution images");
    sub->add_option("--lr-dir", a.lr_dir, "Directory of matching pre-degraded LR images");
    sub->add_option("--scale", a.scale, "Upscaling factor (2, 4, 8 or 16)");
}

void add_encoder(CLI::App* sub, CommandArgs& a)
{
    sub->add_option("--encoder", a.encoder, "Semantic encoder backend")->check(CLI::IsMember({"pretrained", "stub"}));
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Semantic-guided super-resolution with few-shot domain adaptation"};
    app.require_subcommand(1);
    CommandArgs a;

    auto* degrade = app.add_subcommand("degrade", "Write bicubic LR copies of an HR image tree");
    add_common(degrade, a);
    add_data(degrade, a);

    auto* train = app.add_subcommand("train", "Train a network on HR/LR pairs");
    add_common(train, a);
    add_data(train, a);
    add_encoder(train, a);
    train->add_option("--resume", a.resume, "Checkpoint to continue from");
    train->add_option("--steps", a.steps, "Total optimizer steps (overrides epochs)");
    train->add_option("--epochs", a.epochs, "Training epochs");

    auto* adapt = app.add_subcommand("adapt", "Few-shot meta-adaptation of a checkpoint to a target set");
    add_common(adapt, a);
    add_data(adapt, a);
    add_encoder(adapt, a);
    adapt->add_option("--checkpoint", a.checkpoint, "Source checkpoint");
    adapt->add_option("--episodes", a.episodes, "Number of episodes");
    adapt->add_option("--shots", a.shots, "Support pairs per episode");

    auto* eval = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on an HR set");
    add_common(eval, a);
    add_data(eval, a);
    add_encoder(eval, a);
    eval->add_option("--checkpoint", a.checkpoint, "Checkpoint to evaluate");
    eval->add_option("--protocol", a.protocol, "Metric protocol")->check(CLI::IsMember({"y", "rgb"}));

    auto* analyze = app.add_subcommand("analyze-domains", "Embedding MMD matrix and 2-D coordinates across datasets");
    add_common(analyze, a);
    add_encoder(analyze, a);
    analyze->add_option("--hr-dir", a.hr_dir, "Single dataset directory (when no --dataset is given)");
    analyze->add_option("--dataset", a.datasets, "Dataset as tag=dir (repeatable)");
    analyze->add_option("--kernel", a.kernel, "MMD kernel")->check(CLI::IsMember({"linear", "rbf"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cdasr::exit_code::usage;
    }

    if (degrade->parsed())
        return cdasr::run_guarded("degrade", [&] { return cdasr::cmd_degrade(a); });
    if (train->parsed())
        return cdasr::run_guarded("train", [&] { return cdasr::cmd_train(a); });
    if (adapt->parsed())
        return cdasr::run_guarded("adapt", [&] { return cdasr::cmd_adapt(a); });
    if (eval->parsed())
        return cdasr::run_guarded("eval", [&] { return cdasr::cmd_eval(a); });
    return cdasr::run_guarded("analyze-domains", [&] { return cdasr::cmd_analyze(a); });
}
