#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "factsum/config.hpp"
#include "factsum/error.hpp"
#include "factsum/runner.hpp"

namespace {

factsum::harness::RunConfig load_config(const std::string& path, long long seed_override) {
    if (path.empty())
        throw factsum::Error(factsum::ErrorKind::Config,
                             "missing config: pass --config <path> (see docs/config.schema.json)");
    auto cfg = factsum::harness::RunConfig::from_file(path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"factsum: claim-conditioned multi-document summarization with an entailment-driven PPO trainer"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_dir, claim_id, out_path;
    long long seed = -1;
    std::vector<std::string> manifest_paths;

    auto add_common = [&](CLI::App* cmd, bool needs_out) {
        cmd->add_option("--config", config_path, "Run configuration JSON");
        cmd->add_option("--seed", seed, "Seed override");
        if (needs_out) cmd->add_option("--out", out_dir, "Output directory")->required();
    };

    auto* dataset_gen = app.add_subcommand("dataset-gen", "Build a corpus (synth world or prompt pipeline)");
    add_common(dataset_gen, true);
    auto* sft = app.add_subcommand("sft", "Supervised fine-tuning to the configured step budget");
    add_common(sft, true);
    auto* rl_train = app.add_subcommand("rl-train", "Staged schedule: SFT, perceiver-only RL, end-to-end RL");
    add_common(rl_train, true);
    auto* summarize = app.add_subcommand("summarize", "One-shot greedy summary for a claim");
    add_common(summarize, false);
    summarize->add_option("--checkpoint", checkpoint_dir, "Checkpoint directory")->required();
    summarize->add_option("--claim-id", claim_id, "Claim id from the corpus")->required();
    summarize->add_option("--out", out_path, "Output file (default: stdout)");
    auto* evaluate = app.add_subcommand("evaluate", "Claim-verification and overlap reports");
    add_common(evaluate, true);
    evaluate->add_option("--checkpoint", checkpoint_dir, "Checkpoint directory")->required();
    auto* report = app.add_subcommand("report", "Merge run manifests into one plot-ready series");
    report->add_option("--manifests", manifest_paths, "Run manifest files")->required();
    report->add_option("--out", out_path, "Output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        using namespace factsum::harness;
        if (dataset_gen->parsed()) return cmd_dataset_gen(load_config(config_path, seed), out_dir);
        if (sft->parsed()) return cmd_sft(load_config(config_path, seed), out_dir);
        if (rl_train->parsed()) return cmd_rl_train(load_config(config_path, seed), out_dir);
        if (summarize->parsed())
            return cmd_summarize(load_config(config_path, seed), checkpoint_dir, claim_id, out_path);
        if (evaluate->parsed()) return cmd_evaluate(load_config(config_path, seed), checkpoint_dir, out_dir);
        if (report->parsed()) return cmd_report(manifest_paths, out_path);
    } catch (const factsum::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (!e.detail().empty()) std::cerr << "detail: " << e.detail() << "\n";
        return e.is_usage_failure() ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
