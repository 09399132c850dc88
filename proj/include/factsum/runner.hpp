#pragma once

#include <memory>
#include <string>
#include <vector>

#include "factsum/config.hpp"
#include "factsum/metrics.hpp"
#include "factsum/model.hpp"
#include "factsum/persist.hpp"
#include "factsum/ppo.hpp"

namespace factsum::harness {

ModelConfig model_config_from(const RunConfig& cfg, int vocab_size);

// Everything a training or evaluation run needs, derived deterministically
// from (config, corpus): model + frozen reference, encoded per-claim inputs,
// SFT pairs, trained entailment classifier and the episode scorer.
struct Pipeline {
    RunConfig cfg;
    Corpus corpus;
    std::unique_ptr<Model> model;
    std::unique_ptr<Model> ref;
    std::vector<std::shared_ptr<const ppo::PreparedInput>> inputs;
    std::vector<policy::SftItem> sft_items;
    std::unique_ptr<reward::EntailmentClassifier> classifier;
    ppo::EpisodeScorer scorer;
};

Pipeline build_pipeline(const RunConfig& cfg, Corpus corpus, bool train_classifier = true);

ppo::SchedulePlan plan_from(const RunConfig& cfg, bool has_sft_checkpoint);

// Corpus construction. "synth" renders the deterministic fact world
// directly; "scripted"/"live" run the prompt pipeline (generate 10 claims
// per label per cluster, double-check labels, classify checkworthiness).
Corpus build_corpus(const RunConfig& cfg);

// CLI entry points; each returns the process exit code contract (0 ok).
int cmd_dataset_gen(const RunConfig& cfg, const std::string& out_dir);
int cmd_sft(const RunConfig& cfg, const std::string& out_dir);
int cmd_rl_train(const RunConfig& cfg, const std::string& out_dir);
int cmd_summarize(const RunConfig& cfg, const std::string& checkpoint_dir, const std::string& claim_id,
                  const std::string& out_path);
int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_dir, const std::string& out_dir);
int cmd_report(const std::vector<std::string>& manifest_paths, const std::string& out_path);

// Shared by cmd_sft/cmd_rl_train: runs the staged schedule, writes per-stage
// run manifests and checkpoints under out_dir.
ppo::ScheduleResult run_schedule_and_persist(Pipeline& pipe, const ppo::SchedulePlan& plan,
                                             const std::string& out_dir);

std::string verification_report_json(const VerificationReport& rep, const std::string& average);
std::string overlap_report_json(const OverlapReport& rep);

} // namespace factsum::harness
