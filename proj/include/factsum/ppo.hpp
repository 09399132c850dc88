#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "factsum/model.hpp"
#include "factsum/reward.hpp"

namespace factsum::ppo {

enum class Stage { SFT = 0, RL_PERCEIVER_ONLY = 1, RL_END_TO_END = 2 };

const char* stage_name(Stage s);

struct PPOConfig {
    double clip_eps = 0.2;
    double lr = 1e-3; // alpha
    double eta = 0.2; // KL reward coefficient
    int rollout_batch = 8;
    int epochs_per_batch = 4;
    double value_coef = 0.5;
    double entropy_coef = 0.0;
    double gamma = 1.0;
    double gae_lambda = 0.95;
    double temperature = 1.0;
    int rollout_t_max = 24;
    bool normalize_advantages = true;
    bool quality_reward = true;
    int workers = 1;
    Stage stage = Stage::SFT;
    // Batches at the start of each RL stage that fit only the value probe,
    // so early advantages are not label-composition noise.
    int value_warmup_batches = 4;
    bool value_only_update = false;
};

// Per-claim encoded ingredients; episodes reference one of these and the
// fused input is rebuilt differentiably inside every update.
struct PreparedInput {
    std::string claim_id;
    std::string claim_text;
    Label gt_label = Label::Entailment;
    Mat claim_emb;               // n x D
    Mat image_emb;               // k x D; zero rows means no visual content
    std::vector<Mat> doc_chunks; // chunk embeddings, each rows x D
};

NodeId fused_node(Tape& t, const PreparedInput& in, const Model& model);
Mat fused_values(const PreparedInput& in, const Model& model);

struct Episode {
    std::shared_ptr<const PreparedInput> input;
    policy::SummarySample sample;
    reward::RewardBreakdown reward;
    std::vector<double> values;
    std::vector<double> shaped; // per-token shaped rewards, sums to r_total
    std::vector<double> returns;
    std::vector<double> advantages;
    bool failed = false;
    std::string fail_reason;
};

using EpisodeScorer =
    std::function<reward::RewardBreakdown(const PreparedInput&, const policy::SummarySample&)>;

EpisodeScorer make_scorer(const reward::EntailmentClassifier* classifier, reward::QualityCritic critic,
                          double eta, bool quality_enabled);

struct RolloutBatch {
    std::vector<Episode> episodes; // successful only
    int failed = 0;
};

// Exactly n episodes attempted; episode i draws its RNG stream from
// (seed, episode_base + i). More than 20% failures aborts the batch.
RolloutBatch collect_rollouts(const Model& model, const Model& ref,
                              const std::vector<std::shared_ptr<const PreparedInput>>& slice,
                              const EpisodeScorer& scorer, int n, std::uint64_t seed,
                              const PPOConfig& cfg, const policy::Tokenizer* tokenizer,
                              std::int64_t episode_base = 0);

// Distributes the Eq. 5 reward over tokens: -(eta/2)*kl_t per step, with the
// terminal step carrying (r_quality + r_entail - eta*kl_T)/2 so the
// undiscounted return equals r_total exactly.
void shape_rewards(Episode& ep);

// GAE over the shaped rewards; returns are the value-regression targets.
void compute_advantages(Episode& ep, const PPOConfig& cfg);

struct UpdateStats {
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double mean_entail = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double mean_return = 0.0; // estimate of the expected return J
};

// Clipped-surrogate PPO update over the batch. Stage RL_PERCEIVER_ONLY
// updates only perceiver/fusion parameters plus the value probe; the policy
// encoder/decoder stay frozen.
UpdateStats ppo_update(const std::vector<Episode>& episodes, Model& model, const PPOConfig& cfg,
                       SgdOptimizer& opt);

struct TrainState {
    std::int64_t step = 0;
    Stage stage = Stage::SFT;
    std::uint64_t seed = 0;
    std::int64_t episodes_collected = 0;
    int failed_episodes = 0;
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double expected_return = 0.0;
};

struct StepMetric {
    std::int64_t step = 0;
    double sft_loss = 0.0;
    UpdateStats stats;
    int failed = 0;
};

struct StageRecord {
    Stage stage = Stage::SFT;
    std::vector<StepMetric> steps;
    double wall_time_secs = 0.0;
    std::string policy_hash_before, policy_hash_after;
    std::string ref_hash_before, ref_hash_after;
};

struct SchedulePlan {
    int sft_steps = 0;
    int sft_batch = 8;
    SgdConfig sft_opt{0.05, 0.9};
    int rl_perceiver_batches = 0;
    int rl_end2end_batches = 0;
    PPOConfig ppo;
    bool has_sft_checkpoint = false;
};

struct ScheduleInputs {
    std::vector<policy::SftItem> sft_items;
    std::vector<std::shared_ptr<const PreparedInput>> rollout_inputs;
    const policy::Tokenizer* tokenizer = nullptr;
    EpisodeScorer scorer;
};

struct ScheduleResult {
    TrainState state;
    std::vector<StageRecord> stages;
    std::vector<Episode> rl_episodes; // in collection order, successful only
};

// SFT to budget, snapshot the frozen reference, perceiver-only RL, then
// end-to-end RL. Stage transitions are strictly monotone.
ScheduleResult train_schedule(TrainState state, Model& model, Model& ref, const ScheduleInputs& inputs,
                              const SchedulePlan& plan);

} // namespace factsum::ppo
