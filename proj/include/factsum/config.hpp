#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace factsum::harness {

// Run configuration, read from a human-editable JSON file and validated
// against the published schema (docs/config.schema.json) before any run.
// The canonical hash is stable under field reordering of the source file.
struct RunConfig {
    int format_version = 1;
    std::uint64_t seed = 7;

    // model dims
    int dim = 32;
    int latent_count = 16;
    int chunk_size = 32;
    int patch_dim = 8;
    int enc_layers = 2;
    int dec_layers = 2;
    int ffn_hidden = 64;
    int t_max = 48;
    int max_fused_rows = 96;
    bool latent_self_attention = true;

    // dataset
    std::string dataset_dir = "corpus";
    std::string dataset_mode = "synth"; // synth | scripted | live
    int clusters = 6;
    std::string llm_script; // scripted mode response file
    bool verify_labels = true;
    bool flag_label_disagreements = true; // flagged, never dropped

    // stage budgets
    int sft_steps = 300;
    int sft_batch = 8;
    double sft_lr = 0.05;
    double sft_momentum = 0.9;
    int rl_perceiver_batches = 8;
    int rl_end2end_batches = 24;

    // ppo
    double clip_eps = 0.2;
    double ppo_lr = 0.05;
    double eta = 0.2;
    int rollout_batch = 24;
    int epochs_per_batch = 4;
    double value_coef = 0.5;
    double entropy_coef = 0.0;
    double gamma = 1.0;
    double gae_lambda = 0.95;
    double temperature = 1.0;
    int rollout_t_max = 30;
    int workers = 1;
    int value_warmup_batches = 4;
    bool quality_reward = true;

    // reward / critics
    std::string quality_mode = "builtin"; // builtin | external
    std::string quality_endpoint;
    int quality_l_target = 48;
    int critic_max_in_flight = 4;

    // entailment classifier
    int cls_dim = 16;
    int cls_hidden = 24;
    int cls_epochs = 8;
    double cls_lr = 0.02;
    int nli_pairs = 5000;

    // plugins / transport
    std::string llm_endpoint;
    double timeout_secs = 30.0;
    std::string encoder_endpoint; // empty -> builtin-learned

    // evaluation
    std::string fscore_average = "macro"; // macro | micro

    // Appendix sweep grids.
    std::vector<double> lr_grid = {1e-4, 1e-5, 1e-6};
    std::vector<int> batch_grid = {256, 480, 512};

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
    std::string to_canonical_json() const;
    std::string hash() const; // sha256 of the canonical form
    void validate() const;    // throws Config with the offending field
};

} // namespace factsum::harness
