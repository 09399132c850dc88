#include "factsum/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "factsum/error.hpp"
#include "factsum/sha256.hpp"

namespace factsum::harness {

namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::Config, std::string("config field has wrong type: ") + key, key);
    }
}

} // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(ErrorKind::Config, "config is not a JSON object");
    for (auto& [key, value] : j.items()) {
        static const std::vector<std::string> known = {
            "format_version", "seed", "dim", "latent_count", "chunk_size", "patch_dim", "enc_layers",
            "dec_layers", "ffn_hidden", "t_max", "max_fused_rows", "latent_self_attention", "dataset_dir",
            "dataset_mode", "clusters", "llm_script", "verify_labels", "flag_label_disagreements",
            "sft_steps", "sft_batch", "sft_lr", "sft_momentum", "rl_perceiver_batches",
            "rl_end2end_batches", "clip_eps", "ppo_lr", "eta", "rollout_batch", "epochs_per_batch",
            "value_coef", "entropy_coef", "gamma", "gae_lambda", "temperature", "rollout_t_max",
            "workers", "value_warmup_batches", "quality_reward", "quality_mode", "quality_endpoint", "quality_l_target",
            "critic_max_in_flight", "cls_dim", "cls_hidden", "cls_epochs", "cls_lr", "nli_pairs",
            "llm_endpoint", "timeout_secs", "encoder_endpoint", "fscore_average", "lr_grid", "batch_grid",
        };
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw Error(ErrorKind::Config, "unknown config field: " + key, key);
        (void)value;
    }

    RunConfig c;
    read_field(j, "format_version", c.format_version);
    read_field(j, "seed", c.seed);
    read_field(j, "dim", c.dim);
    read_field(j, "latent_count", c.latent_count);
    read_field(j, "chunk_size", c.chunk_size);
    read_field(j, "patch_dim", c.patch_dim);
    read_field(j, "enc_layers", c.enc_layers);
    read_field(j, "dec_layers", c.dec_layers);
    read_field(j, "ffn_hidden", c.ffn_hidden);
    read_field(j, "t_max", c.t_max);
    read_field(j, "max_fused_rows", c.max_fused_rows);
    read_field(j, "latent_self_attention", c.latent_self_attention);
    read_field(j, "dataset_dir", c.dataset_dir);
    read_field(j, "dataset_mode", c.dataset_mode);
    read_field(j, "clusters", c.clusters);
    read_field(j, "llm_script", c.llm_script);
    read_field(j, "verify_labels", c.verify_labels);
    read_field(j, "flag_label_disagreements", c.flag_label_disagreements);
    read_field(j, "sft_steps", c.sft_steps);
    read_field(j, "sft_batch", c.sft_batch);
    read_field(j, "sft_lr", c.sft_lr);
    read_field(j, "sft_momentum", c.sft_momentum);
    read_field(j, "rl_perceiver_batches", c.rl_perceiver_batches);
    read_field(j, "rl_end2end_batches", c.rl_end2end_batches);
    read_field(j, "clip_eps", c.clip_eps);
    read_field(j, "ppo_lr", c.ppo_lr);
    read_field(j, "eta", c.eta);
    read_field(j, "rollout_batch", c.rollout_batch);
    read_field(j, "epochs_per_batch", c.epochs_per_batch);
    read_field(j, "value_coef", c.value_coef);
    read_field(j, "entropy_coef", c.entropy_coef);
    read_field(j, "gamma", c.gamma);
    read_field(j, "gae_lambda", c.gae_lambda);
    read_field(j, "temperature", c.temperature);
    read_field(j, "rollout_t_max", c.rollout_t_max);
    read_field(j, "workers", c.workers);
    read_field(j, "value_warmup_batches", c.value_warmup_batches);
    read_field(j, "quality_reward", c.quality_reward);
    read_field(j, "quality_mode", c.quality_mode);
    read_field(j, "quality_endpoint", c.quality_endpoint);
    read_field(j, "quality_l_target", c.quality_l_target);
    read_field(j, "critic_max_in_flight", c.critic_max_in_flight);
    read_field(j, "cls_dim", c.cls_dim);
    read_field(j, "cls_hidden", c.cls_hidden);
    read_field(j, "cls_epochs", c.cls_epochs);
    read_field(j, "cls_lr", c.cls_lr);
    read_field(j, "nli_pairs", c.nli_pairs);
    read_field(j, "llm_endpoint", c.llm_endpoint);
    read_field(j, "timeout_secs", c.timeout_secs);
    read_field(j, "encoder_endpoint", c.encoder_endpoint);
    read_field(j, "fscore_average", c.fscore_average);
    read_field(j, "lr_grid", c.lr_grid);
    read_field(j, "batch_grid", c.batch_grid);
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

void RunConfig::validate() const {
    auto require = [](bool ok, const char* field, const char* why) {
        if (!ok) throw Error(ErrorKind::Config, std::string("invalid config field ") + field + ": " + why,
                             field);
    };
    require(format_version == 1, "format_version", "must be 1");
    require(dim >= 4, "dim", "must be >= 4");
    require(latent_count >= 1, "latent_count", "must be >= 1");
    require(chunk_size >= 1, "chunk_size", "must be >= 1");
    require(patch_dim >= 1, "patch_dim", "must be >= 1");
    require(enc_layers >= 1 && dec_layers >= 1, "enc_layers", "layer counts must be >= 1");
    require(t_max >= 2, "t_max", "must be >= 2");
    require(max_fused_rows >= latent_count + 1, "max_fused_rows", "must cover latents plus claim rows");
    require(dataset_mode == "synth" || dataset_mode == "scripted" || dataset_mode == "live",
            "dataset_mode", "must be synth|scripted|live");
    require(clusters >= 1, "clusters", "must be >= 1");
    require(sft_steps >= 0 && rl_perceiver_batches >= 0 && rl_end2end_batches >= 0, "sft_steps",
            "budgets must be >= 0");
    require(sft_batch >= 1, "sft_batch", "must be >= 1");
    require(sft_lr > 0.0, "sft_lr", "must be > 0");
    require(clip_eps > 0.0, "clip_eps", "must be > 0");
    require(ppo_lr > 0.0, "ppo_lr", "must be > 0");
    require(eta >= 0.0, "eta", "must be >= 0");
    require(rollout_batch >= 1, "rollout_batch", "must be >= 1");
    require(epochs_per_batch >= 1, "epochs_per_batch", "must be >= 1");
    require(gamma > 0.0 && gamma <= 1.0, "gamma", "must be in (0, 1]");
    require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "gae_lambda", "must be in [0, 1]");
    require(temperature >= 0.0, "temperature", "must be >= 0");
    require(rollout_t_max >= 1 && rollout_t_max < t_max, "rollout_t_max", "must be in [1, t_max)");
    require(workers >= 1, "workers", "must be >= 1");
    require(value_warmup_batches >= 0, "value_warmup_batches", "must be >= 0");
    require(quality_mode == "builtin" || quality_mode == "external", "quality_mode",
            "must be builtin|external");
    require(quality_l_target >= 1, "quality_l_target", "must be >= 1");
    require(critic_max_in_flight >= 1, "critic_max_in_flight", "must be >= 1");
    require(cls_dim >= 2 && cls_hidden >= 2, "cls_dim", "classifier dims must be >= 2");
    require(cls_epochs >= 1, "cls_epochs", "must be >= 1");
    require(cls_lr > 0.0, "cls_lr", "must be > 0");
    require(nli_pairs >= 30, "nli_pairs", "must be >= 30");
    require(timeout_secs > 0.0, "timeout_secs", "must be > 0");
    require(fscore_average == "macro" || fscore_average == "micro", "fscore_average",
            "must be macro|micro");
    require(!lr_grid.empty(), "lr_grid", "must be non-empty");
    require(!batch_grid.empty(), "batch_grid", "must be non-empty");
}

std::string RunConfig::to_canonical_json() const {
    // nlohmann::json orders keys lexicographically, which is the canonical form.
    json j;
    j["format_version"] = format_version;
    j["seed"] = seed;
    j["dim"] = dim;
    j["latent_count"] = latent_count;
    j["chunk_size"] = chunk_size;
    j["patch_dim"] = patch_dim;
    j["enc_layers"] = enc_layers;
    j["dec_layers"] = dec_layers;
    j["ffn_hidden"] = ffn_hidden;
    j["t_max"] = t_max;
    j["max_fused_rows"] = max_fused_rows;
    j["latent_self_attention"] = latent_self_attention;
    j["dataset_dir"] = dataset_dir;
    j["dataset_mode"] = dataset_mode;
    j["clusters"] = clusters;
    j["llm_script"] = llm_script;
    j["verify_labels"] = verify_labels;
    j["flag_label_disagreements"] = flag_label_disagreements;
    j["sft_steps"] = sft_steps;
    j["sft_batch"] = sft_batch;
    j["sft_lr"] = sft_lr;
    j["sft_momentum"] = sft_momentum;
    j["rl_perceiver_batches"] = rl_perceiver_batches;
    j["rl_end2end_batches"] = rl_end2end_batches;
    j["clip_eps"] = clip_eps;
    j["ppo_lr"] = ppo_lr;
    j["eta"] = eta;
    j["rollout_batch"] = rollout_batch;
    j["epochs_per_batch"] = epochs_per_batch;
    j["value_coef"] = value_coef;
    j["entropy_coef"] = entropy_coef;
    j["gamma"] = gamma;
    j["gae_lambda"] = gae_lambda;
    j["temperature"] = temperature;
    j["rollout_t_max"] = rollout_t_max;
    j["workers"] = workers;
    j["value_warmup_batches"] = value_warmup_batches;
    j["quality_reward"] = quality_reward;
    j["quality_mode"] = quality_mode;
    j["quality_endpoint"] = quality_endpoint;
    j["quality_l_target"] = quality_l_target;
    j["critic_max_in_flight"] = critic_max_in_flight;
    j["cls_dim"] = cls_dim;
    j["cls_hidden"] = cls_hidden;
    j["cls_epochs"] = cls_epochs;
    j["cls_lr"] = cls_lr;
    j["nli_pairs"] = nli_pairs;
    j["llm_endpoint"] = llm_endpoint;
    j["timeout_secs"] = timeout_secs;
    j["encoder_endpoint"] = encoder_endpoint;
    j["fscore_average"] = fscore_average;
    j["lr_grid"] = lr_grid;
    j["batch_grid"] = batch_grid;
    return j.dump();
}

std::string RunConfig::hash() const { return sha256_hex(to_canonical_json()); }

} // namespace factsum::harness
