#include "factsum/runner.hpp"

#include <filesystem>
#include <iostream>

#include <nlohmann/json.hpp>

#include "factsum/error.hpp"
#include "factsum/sha256.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace factsum::harness {

ModelConfig model_config_from(const RunConfig& cfg, int vocab_size) {
    ModelConfig mc;
    mc.set_dim(cfg.dim);
    mc.set_seed(cfg.seed);
    mc.enc.latent_count = cfg.latent_count;
    mc.enc.chunk_size = cfg.chunk_size;
    mc.enc.vocab_size = vocab_size;
    mc.enc.patch_dim = cfg.patch_dim;
    mc.enc.latent_self_attention = cfg.latent_self_attention;
    mc.pol.vocab = vocab_size;
    mc.pol.enc_layers = cfg.enc_layers;
    mc.pol.dec_layers = cfg.dec_layers;
    mc.pol.ffn_hidden = cfg.ffn_hidden;
    mc.pol.t_max = cfg.t_max;
    mc.pol.max_fused_rows = cfg.max_fused_rows;
    return mc;
}

ppo::SchedulePlan plan_from(const RunConfig& cfg, bool has_sft_checkpoint) {
    ppo::SchedulePlan plan;
    plan.sft_steps = cfg.sft_steps;
    plan.sft_batch = cfg.sft_batch;
    plan.sft_opt = SgdConfig{cfg.sft_lr, cfg.sft_momentum};
    plan.rl_perceiver_batches = cfg.rl_perceiver_batches;
    plan.rl_end2end_batches = cfg.rl_end2end_batches;
    plan.has_sft_checkpoint = has_sft_checkpoint;
    plan.ppo.clip_eps = cfg.clip_eps;
    plan.ppo.lr = cfg.ppo_lr;
    plan.ppo.eta = cfg.eta;
    plan.ppo.rollout_batch = cfg.rollout_batch;
    plan.ppo.epochs_per_batch = cfg.epochs_per_batch;
    plan.ppo.value_coef = cfg.value_coef;
    plan.ppo.entropy_coef = cfg.entropy_coef;
    plan.ppo.gamma = cfg.gamma;
    plan.ppo.gae_lambda = cfg.gae_lambda;
    plan.ppo.temperature = cfg.temperature;
    plan.ppo.rollout_t_max = cfg.rollout_t_max;
    plan.ppo.workers = cfg.workers;
    plan.ppo.value_warmup_batches = cfg.value_warmup_batches;
    plan.ppo.quality_reward = cfg.quality_reward;
    return plan;
}

namespace {

encoding::TokenSequence tokens_of(const policy::Tokenizer& tok, const std::string& text) {
    encoding::TokenSequence seq;
    seq.ids = tok.encode(text);
    return seq;
}

reward::QualityCritic critic_from(const RunConfig& cfg) {
    reward::QualityCritic critic;
    critic.kind = cfg.quality_mode == "external" ? reward::QualityCritic::Kind::External
                                                 : reward::QualityCritic::Kind::BuiltinHeuristic;
    critic.l_target = cfg.quality_l_target;
    critic.endpoint = cfg.quality_endpoint;
    critic.timeout_secs = cfg.timeout_secs;
    critic.max_in_flight = cfg.critic_max_in_flight;
    return critic;
}

} // namespace

Pipeline build_pipeline(const RunConfig& cfg, Corpus corpus, bool train_classifier) {
    Pipeline pipe;
    pipe.cfg = cfg;
    pipe.corpus = std::move(corpus);

    const ModelConfig mc = model_config_from(cfg, pipe.corpus.tokenizer.vocab_size());
    pipe.model = std::make_unique<Model>(mc);
    pipe.ref = std::make_unique<Model>(mc);

    encoding::EncoderPlugin plugin;
    if (!cfg.encoder_endpoint.empty()) {
        plugin.kind = encoding::EncoderPlugin::Kind::External;
        plugin.endpoint = cfg.encoder_endpoint;
        plugin.timeout_secs = cfg.timeout_secs;
    }

    // Per-claim inputs. Builtin encoders are frozen and identical in model
    // and ref, so these encodings are valid for both.
    const auto& tok = pipe.corpus.tokenizer;
    for (const auto& claim : pipe.corpus.claims) {
        const claimgen::DocumentCluster* cluster = nullptr;
        for (const auto& c : pipe.corpus.clusters)
            if (c.id == claim.cluster_id) cluster = &c;
        if (!cluster) throw Error(ErrorKind::Validation, "claim references missing cluster " + claim.cluster_id);

        auto input = std::make_shared<ppo::PreparedInput>();
        input->claim_id = claim.id;
        input->claim_text = claim.claim;
        input->gt_label = claim.label;
        input->claim_emb = encode_text(tokens_of(tok, claim.claim), plugin, *pipe.model->encoders);
        if (cluster->images.empty()) {
            input->image_emb = Mat(0, cfg.dim);
        } else {
            Mat stacked;
            for (const auto& img : cluster->images) {
                const Mat enc = encode_image(img, plugin, *pipe.model->encoders);
                if (stacked.rows == 0) {
                    stacked = enc;
                } else {
                    Mat merged(stacked.rows + enc.rows, cfg.dim);
                    std::copy(stacked.v.begin(), stacked.v.end(), merged.v.begin());
                    std::copy(enc.v.begin(), enc.v.end(), merged.v.begin() + stacked.v.size());
                    stacked = std::move(merged);
                }
            }
            input->image_emb = std::move(stacked);
        }
        for (const auto& doc : cluster->documents) {
            const auto chunks = encoding::chunk_tokens(tokens_of(tok, doc), cfg.chunk_size);
            for (const auto& chunk : chunks)
                input->doc_chunks.push_back(encode_text(chunk, plugin, *pipe.model->encoders));
        }
        pipe.inputs.push_back(std::move(input));
    }

    // Corpora list claims label-block ordered; mix them so rollout batches
    // and reward windows see a stable label composition.
    {
        Rng shuffle = Rng(cfg.seed).fork(0x5caff1e);
        for (std::size_t i = pipe.inputs.size(); i > 1; --i)
            std::swap(pipe.inputs[i - 1], pipe.inputs[shuffle.uniform_int(i)]);
    }

    // SFT pairs: fused inputs under the seeded init parameters, targets are
    // the cluster's human summary truncated to the decode budget.
    for (const auto& claim : pipe.corpus.claims) {
        const claimgen::DocumentCluster* cluster = nullptr;
        for (const auto& c : pipe.corpus.clusters)
            if (c.id == claim.cluster_id) cluster = &c;
        policy::SftItem item;
        std::shared_ptr<const ppo::PreparedInput> input;
        for (const auto& in : pipe.inputs)
            if (in->claim_id == claim.id) input = in;
        item.fused = ppo::fused_values(*input, *pipe.model);
        std::vector<int> target = tok.encode(cluster->summary);
        const int budget = cfg.t_max - 2; // room for <bos> shift and <eos>
        if (static_cast<int>(target.size()) > budget) target.resize(budget);
        target.push_back(policy::Tokenizer::kEos);
        item.target = std::move(target);
        pipe.sft_items.push_back(std::move(item));
    }

    if (train_classifier) {
        reward::EntailmentClassifier::Config cc;
        cc.dim = cfg.cls_dim;
        cc.hidden = cfg.cls_hidden;
        cc.epochs = cfg.cls_epochs;
        cc.lr = cfg.cls_lr;
        cc.seed = cfg.seed;
        const auto pairs = claimgen::make_nli_pairs(cfg.seed, cfg.nli_pairs);
        pipe.classifier =
            std::make_unique<reward::EntailmentClassifier>(reward::EntailmentClassifier::train(pairs, cc));
        pipe.scorer = ppo::make_scorer(pipe.classifier.get(), critic_from(cfg), cfg.eta, cfg.quality_reward);
    }
    return pipe;
}

Corpus build_corpus(const RunConfig& cfg) {
    Corpus corpus;
    corpus.seed = cfg.seed;

    if (cfg.dataset_mode == "synth") {
        auto world = claimgen::synth_world(cfg.seed, cfg.clusters);
        corpus.clusters = std::move(world.clusters);
        corpus.claims = std::move(world.claims);
    } else {
        claimgen::LlmClient client =
            cfg.dataset_mode == "scripted"
                ? claimgen::LlmClient::scripted_from_file(cfg.llm_script)
                : claimgen::LlmClient::live(cfg.llm_endpoint, cfg.timeout_secs);
        // Cluster sources come from the deterministic fact world either way;
        // claims come from the prompt pipeline.
        auto world = claimgen::synth_world(cfg.seed, cfg.clusters);
        corpus.clusters = std::move(world.clusters);
        claimgen::CheckworthinessPlugin cw;
        for (const auto& cluster : corpus.clusters) {
            for (Label label : {Label::Entailment, Label::Neutral, Label::Contradiction}) {
                auto records = claimgen::generate_claims(cluster, label, client);
                for (auto& rec : records) {
                    rec.checkworthiness = claimgen::checkworthiness(rec, cw);
                    if (cfg.verify_labels) {
                        const Label verified = claimgen::verify_label(rec, cluster, client);
                        rec.verified_label = verified;
                        if (verified != rec.label && !cfg.flag_label_disagreements)
                            continue; // config switch: drop instead of flag
                    }
                    corpus.claims.push_back(std::move(rec));
                }
            }
        }
    }

    for (const auto& cluster : corpus.clusters) {
        for (const auto& doc : cluster.documents) corpus.tokenizer.add_text(doc);
        corpus.tokenizer.add_text(cluster.summary);
    }
    for (const auto& claim : corpus.claims) corpus.tokenizer.add_text(claim.claim);
    for (const char* label : {"entailment", "neutral", "contradiction"}) corpus.tokenizer.add_word(label);
    return corpus;
}

int cmd_dataset_gen(const RunConfig& cfg, const std::string& out_dir) {
    const Corpus corpus = build_corpus(cfg);
    save_corpus(out_dir, corpus);
    std::cout << "wrote corpus: " << out_dir << " clusters=" << corpus.clusters.size()
              << " claims=" << corpus.claims.size() << " sha256=" << sha256_hex(claims_to_jsonl(corpus.claims))
              << "\n";
    return 0;
}

ppo::ScheduleResult run_schedule_and_persist(Pipeline& pipe, const ppo::SchedulePlan& plan,
                                             const std::string& out_dir) {
    fs::create_directories(out_dir);
    ppo::ScheduleInputs inputs;
    inputs.sft_items = pipe.sft_items;
    inputs.rollout_inputs = pipe.inputs;
    inputs.tokenizer = &pipe.corpus.tokenizer;
    inputs.scorer = pipe.scorer;

    ppo::TrainState state;
    state.seed = pipe.cfg.seed;
    auto result = ppo::train_schedule(state, *pipe.model, *pipe.ref, inputs, plan);

    for (const auto& stage : result.stages) {
        RunManifest manifest;
        manifest.stage = ppo::stage_name(stage.stage);
        manifest.seed = pipe.cfg.seed;
        manifest.config_hash = pipe.cfg.hash();
        manifest.steps = stage.steps;
        manifest.wall_time_secs = stage.wall_time_secs;
        manifest.policy_hash_before = stage.policy_hash_before;
        manifest.policy_hash_after = stage.policy_hash_after;
        manifest.ref_hash_before = stage.ref_hash_before;
        manifest.ref_hash_after = stage.ref_hash_after;
        save_run_manifest(out_dir + "/manifest_" + manifest.stage + ".json", manifest);
    }
    if (result.stages.empty()) {
        RunManifest manifest;
        manifest.stage = "noop";
        manifest.seed = pipe.cfg.seed;
        manifest.config_hash = pipe.cfg.hash();
        save_run_manifest(out_dir + "/manifest_noop.json", manifest);
    }

    CheckpointManifest cm;
    cm.stage = ppo::stage_name(result.state.stage);
    cm.step = result.state.step;
    cm.seed = pipe.cfg.seed;
    cm.config_hash = pipe.cfg.hash();
    save_checkpoint(out_dir + "/checkpoint", pipe.model->store, cm);
    save_checkpoint(out_dir + "/reference", pipe.ref->store, cm);
    return result;
}

int cmd_sft(const RunConfig& cfg, const std::string& out_dir) {
    Pipeline pipe = build_pipeline(cfg, load_corpus(cfg.dataset_dir), /*train_classifier=*/false);
    ppo::SchedulePlan plan = plan_from(cfg, false);
    plan.rl_perceiver_batches = 0;
    plan.rl_end2end_batches = 0;
    run_schedule_and_persist(pipe, plan, out_dir);
    std::cout << "sft complete: " << out_dir << "\n";
    return 0;
}

int cmd_rl_train(const RunConfig& cfg, const std::string& out_dir) {
    Pipeline pipe = build_pipeline(cfg, load_corpus(cfg.dataset_dir));
    const bool resume = checkpoint_exists(out_dir + "/checkpoint");
    if (resume) {
        load_checkpoint(out_dir + "/checkpoint", pipe.model->store);
        load_checkpoint(out_dir + "/reference", pipe.ref->store);
    }
    run_schedule_and_persist(pipe, plan_from(cfg, resume), out_dir);
    std::cout << "rl-train complete: " << out_dir << "\n";
    return 0;
}

int cmd_summarize(const RunConfig& cfg, const std::string& checkpoint_dir, const std::string& claim_id,
                  const std::string& out_path) {
    Pipeline pipe = build_pipeline(cfg, load_corpus(cfg.dataset_dir), /*train_classifier=*/false);
    load_checkpoint(checkpoint_dir, pipe.model->store);
    pipe.ref->store.copy_values_from(pipe.model->store);

    std::shared_ptr<const ppo::PreparedInput> input;
    for (const auto& in : pipe.inputs)
        if (in->claim_id == claim_id) input = in;
    if (!input) throw Error(ErrorKind::Validation, "unknown claim id: " + claim_id);

    const Mat fused = ppo::fused_values(*input, *pipe.model);
    const auto sample = policy::generate(fused, *pipe.model->policy_net, fused, *pipe.ref->policy_net,
                                         /*temperature=*/0.0, Rng(cfg.seed), &pipe.corpus.tokenizer);
    json j;
    j["format_version"] = 1;
    j["claim_id"] = claim_id;
    j["claim"] = input->claim_text;
    j["summary"] = sample.text;
    if (out_path.empty())
        std::cout << j.dump(2) << "\n";
    else
        write_text_file(out_path, j.dump(2));
    return 0;
}

std::string verification_report_json(const VerificationReport& rep, const std::string& average) {
    json j;
    j["format_version"] = 1;
    j["accuracy"] = rep.accuracy;
    j["macro_f"] = rep.macro_f;
    j["micro_f"] = rep.micro_f;
    j["f_score"] = average == "micro" ? rep.micro_f : rep.macro_f;
    j["average"] = average;
    for (int l = 0; l < 3; ++l) {
        const Label label = static_cast<Label>(l);
        json row;
        row["precision"] = rep.precision[l];
        row["recall"] = rep.recall[l];
        row["f1"] = rep.f1[l];
        row["support"] = rep.support[l];
        // Both label vocabularies, per the fact-checking table convention.
        j["per_label"][label_name(label)] = row;
        j["per_label_truthfulness"][truthfulness_name(label)] = row;
    }
    json confusion = json::array();
    for (int g = 0; g < 3; ++g) {
        json row = json::array();
        for (int p = 0; p < 3; ++p) row.push_back(rep.confusion[g][p]);
        confusion.push_back(std::move(row));
    }
    j["confusion"] = std::move(confusion);
    return j.dump(2);
}

std::string overlap_report_json(const OverlapReport& rep) {
    json j;
    j["format_version"] = 1;
    j["rouge1"] = rep.rouge1;
    j["rouge2"] = rep.rouge2;
    j["rougeL"] = rep.rouge_l;
    j["bleu"] = rep.bleu;
    j["bertscore"] = nullptr;
    j["bertscore_status"] = rep.bertscore_status;
    return j.dump(2);
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_dir, const std::string& out_dir) {
    Pipeline pipe = build_pipeline(cfg, load_corpus(cfg.dataset_dir));
    load_checkpoint(checkpoint_dir, pipe.model->store);
    pipe.ref->store.copy_values_from(pipe.model->store);
    fs::create_directories(out_dir);

    std::vector<std::pair<std::string, std::string>> summaries;
    std::vector<std::string> candidates, references;
    for (const auto& input : pipe.inputs) {
        const Mat fused = ppo::fused_values(*input, *pipe.model);
        const auto sample = policy::generate(fused, *pipe.model->policy_net, fused, *pipe.ref->policy_net,
                                             /*temperature=*/0.0, Rng(cfg.seed), &pipe.corpus.tokenizer);
        summaries.emplace_back(input->claim_id, sample.text);
        candidates.push_back(sample.text);
        for (const auto& cluster : pipe.corpus.clusters)
            if (input->claim_id.rfind(cluster.id + "-", 0) == 0) references.push_back(cluster.summary);
    }
    const auto verification = verify_claims(summaries, pipe.corpus.claims, *pipe.classifier);
    write_text_file(out_dir + "/verification.json", verification_report_json(verification, cfg.fscore_average));
    const auto overlap = overlap_report(candidates, references);
    write_text_file(out_dir + "/overlap.json", overlap_report_json(overlap));
    std::cout << "evaluate: accuracy=" << verification.accuracy << " macro_f=" << verification.macro_f
              << " rouge1=" << overlap.rouge1 << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& manifest_paths, const std::string& out_path) {
    std::vector<RunManifest> manifests;
    for (const auto& p : manifest_paths) manifests.push_back(load_run_manifest(p));
    const std::string merged = merged_report_json(manifests);
    if (out_path.empty())
        std::cout << merged << "\n";
    else
        write_text_file(out_path, merged);
    return 0;
}

} // namespace factsum::harness
