#include "factsum/ppo.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "factsum/error.hpp"

namespace factsum::ppo {

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::SFT: return "sft";
        case Stage::RL_PERCEIVER_ONLY: return "rl_perceiver_only";
        case Stage::RL_END_TO_END: return "rl_end_to_end";
    }
    return "sft";
}

NodeId fused_node(Tape& t, const PreparedInput& in, const Model& model) {
    std::vector<NodeId> chunks;
    chunks.reserve(in.doc_chunks.size());
    for (const auto& c : in.doc_chunks) chunks.push_back(t.constant(c));
    const NodeId claim = t.constant(in.claim_emb);
    const NodeId images = t.constant(in.image_emb);
    return fusion::fuse_inputs(t, claim, images, chunks, *model.doc_resampler, *model.fusion_block);
}

Mat fused_values(const PreparedInput& in, const Model& model) {
    Tape t;
    return t.val(fused_node(t, in, model));
}

EpisodeScorer make_scorer(const reward::EntailmentClassifier* classifier, reward::QualityCritic critic,
                          double eta, bool quality_enabled) {
    return [classifier, critic, eta, quality_enabled](const PreparedInput& in,
                                                      const policy::SummarySample& sample) {
        const auto dist = classifier->probs(sample.text, in.claim_text);
        const double r_entail = reward::entailment_reward(dist, in.gt_label);
        const double r_quality = quality_enabled ? reward::quality_score(sample.text, critic) : 0.0;
        const double kl = reward::kl_estimate(sample);
        return reward::total_reward(r_entail, r_quality, kl, eta);
    };
}

namespace {

std::vector<double> value_estimates(const Model& model, const Mat& fused, const std::vector<int>& ids) {
    Tape t;
    const NodeId memory = model.policy_net->encode(t, t.constant(fused));
    std::vector<int> dec_input;
    dec_input.push_back(policy::Tokenizer::kBos);
    dec_input.insert(dec_input.end(), ids.begin(), ids.end() - 1);
    const NodeId states = model.policy_net->decode_states(t, memory, dec_input);
    const NodeId values = model.value_head->values(t, states);
    std::vector<double> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out[i] = t.val(values).at(static_cast<int>(i), 0);
    return out;
}

Episode run_episode(const Model& model, const Model& ref, const PreparedInput& input,
                    const EpisodeScorer& scorer, Rng rng, const PPOConfig& cfg,
                    const policy::Tokenizer* tokenizer,
                    std::shared_ptr<const PreparedInput> input_ref) {
    Episode ep;
    ep.input = std::move(input_ref);
    const Mat fused_active = fused_values(input, model);
    const Mat fused_ref = fused_values(input, ref);
    ep.sample = policy::generate(fused_active, *model.policy_net, fused_ref, *ref.policy_net,
                                 cfg.temperature, rng, tokenizer, cfg.rollout_t_max);
    ep.values = value_estimates(model, fused_active, ep.sample.ids);
    try {
        ep.reward = scorer(input, ep.sample);
        if (!std::isfinite(ep.reward.r_total)) throw Error(ErrorKind::Divergence, "non-finite reward");
    } catch (const std::exception& e) {
        ep.failed = true;
        ep.fail_reason = e.what();
    }
    return ep;
}

} // namespace

RolloutBatch collect_rollouts(const Model& model, const Model& ref,
                              const std::vector<std::shared_ptr<const PreparedInput>>& slice,
                              const EpisodeScorer& scorer, int n, std::uint64_t seed,
                              const PPOConfig& cfg, const policy::Tokenizer* tokenizer,
                              std::int64_t episode_base) {
    if (n < 1) throw Error(ErrorKind::Validation, "rollout count must be >= 1");
    if (slice.empty()) throw Error(ErrorKind::Validation, "rollout dataset slice is empty");

    std::vector<Episode> all(static_cast<std::size_t>(n));
    auto work = [&](int i) {
        const auto& input = slice[static_cast<std::size_t>((episode_base + i) % slice.size())];
        const Rng rng = Rng(seed).fork(static_cast<std::uint64_t>(episode_base + i));
        all[static_cast<std::size_t>(i)] =
            run_episode(model, ref, *input, scorer, rng, cfg, tokenizer, input);
    };
    if (cfg.workers > 1) {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < cfg.workers; ++w)
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) work(i);
            });
        for (auto& th : pool) th.join();
    } else {
        for (int i = 0; i < n; ++i) work(i);
    }

    RolloutBatch batch;
    for (auto& ep : all) {
        if (ep.failed)
            ++batch.failed;
        else
            batch.episodes.push_back(std::move(ep));
    }
    if (batch.failed * 5 > n)
        throw Error(ErrorKind::Generation,
                    "rollout batch aborted: " + std::to_string(batch.failed) + "/" + std::to_string(n) +
                        " episodes failed",
                    batch.failed > 0 ? all.front().fail_reason : "");
    return batch;
}

void shape_rewards(Episode& ep) {
    const std::size_t t_len = ep.sample.ids.size();
    ep.shaped.assign(t_len, 0.0);
    const double eta = ep.reward.eta;
    for (std::size_t t = 0; t < t_len; ++t) {
        const double kl_t = ep.sample.logp_active[t] - ep.sample.logp_ref[t];
        if (t + 1 == t_len)
            ep.shaped[t] = (ep.reward.r_quality + ep.reward.r_entail - eta * kl_t) / 2.0;
        else
            ep.shaped[t] = -(eta / 2.0) * kl_t;
    }
}

void compute_advantages(Episode& ep, const PPOConfig& cfg) {
    if (ep.values.size() != ep.shaped.size())
        throw Error(ErrorKind::Validation, "value estimates missing or misaligned");
    const int t_len = static_cast<int>(ep.shaped.size());
    ep.returns.assign(t_len, 0.0);
    ep.advantages.assign(t_len, 0.0);
    double next_return = 0.0;
    double next_adv = 0.0;
    double next_value = 0.0;
    for (int t = t_len - 1; t >= 0; --t) {
        next_return = ep.shaped[t] + cfg.gamma * next_return;
        ep.returns[t] = next_return;
        const double delta = ep.shaped[t] + cfg.gamma * next_value - ep.values[t];
        next_adv = delta + cfg.gamma * cfg.gae_lambda * next_adv;
        ep.advantages[t] = next_adv;
        next_value = ep.values[t];
    }
}

UpdateStats ppo_update(const std::vector<Episode>& episodes, Model& model, const PPOConfig& cfg,
                       SgdOptimizer& opt) {
    if (episodes.empty()) throw Error(ErrorKind::Validation, "ppo_update needs at least one episode");
    if (cfg.stage == Stage::SFT)
        throw Error(ErrorKind::Validation, "ppo_update is not valid in the SFT stage");

    // Batch advantage normalization (guarded so all-zero advantages stay zero).
    double adv_mean = 0.0, adv_sq = 0.0;
    std::size_t adv_n = 0;
    for (const auto& ep : episodes)
        for (double a : ep.advantages) {
            adv_mean += a;
            adv_sq += a * a;
            ++adv_n;
        }
    adv_mean /= std::max<std::size_t>(1, adv_n);
    const double adv_std = std::sqrt(std::max(0.0, adv_sq / std::max<std::size_t>(1, adv_n) - adv_mean * adv_mean));
    const bool normalize = cfg.normalize_advantages && adv_std > 1e-12;

    UpdateStats stats;
    for (const auto& ep : episodes) {
        stats.mean_reward += ep.reward.r_total;
        stats.mean_entail += ep.reward.r_entail;
        stats.mean_kl += ep.reward.kl;
        stats.mean_return += ep.returns.empty() ? 0.0 : ep.returns.front();
    }
    const double inv_n = 1.0 / static_cast<double>(episodes.size());
    stats.mean_reward *= inv_n;
    stats.mean_entail *= inv_n;
    stats.mean_kl *= inv_n;
    stats.mean_return *= inv_n;

    const auto want = [&](const Param& p) {
        if (cfg.value_only_update) return p.name.rfind("value.", 0) == 0;
        if (cfg.stage == Stage::RL_PERCEIVER_ONLY)
            return p.name.rfind("encoding.", 0) == 0 || p.name.rfind("fusion.", 0) == 0 ||
                   p.name.rfind("value.", 0) == 0;
        return true;
    };

    for (int epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
        Tape t;
        NodeId total = t.constant(Mat::zeros(1, 1));
        double policy_loss_acc = 0.0, value_loss_acc = 0.0, entropy_acc = 0.0;
        for (const auto& ep : episodes) {
            const int t_len = static_cast<int>(ep.sample.ids.size());
            Mat adv(t_len, 1), ret(t_len, 1), rollout_logp(t_len, 1);
            for (int i = 0; i < t_len; ++i) {
                adv.at(i, 0) = normalize ? (ep.advantages[i] - adv_mean) / adv_std : ep.advantages[i];
                ret.at(i, 0) = ep.returns[i];
                rollout_logp.at(i, 0) = ep.sample.logp_active[i];
            }

            const NodeId fused = fused_node(t, *ep.input, model);
            const NodeId memory = model.policy_net->encode(t, fused);
            std::vector<int> dec_input;
            dec_input.push_back(policy::Tokenizer::kBos);
            dec_input.insert(dec_input.end(), ep.sample.ids.begin(), ep.sample.ids.end() - 1);
            const NodeId states = model.policy_net->decode_states(t, memory, dec_input);
            const NodeId ls = t.log_softmax_rows(model.policy_net->logits(t, states));
            const NodeId logp_new = t.pick(ls, ep.sample.ids);

            const NodeId ratio = t.exp_(t.sub(logp_new, t.constant(rollout_logp)));
            const NodeId adv_node = t.constant(adv);
            const NodeId unclipped = t.hadamard(ratio, adv_node);
            const NodeId clipped =
                t.hadamard(t.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_node);
            const NodeId surrogate = t.mean_all(t.minimum(unclipped, clipped));

            const NodeId values = model.value_head->values(t, states);
            const NodeId vdiff = t.sub(values, t.constant(ret));
            const NodeId value_loss = t.mean_all(t.hadamard(vdiff, vdiff));

            // Entropy of each step's output distribution.
            const NodeId probs = t.exp_(ls);
            const NodeId plogp = t.hadamard(probs, ls);
            const NodeId entropy = t.scale(t.mean_all(plogp), -static_cast<double>(t.val(ls).cols));

            NodeId ep_loss = t.scale(surrogate, -1.0);
            ep_loss = t.add(ep_loss, t.scale(value_loss, cfg.value_coef));
            if (cfg.entropy_coef != 0.0) ep_loss = t.add(ep_loss, t.scale(entropy, -cfg.entropy_coef));
            total = t.add(total, ep_loss);

            policy_loss_acc += -t.val(surrogate).at(0, 0);
            value_loss_acc += t.val(value_loss).at(0, 0);
            entropy_acc += t.val(entropy).at(0, 0);
        }
        const NodeId loss = t.scale(total, inv_n);
        model.store.zero_grads();
        t.backward(loss);
        if (!model.store.grads_finite()) {
            std::ostringstream diag;
            diag << "epoch=" << epoch << " loss=" << t.val(loss).at(0, 0)
                 << " grad_l2=" << model.store.grad_l2();
            throw Error(ErrorKind::Divergence, "ppo gradient diverged", diag.str());
        }
        opt.step(model.store, want);
        if (epoch == 0) {
            stats.policy_loss = policy_loss_acc * inv_n;
            stats.value_loss = value_loss_acc * inv_n;
            stats.entropy = entropy_acc * inv_n;
        }
    }
    return stats;
}

namespace {

void advance_stage(TrainState& state, Stage next) {
    if (static_cast<int>(next) < static_cast<int>(state.stage))
        throw Error(ErrorKind::Validation, std::string("stage order violated: cannot move from ") +
                                               stage_name(state.stage) + " to " + stage_name(next));
    state.stage = next;
}

double seconds_since(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

ScheduleResult train_schedule(TrainState state, Model& model, Model& ref, const ScheduleInputs& inputs,
                              const SchedulePlan& plan) {
    const bool wants_rl = plan.rl_perceiver_batches > 0 || plan.rl_end2end_batches > 0;
    if (wants_rl && plan.sft_steps == 0 && !plan.has_sft_checkpoint)
        throw Error(ErrorKind::Validation, "RL stages require an SFT checkpoint or a non-zero SFT budget");
    if (plan.rl_end2end_batches > 0 && plan.rl_perceiver_batches == 0 &&
        state.stage != Stage::RL_PERCEIVER_ONLY)
        throw Error(ErrorKind::Validation, "stage order violated: end-to-end RL before perceiver-only RL");

    ScheduleResult result;
    result.state = state;
    result.state.seed = state.seed;

    if (plan.sft_steps > 0) {
        if (inputs.sft_items.empty()) throw Error(ErrorKind::Validation, "no SFT items provided");
        StageRecord rec;
        rec.stage = Stage::SFT;
        rec.policy_hash_before = model.policy_hash();
        rec.ref_hash_before = ref.full_hash();
        const auto start = std::chrono::steady_clock::now();
        SgdOptimizer opt(plan.sft_opt);
        std::size_t cursor = 0;
        for (int step = 0; step < plan.sft_steps; ++step) {
            policy::SftBatch batch;
            for (int b = 0; b < plan.sft_batch; ++b) {
                batch.items.push_back(inputs.sft_items[cursor % inputs.sft_items.size()]);
                ++cursor;
            }
            StepMetric m;
            m.sft_loss = policy::sft_step(*model.policy_net, batch, opt);
            m.step = ++result.state.step;
            rec.steps.push_back(m);
        }
        rec.wall_time_secs = seconds_since(start);
        rec.policy_hash_after = model.policy_hash();
        rec.ref_hash_after = ref.full_hash();
        result.stages.push_back(std::move(rec));
    }

    if (!wants_rl) return result;

    // Snapshot pi^SFT as the frozen reference before any RL stage.
    if (state.stage == Stage::SFT) ref.store.copy_values_from(model.store);

    SgdOptimizer rl_opt(SgdConfig{plan.ppo.lr, 0.0});
    auto run_rl_stage = [&](Stage stage, int batches) {
        if (batches <= 0) return;
        advance_stage(result.state, stage);
        PPOConfig cfg = plan.ppo;
        cfg.stage = stage;
        const bool first_rl_stage = result.stages.empty() || result.stages.back().stage == Stage::SFT;
        StageRecord rec;
        rec.stage = stage;
        rec.policy_hash_before = model.policy_hash();
        rec.ref_hash_before = ref.full_hash();
        const auto start = std::chrono::steady_clock::now();
        for (int b = 0; b < batches; ++b) {
            auto batch = collect_rollouts(model, ref, inputs.rollout_inputs, inputs.scorer,
                                          cfg.rollout_batch, result.state.seed, cfg, inputs.tokenizer,
                                          result.state.episodes_collected);
            result.state.episodes_collected += cfg.rollout_batch;
            result.state.failed_episodes += batch.failed;
            for (auto& ep : batch.episodes) {
                shape_rewards(ep);
                compute_advantages(ep, cfg);
            }
            cfg.value_only_update = first_rl_stage && b < plan.ppo.value_warmup_batches;
            StepMetric m;
            m.stats = ppo_update(batch.episodes, model, cfg, rl_opt);
            m.failed = batch.failed;
            m.step = ++result.state.step;
            result.state.mean_reward = m.stats.mean_reward;
            result.state.mean_kl = m.stats.mean_kl;
            result.state.expected_return = m.stats.mean_return;
            rec.steps.push_back(m);
            for (auto& ep : batch.episodes) result.rl_episodes.push_back(std::move(ep));
        }
        rec.wall_time_secs = seconds_since(start);
        rec.policy_hash_after = model.policy_hash();
        rec.ref_hash_after = ref.full_hash();
        result.stages.push_back(std::move(rec));
    };

    run_rl_stage(Stage::RL_PERCEIVER_ONLY, plan.rl_perceiver_batches);
    run_rl_stage(Stage::RL_END_TO_END, plan.rl_end2end_batches);
    return result;
}

} // namespace factsum::ppo
