#include "factsum/reward.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "factsum/error.hpp"
#include "factsum/prompts.hpp"
#include "factsum/rng.hpp"
#include "factsum/transport.hpp"

namespace factsum::reward {

bool EntailmentDistribution::valid(double tol) const {
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0 && x <= 1.0)) return false;
        sum += x;
    }
    return std::abs(sum - 1.0) <= tol;
}

double entailment_reward(const EntailmentDistribution& dist, Label gt) {
    double others = 0.0;
    for (int i = 0; i < 3; ++i)
        if (i != static_cast<int>(gt)) others += dist.p[i];
    return dist[gt] - 0.5 * others;
}

namespace {

const std::unordered_set<std::string>& negation_words() {
    static const std::unordered_set<std::string> words = {
        "not", "no", "never", "none", "neither", "nobody", "nothing",
    };
    return words;
}

double negation_count(const std::vector<std::string>& words) {
    double n = 0.0;
    for (const auto& w : words)
        if (negation_words().count(w)) n += 1.0;
    return n;
}

} // namespace

Mat EntailmentClassifier::extra_features(const std::vector<std::string>& premise_words,
                                         const std::vector<std::string>& hyp_words) const {
    std::unordered_set<std::string> premise_set(premise_words.begin(), premise_words.end());
    double overlap = 0.0;
    double content = 0.0;
    for (const auto& w : hyp_words) {
        if (negation_words().count(w)) continue;
        content += 1.0;
        if (premise_set.count(w)) overlap += 1.0;
    }
    const double frac = content > 0.0 ? overlap / content : 0.0;

    // Ordered-pair containment: fraction of hypothesis content-word pairs
    // (i < j) that occur in the premise in the same order. Degrades smoothly
    // under substitution noise, halves under scrambling.
    std::unordered_map<std::string, std::pair<int, int>> pos_range; // min/max occurrence
    for (std::size_t i = 0; i < premise_words.size(); ++i) {
        auto [it, inserted] = pos_range.try_emplace(premise_words[i], static_cast<int>(i), static_cast<int>(i));
        if (!inserted) it->second.second = static_cast<int>(i);
    }
    std::vector<const std::string*> hyp_content;
    for (const auto& w : hyp_words)
        if (!negation_words().count(w)) hyp_content.push_back(&w);
    double pair_hits = 0.0, pair_total = 0.0;
    for (std::size_t i = 0; i < hyp_content.size(); ++i)
        for (std::size_t j = i + 1; j < hyp_content.size(); ++j) {
            pair_total += 1.0;
            const auto a = pos_range.find(*hyp_content[i]);
            const auto b = pos_range.find(*hyp_content[j]);
            // Some occurrence of the pair in order: earliest u before latest v.
            if (a != pos_range.end() && b != pos_range.end() && a->second.first < b->second.second)
                pair_hits += 1.0;
        }
    const double frac2 = pair_total > 0.0 ? pair_hits / pair_total : 0.0;

    const double neg_p = negation_count(premise_words) > 0.0 ? 1.0 : 0.0;
    const double neg_h = negation_count(hyp_words) > 0.0 ? 1.0 : 0.0;
    return Mat::row({frac, frac2, neg_p, neg_h, std::abs(neg_p - neg_h)});
}

NodeId EntailmentClassifier::forward(Tape& t, const std::vector<int>& premise_ids,
                                     const std::vector<int>& hyp_ids, const Mat& extra, bool train_mode) {
    auto pnode = [&](ParamId id) {
        return train_mode ? t.param(params_, id) : t.constant(params_.at(id).value);
    };

    const NodeId embed = pnode(embed_);
    const NodeId mean_p = t.mean_rows(t.embed_rows(embed, premise_ids));
    const NodeId mean_h = t.mean_rows(t.embed_rows(embed, hyp_ids));
    const NodeId diff = t.sub(mean_p, mean_h);
    const NodeId sq = t.hadamard(diff, diff);
    const NodeId prod = t.hadamard(mean_p, mean_h);

    NodeId hidden = t.matmul(mean_p, pnode(w_p_));
    hidden = t.add(hidden, t.matmul(mean_h, pnode(w_h_)));
    hidden = t.add(hidden, t.matmul(sq, pnode(w_sq_)));
    hidden = t.add(hidden, t.matmul(prod, pnode(w_pr_)));
    hidden = t.add(hidden, t.matmul(t.constant(extra), pnode(w_ex_)));
    hidden = t.gelu(t.add_rowvec(hidden, pnode(b1_)));
    return t.add_rowvec(t.matmul(hidden, pnode(w2_)), pnode(b2_));
}

void EntailmentClassifier::build(const std::vector<NliExample>& pairs, const Config& cfg) {
    cfg_ = cfg;
    for (const auto& ex : pairs) {
        vocab_.add_text(ex.premise);
        vocab_.add_text(ex.hypothesis);
    }
    Rng rng = Rng(cfg.seed).fork(0xc1a55);
    const int d = cfg.dim;
    const int h = cfg.hidden;
    embed_ = params_.add("cls.embed", init_uniform(rng, vocab_.vocab_size(), d, 0.5));
    w_p_ = params_.add("cls.w_p", init_xavier(rng, d, h));
    w_h_ = params_.add("cls.w_h", init_xavier(rng, d, h));
    w_sq_ = params_.add("cls.w_sq", init_xavier(rng, d, h));
    w_pr_ = params_.add("cls.w_pr", init_xavier(rng, d, h));
    w_ex_ = params_.add("cls.w_ex", init_xavier(rng, 5, h));
    b1_ = params_.add("cls.b1", Mat::zeros(1, h));
    // Zero output layer: an untrained classifier scores every pair uniformly.
    w2_ = params_.add("cls.w2", Mat::zeros(h, 3));
    b2_ = params_.add("cls.b2", Mat::zeros(1, 3));
}

EntailmentClassifier EntailmentClassifier::untrained(const std::vector<NliExample>& vocab_source,
                                                     const Config& cfg) {
    EntailmentClassifier c;
    c.build(vocab_source, cfg);
    return c;
}

EntailmentClassifier EntailmentClassifier::train(const std::vector<NliExample>& pairs, const Config& cfg) {
    if (pairs.empty()) throw Error(ErrorKind::Validation, "entailment corpus is empty");
    std::set<int> seen;
    for (const auto& ex : pairs) seen.insert(static_cast<int>(ex.label));
    if (seen.size() < 3)
        throw Error(ErrorKind::Validation,
                    "degenerate entailment corpus: needs all three labels, has " + std::to_string(seen.size()));

    EntailmentClassifier c;
    c.build(pairs, cfg);

    struct Prepared {
        std::vector<int> premise_ids, hyp_ids;
        Mat extra;
        int label;
    };
    std::vector<Prepared> prep;
    prep.reserve(pairs.size());
    for (const auto& ex : pairs) {
        Prepared p;
        p.premise_ids = c.vocab_.encode(ex.premise);
        p.hyp_ids = c.vocab_.encode(ex.hypothesis);
        if (p.premise_ids.empty() || p.hyp_ids.empty())
            throw Error(ErrorKind::Validation, "empty premise or hypothesis in corpus");
        p.extra = c.extra_features(policy::Tokenizer::split_words(ex.premise),
                                   policy::Tokenizer::split_words(ex.hypothesis));
        p.label = static_cast<int>(ex.label);
        prep.push_back(std::move(p));
    }

    // Deterministic shuffle, then the tail becomes the held-out split.
    Rng shuffle_rng = Rng(cfg.seed).fork(0x5bfff1e);
    std::vector<int> order(prep.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    const int holdout = std::max(1, static_cast<int>(prep.size() * cfg.holdout_frac));
    const int train_n = static_cast<int>(prep.size()) - holdout;
    if (train_n < 1) throw Error(ErrorKind::Validation, "corpus too small for holdout split");

    AdamOptimizer opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int start = 0; start < train_n; start += cfg.batch) {
            const int end = std::min(train_n, start + cfg.batch);
            Tape t;
            NodeId total = t.constant(Mat::zeros(1, 1));
            for (int i = start; i < end; ++i) {
                const Prepared& p = prep[order[i]];
                const NodeId logits = c.forward(t, p.premise_ids, p.hyp_ids, p.extra, /*train_mode=*/true);
                const NodeId ls = t.log_softmax_rows(logits);
                total = t.add(total, t.pick(ls, {p.label}));
            }
            const NodeId loss = t.scale(total, -1.0 / (end - start));
            c.params_.zero_grads();
            t.backward(loss);
            if (!c.params_.grads_finite())
                throw Error(ErrorKind::Divergence, "classifier gradient diverged",
                            "epoch=" + std::to_string(epoch));
            opt.step(c.params_);
        }
    }

    int correct = 0;
    for (int i = train_n; i < static_cast<int>(prep.size()); ++i) {
        const Prepared& p = prep[order[i]];
        Tape t;
        const NodeId logits = c.forward(t, p.premise_ids, p.hyp_ids, p.extra, /*train_mode=*/false);
        const Mat& row = t.val(logits);
        int arg = 0;
        for (int j = 1; j < 3; ++j)
            if (row.at(0, j) > row.at(0, arg)) arg = j;
        if (arg == p.label) ++correct;
    }
    c.heldout_count_ = holdout;
    c.heldout_accuracy_ = holdout > 0 ? static_cast<double>(correct) / holdout : 0.0;
    return c;
}

EntailmentDistribution EntailmentClassifier::probs(const std::string& premise,
                                                   const std::string& hypothesis) const {
    auto* self = const_cast<EntailmentClassifier*>(this);
    Tape t;
    const auto premise_ids = vocab_.encode(premise.empty() ? "<pad>" : premise);
    const auto hyp_ids = vocab_.encode(hypothesis.empty() ? "<pad>" : hypothesis);
    const Mat extra = extra_features(policy::Tokenizer::split_words(premise),
                                     policy::Tokenizer::split_words(hypothesis));
    const NodeId logits = self->forward(t, premise_ids, hyp_ids, extra, /*train_mode=*/false);
    const NodeId sm = t.softmax_rows(logits);
    EntailmentDistribution dist;
    for (int i = 0; i < 3; ++i) dist.p[i] = t.val(sm).at(0, i);
    return dist;
}

Label EntailmentClassifier::predict(const std::string& premise, const std::string& hypothesis) const {
    const auto dist = probs(premise, hypothesis);
    int arg = 0;
    for (int i = 1; i < 3; ++i)
        if (dist.p[i] > dist.p[arg]) arg = i;
    return static_cast<Label>(arg);
}

double parse_quality_response(const std::string& raw) {
    static const std::string kPattern = "The quality score is";
    const auto pos = raw.find(kPattern);
    if (pos == std::string::npos)
        throw Error(ErrorKind::Parse, "quality critic response lacks the score pattern", raw);
    const char* p = raw.c_str() + pos + kPattern.size();
    while (*p == ' ' || *p == ':') ++p;
    char* end = nullptr;
    const double value = std::strtod(p, &end);
    if (end == p) throw Error(ErrorKind::Parse, "quality critic response lacks a numeric score", raw);
    return std::clamp(value, 0.0, 1.0);
}

double quality_score(const std::string& summary, const QualityCritic& critic) {
    if (critic.kind == QualityCritic::Kind::BuiltinHeuristic) {
        const double tokens = static_cast<double>(policy::Tokenizer::split_words(summary).size());
        const double target = static_cast<double>(critic.l_target);
        const double over = std::max(0.0, (tokens - target) / target);
        return std::clamp(1.0 - over, 0.0, 1.0);
    }
    transport::InFlightGuard guard(critic.max_in_flight);
    const std::string prompt = prompts::render_quality_prompt(summary);
    const std::string response = transport::call_endpoint(critic.endpoint, prompt, critic.timeout_secs);
    return parse_quality_response(response);
}

double kl_estimate(const policy::SummarySample& sample) {
    if (sample.logp_active.size() != sample.logp_ref.size())
        throw Error(ErrorKind::Validation, "sample log-prob lists are misaligned");
    double kl = 0.0;
    for (std::size_t i = 0; i < sample.logp_active.size(); ++i)
        kl += sample.logp_active[i] - sample.logp_ref[i];
    return kl;
}

RewardBreakdown total_reward(double r_entail, double r_quality, double kl, double eta) {
    if (eta < 0.0) throw Error(ErrorKind::Validation, "eta must be >= 0");
    RewardBreakdown b;
    b.r_entail = r_entail;
    b.r_quality = r_quality;
    b.kl = kl;
    b.eta = eta;
    b.r_total = (r_quality + r_entail - eta * kl) / 2.0;
    return b;
}

} // namespace factsum::reward
