#include "factsum/policy.hpp"

#include <cmath>
#include <sstream>

#include "factsum/error.hpp"
#include "factsum/labels.hpp"

namespace factsum::policy {

namespace {
constexpr double kMaskValue = -1e9;

Mat causal_mask(int n) {
    Mat m(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = r + 1; c < n; ++c) m.at(r, c) = kMaskValue;
    return m;
}
} // namespace

Seq2Seq::Attn Seq2Seq::make_attn(ParamSet& store, Rng& rng, const std::string& name) {
    const int d = cfg_.dim;
    Attn a;
    a.wq = store.add(name + ".wq", init_xavier(rng, d, d));
    a.wk = store.add(name + ".wk", init_xavier(rng, d, d));
    a.wv = store.add(name + ".wv", init_xavier(rng, d, d));
    a.wo = store.add(name + ".wo", init_xavier(rng, d, d));
    return a;
}

Seq2Seq::Seq2Seq(ParamSet& store, std::string prefix, const PolicyConfig& cfg)
    : store_(&store), prefix_(std::move(prefix)), cfg_(cfg) {
    if (cfg.vocab < 2) throw Error(ErrorKind::Config, "policy vocab must be >= 2");
    Rng rng = Rng(cfg.seed).fork(std::hash<std::string>{}(prefix_));
    const int d = cfg_.dim;

    tok_embed_ = store.add(prefix_ + ".tok_embed", init_uniform(rng, cfg.vocab, d, 0.5));
    enc_pos_ = store.add(prefix_ + ".enc_pos", init_uniform(rng, cfg.max_fused_rows, d, 0.1));
    dec_pos_ = store.add(prefix_ + ".dec_pos", init_uniform(rng, cfg.t_max, d, 0.1));

    for (int l = 0; l < cfg.enc_layers; ++l) {
        const std::string base = prefix_ + ".enc" + std::to_string(l);
        EncLayer layer;
        layer.norm1 = store.add(base + ".norm1", Mat::full(1, d, 1.0));
        layer.self_attn = make_attn(store, rng, base + ".self");
        layer.norm2 = store.add(base + ".norm2", Mat::full(1, d, 1.0));
        layer.ffn_w1 = store.add(base + ".ffn_w1", init_xavier(rng, d, cfg.ffn_hidden));
        layer.ffn_b1 = store.add(base + ".ffn_b1", Mat::zeros(1, cfg.ffn_hidden));
        layer.ffn_w2 = store.add(base + ".ffn_w2", init_xavier(rng, cfg.ffn_hidden, d));
        layer.ffn_b2 = store.add(base + ".ffn_b2", Mat::zeros(1, d));
        enc_layers_.push_back(layer);
    }
    enc_final_norm_ = store.add(prefix_ + ".enc_final_norm", Mat::full(1, d, 1.0));

    for (int l = 0; l < cfg.dec_layers; ++l) {
        const std::string base = prefix_ + ".dec" + std::to_string(l);
        DecLayer layer;
        layer.norm1 = store.add(base + ".norm1", Mat::full(1, d, 1.0));
        layer.self_attn = make_attn(store, rng, base + ".self");
        layer.norm2 = store.add(base + ".norm2", Mat::full(1, d, 1.0));
        layer.cross_attn = make_attn(store, rng, base + ".cross");
        layer.norm3 = store.add(base + ".norm3", Mat::full(1, d, 1.0));
        layer.ffn_w1 = store.add(base + ".ffn_w1", init_xavier(rng, d, cfg.ffn_hidden));
        layer.ffn_b1 = store.add(base + ".ffn_b1", Mat::zeros(1, cfg.ffn_hidden));
        layer.ffn_w2 = store.add(base + ".ffn_w2", init_xavier(rng, cfg.ffn_hidden, d));
        layer.ffn_b2 = store.add(base + ".ffn_b2", Mat::zeros(1, d));
        dec_layers_.push_back(layer);
    }
    dec_final_norm_ = store.add(prefix_ + ".dec_final_norm", Mat::full(1, d, 1.0));
    out_w_ = store.add(prefix_ + ".out_w", init_xavier(rng, d, cfg.vocab));
    out_b_ = store.add(prefix_ + ".out_b", Mat::zeros(1, cfg.vocab));
}

NodeId Seq2Seq::attend(Tape& t, const Attn& a, NodeId q_input, NodeId kv_input, bool causal) const {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.dim));
    const NodeId q = t.matmul(q_input, t.param(*store_, a.wq));
    const NodeId k = t.matmul(kv_input, t.param(*store_, a.wk));
    const NodeId v = t.matmul(kv_input, t.param(*store_, a.wv));
    NodeId scores = t.scale(t.matmul_nt(q, k), inv_sqrt_d);
    if (causal) scores = t.add(scores, t.constant(causal_mask(t.val(scores).rows)));
    const NodeId attn = t.softmax_rows(scores);
    return t.matmul(t.matmul(attn, v), t.param(*store_, a.wo));
}

NodeId Seq2Seq::ffn(Tape& t, NodeId x, ParamId w1, ParamId b1, ParamId w2, ParamId b2) const {
    const NodeId h = t.gelu(t.add_rowvec(t.matmul(x, t.param(*store_, w1)), t.param(*store_, b1)));
    return t.add_rowvec(t.matmul(h, t.param(*store_, w2)), t.param(*store_, b2));
}

NodeId Seq2Seq::encode(Tape& t, NodeId fused) const {
    const int rows = t.val(fused).rows;
    if (rows > cfg_.max_fused_rows)
        throw Error(ErrorKind::Config, "fused input rows " + std::to_string(rows) + " exceed max_fused_rows " +
                                           std::to_string(cfg_.max_fused_rows));
    std::vector<int> positions(rows);
    for (int i = 0; i < rows; ++i) positions[i] = i;
    NodeId x = t.add(fused, t.embed_rows(t.param(*store_, enc_pos_), positions));
    for (const auto& layer : enc_layers_) {
        const NodeId normed = t.rmsnorm_rows(x, t.param(*store_, layer.norm1));
        x = t.add(x, attend(t, layer.self_attn, normed, normed, /*causal=*/false));
        x = t.add(x, ffn(t, t.rmsnorm_rows(x, t.param(*store_, layer.norm2)), layer.ffn_w1, layer.ffn_b1,
                         layer.ffn_w2, layer.ffn_b2));
    }
    return t.rmsnorm_rows(x, t.param(*store_, enc_final_norm_));
}

NodeId Seq2Seq::decode_states(Tape& t, NodeId memory, const std::vector<int>& input_ids) const {
    if (input_ids.empty()) throw Error(ErrorKind::Validation, "decoder input must be non-empty");
    if (static_cast<int>(input_ids.size()) > cfg_.t_max)
        throw Error(ErrorKind::Config, "decoder input exceeds t_max");
    std::vector<int> positions(input_ids.size());
    for (std::size_t i = 0; i < input_ids.size(); ++i) positions[i] = static_cast<int>(i);
    NodeId x = t.add(t.embed_rows(t.param(*store_, tok_embed_), input_ids),
                     t.embed_rows(t.param(*store_, dec_pos_), positions));
    for (const auto& layer : dec_layers_) {
        const NodeId q1 = t.rmsnorm_rows(x, t.param(*store_, layer.norm1));
        x = t.add(x, attend(t, layer.self_attn, q1, q1, /*causal=*/true));
        const NodeId q2 = t.rmsnorm_rows(x, t.param(*store_, layer.norm2));
        x = t.add(x, attend(t, layer.cross_attn, q2, memory, /*causal=*/false));
        x = t.add(x, ffn(t, t.rmsnorm_rows(x, t.param(*store_, layer.norm3)), layer.ffn_w1, layer.ffn_b1,
                         layer.ffn_w2, layer.ffn_b2));
    }
    return t.rmsnorm_rows(x, t.param(*store_, dec_final_norm_));
}

NodeId Seq2Seq::logits(Tape& t, NodeId states) const {
    return t.add_rowvec(t.matmul(states, t.param(*store_, out_w_)), t.param(*store_, out_b_));
}

ValueHead::ValueHead(ParamSet& store, int dim) : store_(&store) {
    w_ = store.add("value.w", Mat::zeros(dim, 1));
    b_ = store.add("value.b", Mat::zeros(1, 1));
}

NodeId ValueHead::values(Tape& t, NodeId states) const {
    return t.add_rowvec(t.matmul(states, t.param(*store_, w_)), t.param(*store_, b_));
}

namespace {

// Log-probability row for the next token given a prefix; plain forward pass.
std::vector<double> next_token_logprobs(const Seq2Seq& model, const Mat& fused,
                                        const std::vector<int>& prefix) {
    Tape t;
    const NodeId memory = model.encode(t, t.constant(fused));
    const NodeId states = model.decode_states(t, memory, prefix);
    const NodeId ls = t.log_softmax_rows(model.logits(t, states));
    const Mat& rows = t.val(ls);
    std::vector<double> out(rows.cols);
    for (int c = 0; c < rows.cols; ++c) out[c] = rows.at(rows.rows - 1, c);
    return out;
}

} // namespace

SummarySample generate(const Mat& fused_active, const Seq2Seq& active, const Mat& fused_ref,
                       const Seq2Seq& ref, double temperature, Rng rng, const Tokenizer* tokenizer,
                       int t_max_override) {
    const int t_max = t_max_override > 0 ? std::min(t_max_override, active.config().t_max - 1)
                                         : active.config().t_max - 1; // one slot goes to <bos>
    if (t_max < 1) throw Error(ErrorKind::Config, "t_max too small to generate");

    SummarySample sample;
    std::vector<int> prefix = {Tokenizer::kBos};
    for (int step = 0; step < t_max; ++step) {
        const auto logp = next_token_logprobs(active, fused_active, prefix);
        int token = 0;
        if (temperature <= 0.0) {
            for (std::size_t i = 1; i < logp.size(); ++i)
                if (logp[i] > logp[token]) token = static_cast<int>(i); // ties keep lowest id
        } else {
            // Sample from softmax(logits / temperature) == softmax(logp / temperature).
            std::vector<double> w(logp.size());
            double mx = -1e300;
            for (double lp : logp) mx = std::max(mx, lp / temperature);
            for (std::size_t i = 0; i < logp.size(); ++i) w[i] = std::exp(logp[i] / temperature - mx);
            token = rng.categorical(w);
        }
        const auto logp_ref = next_token_logprobs(ref, fused_ref, prefix);
        sample.ids.push_back(token);
        sample.logp_active.push_back(logp[token]);
        sample.logp_ref.push_back(logp_ref[token]);
        if (token == Tokenizer::kEos) break;
        prefix.push_back(token);
    }
    if (tokenizer) sample.text = tokenizer->decode(sample.ids);
    return sample;
}

double sft_loss(Seq2Seq& policy, const SftBatch& batch) {
    if (batch.items.empty()) throw Error(ErrorKind::Validation, "sft batch must be non-empty");
    Tape t;
    NodeId total = t.constant(Mat::zeros(1, 1));
    int total_tokens = 0;
    for (const auto& item : batch.items) {
        if (item.target.empty()) throw Error(ErrorKind::Validation, "sft target must be non-empty");
        for (int id : item.target)
            if (id < 0 || id >= policy.config().vocab)
                throw Error(ErrorKind::Validation, "sft target id out of vocabulary");
        std::vector<int> dec_input;
        dec_input.push_back(Tokenizer::kBos);
        dec_input.insert(dec_input.end(), item.target.begin(), item.target.end() - 1);
        const NodeId memory = policy.encode(t, t.constant(item.fused));
        const NodeId states = policy.decode_states(t, memory, dec_input);
        const NodeId ls = t.log_softmax_rows(policy.logits(t, states));
        total = t.add(total, t.sum_all(t.pick(ls, item.target)));
        total_tokens += static_cast<int>(item.target.size());
    }
    const NodeId loss = t.scale(total, -1.0 / total_tokens);
    const double loss_value = t.val(loss).at(0, 0);
    if (!std::isfinite(loss_value)) {
        std::ostringstream diag;
        diag << "sft loss non-finite; batch=" << batch.items.size() << " tokens=" << total_tokens;
        throw Error(ErrorKind::Divergence, "sft loss diverged", diag.str());
    }
    t.backward(loss);
    return loss_value;
}

double sft_step(Seq2Seq& policy, const SftBatch& batch, SgdOptimizer& opt) {
    policy.store().zero_grads();
    const double loss = sft_loss(policy, batch);
    if (!policy.store().grads_finite()) {
        std::ostringstream diag;
        diag << "grad_l2=" << policy.store().grad_l2() << " loss=" << loss;
        throw Error(ErrorKind::Divergence, "sft gradient diverged", diag.str());
    }
    const std::string prefix = policy.prefix() + ".";
    opt.step(policy.store(), [&](const Param& p) { return p.name.rfind(prefix, 0) == 0; });
    return loss;
}

encoding::TokenSequence assemble_rationale_input(const std::string& claim, const std::string& label,
                                                 const std::vector<std::string>& summaries,
                                                 const Tokenizer& tokenizer) {
    if (claim.empty()) throw Error(ErrorKind::Validation, "rationale claim must be non-empty");
    const auto parsed = parse_label(label);
    if (!parsed) throw Error(ErrorKind::Validation, "unknown truthfulness label: " + label);

    encoding::TokenSequence seq;
    auto append_text = [&](const std::string& text) {
        for (int id : tokenizer.encode(text)) seq.ids.push_back(id);
    };
    append_text(claim);
    seq.ids.push_back(Tokenizer::kSep);
    append_text(label_name(*parsed));
    for (const auto& s : summaries) {
        seq.ids.push_back(Tokenizer::kSep);
        append_text(s);
    }
    return seq;
}

} // namespace factsum::policy
