#pragma once

#include <string>
#include <vector>

#include "factsum/encoding.hpp"
#include "factsum/mat.hpp"
#include "factsum/params.hpp"
#include "factsum/rng.hpp"
#include "factsum/tape.hpp"
#include "factsum/tokenizer.hpp"

namespace factsum::policy {

struct PolicyConfig {
    int dim = 32;
    int vocab = 0;
    int enc_layers = 2;
    int dec_layers = 2;
    int ffn_hidden = 64;
    int t_max = 64;          // max decode length
    int max_fused_rows = 192; // encoder positional table size
    std::uint64_t seed = 0;
};

// Micro encoder/decoder transformer over FusedInput rows. Pre-norm blocks,
// single-head scaled dot-product attention, learned positions. Desk-scale
// stand-in for the paper-scale summarizer; trained from scratch.
class Seq2Seq {
public:
    Seq2Seq(ParamSet& store, std::string prefix, const PolicyConfig& cfg);

    NodeId encode(Tape& t, NodeId fused) const;
    // Decoder hidden states for input ids (caller prepends <bos>); T x D.
    NodeId decode_states(Tape& t, NodeId memory, const std::vector<int>& input_ids) const;
    NodeId logits(Tape& t, NodeId states) const; // T x vocab

    const PolicyConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }
    ParamSet& store() const { return *store_; }

private:
    struct Attn {
        ParamId wq, wk, wv, wo;
    };
    struct EncLayer {
        ParamId norm1, norm2;
        Attn self_attn;
        ParamId ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    };
    struct DecLayer {
        ParamId norm1, norm2, norm3;
        Attn self_attn, cross_attn;
        ParamId ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    };

    Attn make_attn(ParamSet& store, Rng& rng, const std::string& name);
    NodeId attend(Tape& t, const Attn& a, NodeId q_input, NodeId kv_input, bool causal) const;
    NodeId ffn(Tape& t, NodeId x, ParamId w1, ParamId b1, ParamId w2, ParamId b2) const;

    ParamSet* store_;
    std::string prefix_;
    PolicyConfig cfg_;

    ParamId tok_embed_, enc_pos_, dec_pos_;
    std::vector<EncLayer> enc_layers_;
    std::vector<DecLayer> dec_layers_;
    ParamId enc_final_norm_, dec_final_norm_;
    ParamId out_w_, out_b_;
};

// Linear probe on decoder states producing per-token value estimates.
class ValueHead {
public:
    ValueHead(ParamSet& store, int dim);
    NodeId values(Tape& t, NodeId states) const; // T x 1

private:
    ParamSet* store_;
    ParamId w_, b_;
};

// One autoregressive rollout with per-token log-probs under the active and
// reference policies. `ids` includes the terminating <eos> when one was
// sampled within t_max steps.
struct SummarySample {
    std::vector<int> ids;
    std::vector<double> logp_active;
    std::vector<double> logp_ref;
    std::string text;
};

// Temperature 0 is greedy argmax with lowest-token-id tie-break. The
// reference policy scores the same sampled tokens against its own fused
// input (the frozen model owns its whole input pathway).
SummarySample generate(const Mat& fused_active, const Seq2Seq& active, const Mat& fused_ref,
                       const Seq2Seq& ref, double temperature, Rng rng, const Tokenizer* tokenizer,
                       int t_max_override = -1);

struct SftItem {
    Mat fused;
    std::vector<int> target; // non-empty, ids < vocab; usually ends with <eos>
};
struct SftBatch {
    std::vector<SftItem> items;
};

// One teacher-forced cross-entropy step over the batch (token-level mean).
// Updates only the policy's own parameters via plain SGD with momentum.
double sft_step(Seq2Seq& policy, const SftBatch& batch, SgdOptimizer& opt);

// Loss + gradients without the optimizer step (shared by sft_step and tests).
double sft_loss(Seq2Seq& policy, const SftBatch& batch);

// "claim </s> label </s> summary_1 </s> summary_2 ..." token ids.
encoding::TokenSequence assemble_rationale_input(const std::string& claim, const std::string& label,
                                                 const std::vector<std::string>& summaries,
                                                 const Tokenizer& tokenizer);

} // namespace factsum::policy
