#pragma once

#include "factsum/encoding.hpp"
#include "factsum/mat.hpp"
#include "factsum/params.hpp"
#include "factsum/tape.hpp"

namespace factsum::fusion {

struct FusionConfig {
    int dim = 64;
    std::uint64_t seed = 0;
};

// Claim-query cross-attention over image tokens, then a linear projection of
// the attended output stacked on top of the document embeddings. A single
// attention head; scores scaled by 1/sqrt(D).
class FusionBlock {
public:
    FusionBlock(ParamSet& store, const FusionConfig& cfg);

    // Output rows = claim rows. An empty image set yields the configured
    // no-visual-content zero matrix so text-only evidence degrades gracefully.
    NodeId cross_attend(Tape& t, NodeId claim, NodeId images, Mat* attn = nullptr) const;

    // [proj(x_ic); x_d] — projected claim-image rows first, then documents.
    NodeId project_concat(Tape& t, NodeId x_ic, NodeId x_d) const;

    Mat cross_attend_values(const Mat& claim, const Mat& images, Mat* attn = nullptr) const;
    Mat project_concat_values(const Mat& x_ic, const Mat& x_d) const;

private:
    ParamSet* store_;
    FusionConfig cfg_;
    ParamId wq_, wk_, wv_, wo_;
    ParamId proj_, proj_bias_;
};

// Full Eq. 1 + Eq. 2 path: documents resampled to L x D, claim attends over
// images, projection + vertical stack. The differentiable spine of both RL
// stages.
NodeId fuse_inputs(Tape& t, NodeId claim, NodeId images, const std::vector<NodeId>& doc_chunks,
                   const encoding::PerceiverResampler& doc_resampler, const FusionBlock& fusion);

} // namespace factsum::fusion
