#include "factsum/fusion.hpp"

#include <cmath>

#include "factsum/error.hpp"

namespace factsum::fusion {

FusionBlock::FusionBlock(ParamSet& store, const FusionConfig& cfg) : store_(&store), cfg_(cfg) {
    // The paper gives no initialization; small uniform noise under the run
    // seed, zero projection bias.
    Rng rng = Rng(cfg.seed).fork(0xf051);
    const int d = cfg.dim;
    wq_ = store.add("fusion.wq", init_uniform(rng, d, d, 0.02));
    wk_ = store.add("fusion.wk", init_uniform(rng, d, d, 0.02));
    wv_ = store.add("fusion.wv", init_uniform(rng, d, d, 0.02));
    wo_ = store.add("fusion.wo", init_uniform(rng, d, d, 0.02));
    proj_ = store.add("fusion.proj", init_uniform(rng, d, d, 0.02));
    proj_bias_ = store.add("fusion.proj_bias", Mat::zeros(1, d));
}

NodeId FusionBlock::cross_attend(Tape& t, NodeId claim, NodeId images, Mat* attn) const {
    const Mat& xc = t.val(claim);
    const Mat& xi = t.val(images);
    if (xc.cols != cfg_.dim)
        throw Error(ErrorKind::Config, "cross_attend claim dim mismatch");
    if (xi.rows == 0) {
        if (attn) *attn = Mat();
        return t.constant(Mat::zeros(xc.rows, cfg_.dim));
    }
    if (xi.cols != cfg_.dim) throw Error(ErrorKind::Config, "cross_attend image dim mismatch");

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.dim));
    const NodeId q = t.matmul(claim, t.param(*store_, wq_));
    const NodeId k = t.matmul(images, t.param(*store_, wk_));
    const NodeId v = t.matmul(images, t.param(*store_, wv_));
    const NodeId weights = t.softmax_rows(t.scale(t.matmul_nt(q, k), inv_sqrt_d));
    if (attn) *attn = t.val(weights);
    return t.matmul(t.matmul(weights, v), t.param(*store_, wo_));
}

NodeId FusionBlock::project_concat(Tape& t, NodeId x_ic, NodeId x_d) const {
    const Mat& proj = store_->at(proj_).value;
    if (t.val(x_ic).cols != proj.rows)
        throw Error(ErrorKind::Config, "project_concat input dim mismatch");
    if (proj.cols != t.val(x_d).cols)
        throw Error(ErrorKind::Config, "project_concat output dim does not match document dim");
    const NodeId projected =
        t.add_rowvec(t.matmul(x_ic, t.param(*store_, proj_)), t.param(*store_, proj_bias_));
    return t.concat_rows(projected, x_d);
}

Mat FusionBlock::cross_attend_values(const Mat& claim, const Mat& images, Mat* attn) const {
    Tape t;
    return t.val(cross_attend(t, t.constant(claim), t.constant(images), attn));
}

Mat FusionBlock::project_concat_values(const Mat& x_ic, const Mat& x_d) const {
    Tape t;
    return t.val(project_concat(t, t.constant(x_ic), t.constant(x_d)));
}

NodeId fuse_inputs(Tape& t, NodeId claim, NodeId images, const std::vector<NodeId>& doc_chunks,
                   const encoding::PerceiverResampler& doc_resampler, const FusionBlock& fusion) {
    const NodeId x_d = doc_resampler.merge(t, doc_chunks);
    const NodeId x_ic = fusion.cross_attend(t, claim, images);
    return fusion.project_concat(t, x_ic, x_d);
}

} // namespace factsum::fusion
