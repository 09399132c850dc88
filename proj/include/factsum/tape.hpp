#pragma once

#include <functional>
#include <vector>

#include "factsum/mat.hpp"
#include "factsum/params.hpp"

namespace factsum {

using NodeId = int;

// Reverse-mode autodiff over Mat values. One Tape per forward computation;
// backward() runs the recorded closures in reverse. Parameter gradients
// accumulate into the owning ParamSet, so several graphs can contribute to
// one optimizer step.
class Tape {
public:
    // Untracked value: gradients never flow into it.
    NodeId constant(Mat m);
    // Tracked non-parameter input; its gradient is readable after backward().
    NodeId leaf(Mat m);
    // Tracked parameter; backward() adds into params.at(id).grad.
    NodeId param(ParamSet& params, ParamId id);

    const Mat& val(NodeId n) const { return nodes_[n].val; }
    const Mat& grad(NodeId n) const { return nodes_[n].grad; }

    NodeId matmul(NodeId a, NodeId b);
    NodeId matmul_nt(NodeId a, NodeId b); // a * b^T
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId add_rowvec(NodeId a, NodeId bias); // bias is 1 x cols, broadcast over rows
    NodeId scale(NodeId a, double c);
    NodeId hadamard(NodeId a, NodeId b);
    NodeId exp_(NodeId a);
    NodeId gelu(NodeId a);
    NodeId softmax_rows(NodeId a);
    NodeId log_softmax_rows(NodeId a);
    NodeId rmsnorm_rows(NodeId a, NodeId gain); // gain is 1 x cols
    NodeId embed_rows(NodeId table, const std::vector<int>& ids);
    NodeId concat_rows(NodeId a, NodeId b);
    NodeId slice_rows(NodeId a, int r0, int r1); // half-open [r0, r1)
    NodeId sum_all(NodeId a);                    // 1x1
    NodeId mean_all(NodeId a);                   // 1x1
    NodeId mean_rows(NodeId a);                  // 1 x cols, column means over rows
    NodeId pick(NodeId a, const std::vector<int>& cols); // rows x 1, a(r, cols[r])
    NodeId clamp(NodeId a, double lo, double hi); // grad passes only strictly inside
    NodeId minimum(NodeId a, NodeId b);           // elementwise; ties route grad to a

    // Seeds d(root)/d(root) = 1 and propagates. root must be 1x1.
    void backward(NodeId root);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Mat val;
        Mat grad;
        bool tracked = false;
        std::function<void()> back; // empty for constants/leaves
    };

    NodeId push(Mat val, bool tracked, std::function<void()> back = {});
    bool tracked(NodeId n) const { return nodes_[n].tracked; }

    std::vector<Node> nodes_;
};

// Central finite-difference gradient check helper. Returns the max relative
// error between analytic grads and central differences over every trainable
// scalar of `params`, where `loss` rebuilds the computation from scratch.
double gradient_check(ParamSet& params, const std::function<double()>& loss, double epsilon = 1e-5);

} // namespace factsum
