#include "factsum/tape.hpp"

#include <cmath>

#include "factsum/error.hpp"

namespace factsum {

NodeId Tape::push(Mat val, bool tracked, std::function<void()> back) {
    Node n;
    n.val = std::move(val);
    if (tracked) n.grad = Mat::zeros(n.val.rows, n.val.cols);
    n.tracked = tracked;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Mat m) { return push(std::move(m), false); }

NodeId Tape::leaf(Mat m) { return push(std::move(m), true); }

NodeId Tape::param(ParamSet& params, ParamId id) {
    Param& p = params.at(id);
    ParamSet* ps = &params;
    const NodeId n = push(p.value, true);
    nodes_[n].back = [this, n, ps, id]() {
        Param& prm = ps->at(id);
        prm.grad += nodes_[n].grad;
    };
    return n;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Mat& A = nodes_[a].val;
    const Mat& B = nodes_[b].val;
    if (A.cols != B.rows) throw Error(ErrorKind::Config, "matmul shape mismatch");
    const bool tr = tracked(a) || tracked(b);
    const NodeId n = push(factsum::matmul(A, B), tr);
    if (tr)
        nodes_[n].back = [this, n, a, b]() {
            const Mat& g = nodes_[n].grad;
            if (tracked(a)) nodes_[a].grad += factsum::matmul_nt(g, nodes_[b].val);
            if (tracked(b)) nodes_[b].grad += factsum::matmul_tn(nodes_[a].val, g);
        };
    return n;
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
    const Mat& A = nodes_[a].val;
    const Mat& B = nodes_[b].val;
    if (A.cols != B.cols) throw Error(ErrorKind::Config, "matmul_nt shape mismatch");
    const bool tr = tracked(a) || tracked(b);
    const NodeId n = push(factsum::matmul_nt(A, B), tr);
    if (tr)
        nodes_[n].back = [this, n, a, b]() {
            const Mat& g = nodes_[n].grad; // g: A.rows x B.rows
            if (tracked(a)) nodes_[a].grad += factsum::matmul(g, nodes_[b].val);
            if (tracked(b)) nodes_[b].grad += factsum::matmul_tn(g, nodes_[a].val);
        };
    return n;
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Mat& A = nodes_[a].val;
    const Mat& B = nodes_[b].val;
    if (!A.same_shape(B)) throw Error(ErrorKind::Config, "add shape mismatch");
    Mat out = A;
    out += B;
    const bool tr = tracked(a) || tracked(b);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, b]() {
            if (tracked(a)) nodes_[a].grad += nodes_[n].grad;
            if (tracked(b)) nodes_[b].grad += nodes_[n].grad;
        };
    return n;
}

NodeId Tape::sub(NodeId a, NodeId b) { return add(a, scale(b, -1.0)); }

NodeId Tape::add_rowvec(NodeId a, NodeId bias) {
    const Mat& A = nodes_[a].val;
    const Mat& B = nodes_[bias].val;
    if (B.rows != 1 || B.cols != A.cols) throw Error(ErrorKind::Config, "add_rowvec shape mismatch");
    Mat out = A;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) += B.at(0, c);
    const bool tr = tracked(a) || tracked(bias);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, bias]() {
            const Mat& g = nodes_[n].grad;
            if (tracked(a)) nodes_[a].grad += g;
            if (tracked(bias)) {
                Mat& bg = nodes_[bias].grad;
                for (int r = 0; r < g.rows; ++r)
                    for (int c = 0; c < g.cols; ++c) bg.at(0, c) += g.at(r, c);
            }
        };
    return n;
}

NodeId Tape::scale(NodeId a, double c) {
    Mat out = nodes_[a].val;
    out *= c;
    const bool tr = tracked(a);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, c]() {
            const Mat& g = nodes_[n].grad;
            Mat& ag = nodes_[a].grad;
            for (std::size_t i = 0; i < g.v.size(); ++i) ag.v[i] += c * g.v[i];
        };
    return n;
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
    const Mat& A = nodes_[a].val;
    const Mat& B = nodes_[b].val;
    if (!A.same_shape(B)) throw Error(ErrorKind::Config, "hadamard shape mismatch");
    Mat out = A;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= B.v[i];
    const bool tr = tracked(a) || tracked(b);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, b]() {
            const Mat& g = nodes_[n].grad;
            if (tracked(a)) {
                Mat& ag = nodes_[a].grad;
                const Mat& B2 = nodes_[b].val;
                for (std::size_t i = 0; i < g.v.size(); ++i) ag.v[i] += g.v[i] * B2.v[i];
            }
            if (tracked(b)) {
                Mat& bg = nodes_[b].grad;
                const Mat& A2 = nodes_[a].val;
                for (std::size_t i = 0; i < g.v.size(); ++i) bg.v[i] += g.v[i] * A2.v[i];
            }
        };
    return n;
}

NodeId Tape::exp_(NodeId a) {
    Mat out = nodes_[a].val;
    for (double& x : out.v) x = std::exp(x);
    const bool tr = tracked(a);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a]() {
            const Mat& g = nodes_[n].grad;
            const Mat& y = nodes_[n].val;
            Mat& ag = nodes_[a].grad;
            for (std::size_t i = 0; i < g.v.size(); ++i) ag.v[i] += g.v[i] * y.v[i];
        };
    return n;
}

NodeId Tape::gelu(NodeId a) {
    static constexpr double kInvSqrt2 = 0.70710678118654752440;
    static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    Mat out = nodes_[a].val;
    for (double& x : out.v) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    const bool tr = tracked(a);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a]() {
            const Mat& g = nodes_[n].grad;
            const Mat& x = nodes_[a].val;
            Mat& ag = nodes_[a].grad;
            for (std::size_t i = 0; i < g.v.size(); ++i) {
                const double xi = x.v[i];
                const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
                ag.v[i] += g.v[i] * (cdf + xi * pdf);
            }
        };
    return n;
}

NodeId Tape::softmax_rows(NodeId a) {
    const Mat& A = nodes_[a].val;
    Mat out(A.rows, A.cols);
    for (int r = 0; r < A.rows; ++r) {
        double mx = A.at(r, 0);
        for (int c = 1; c < A.cols; ++c) mx = std::max(mx, A.at(r, c));
        double z = 0.0;
        for (int c = 0; c < A.cols; ++c) {
            const double e = std::exp(A.at(r, c) - mx);
            out.at(r, c) = e;
            z += e;
        }
        for (int c = 0; c < A.cols; ++c) out.at(r, c) /= z;
    }
    const bool tr = tracked(a);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a]() {
            const Mat& g = nodes_[n].grad;
            const Mat& p = nodes_[n].val;
            Mat& ag = nodes_[a].grad;
            for (int r = 0; r < g.rows; ++r) {
                double dot = 0.0;
                for (int c = 0; c < g.cols; ++c) dot += g.at(r, c) * p.at(r, c);
                for (int c = 0; c < g.cols; ++c) ag.at(r, c) += p.at(r, c) * (g.at(r, c) - dot);
            }
        };
    return n;
}

NodeId Tape::log_softmax_rows(NodeId a) {
    const Mat& A = nodes_[a].val;
    Mat out(A.rows, A.cols);
    for (int r = 0; r < A.rows; ++r) {
        double mx = A.at(r, 0);
        for (int c = 1; c < A.cols; ++c) mx = std::max(mx, A.at(r, c));
        double z = 0.0;
        for (int c = 0; c < A.cols; ++c) z += std::exp(A.at(r, c) - mx);
        const double lz = mx + std::log(z);
        for (int c = 0; c < A.cols; ++c) out.at(r, c) = A.at(r, c) - lz;
    }
    const bool tr = tracked(a);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a]() {
            const Mat& g = nodes_[n].grad;
            const Mat& ls = nodes_[n].val;
            Mat& ag = nodes_[a].grad;
            for (int r = 0; r < g.rows; ++r) {
                double gs = 0.0;
                for (int c = 0; c < g.cols; ++c) gs += g.at(r, c);
                for (int c = 0; c < g.cols; ++c) ag.at(r, c) += g.at(r, c) - std::exp(ls.at(r, c)) * gs;
            }
        };
    return n;
}

NodeId Tape::rmsnorm_rows(NodeId a, NodeId gain) {
    static constexpr double kEps = 1e-6;
    const Mat& A = nodes_[a].val;
    const Mat& G = nodes_[gain].val;
    if (G.rows != 1 || G.cols != A.cols) throw Error(ErrorKind::Config, "rmsnorm gain shape mismatch");
    Mat out(A.rows, A.cols);
    std::vector<double> inv_rms(A.rows);
    for (int r = 0; r < A.rows; ++r) {
        double ss = 0.0;
        for (int c = 0; c < A.cols; ++c) ss += A.at(r, c) * A.at(r, c);
        const double inv = 1.0 / std::sqrt(ss / A.cols + kEps);
        inv_rms[r] = inv;
        for (int c = 0; c < A.cols; ++c) out.at(r, c) = A.at(r, c) * inv * G.at(0, c);
    }
    const bool tr = tracked(a) || tracked(gain);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, gain, inv_rms = std::move(inv_rms)]() {
            const Mat& g = nodes_[n].grad;
            const Mat& x = nodes_[a].val;
            const Mat& gn = nodes_[gain].val;
            const int C = x.cols;
            for (int r = 0; r < g.rows; ++r) {
                const double inv = inv_rms[r];
                if (tracked(gain)) {
                    Mat& gg = nodes_[gain].grad;
                    for (int c = 0; c < C; ++c) gg.at(0, c) += g.at(r, c) * x.at(r, c) * inv;
                }
                if (tracked(a)) {
                    Mat& ag = nodes_[a].grad;
                    double dot = 0.0; // sum_k g_k * gain_k * x_k
                    for (int c = 0; c < C; ++c) dot += g.at(r, c) * gn.at(0, c) * x.at(r, c);
                    const double inv3 = inv * inv * inv / C;
                    for (int c = 0; c < C; ++c)
                        ag.at(r, c) += g.at(r, c) * gn.at(0, c) * inv - x.at(r, c) * dot * inv3;
                }
            }
        };
    return n;
}

NodeId Tape::embed_rows(NodeId table, const std::vector<int>& ids) {
    const Mat& T = nodes_[table].val;
    Mat out(static_cast<int>(ids.size()), T.cols);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || ids[r] >= T.rows) throw Error(ErrorKind::Validation, "embedding id out of range");
        for (int c = 0; c < T.cols; ++c) out.at(static_cast<int>(r), c) = T.at(ids[r], c);
    }
    const bool tr = tracked(table);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, table, ids]() {
            const Mat& g = nodes_[n].grad;
            Mat& tg = nodes_[table].grad;
            for (std::size_t r = 0; r < ids.size(); ++r)
                for (int c = 0; c < g.cols; ++c) tg.at(ids[r], c) += g.at(static_cast<int>(r), c);
        };
    return n;
}

NodeId Tape::concat_rows(NodeId a, NodeId b) {
    const Mat& A = nodes_[a].val;
    const Mat& B = nodes_[b].val;
    if (A.cols != B.cols) throw Error(ErrorKind::Config, "concat_rows column mismatch");
    Mat out(A.rows + B.rows, A.cols);
    std::copy(A.v.begin(), A.v.end(), out.v.begin());
    std::copy(B.v.begin(), B.v.end(), out.v.begin() + A.v.size());
    const bool tr = tracked(a) || tracked(b);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, b]() {
            const Mat& g = nodes_[n].grad;
            if (tracked(a)) {
                Mat& ag = nodes_[a].grad;
                for (std::size_t i = 0; i < ag.v.size(); ++i) ag.v[i] += g.v[i];
            }
            if (tracked(b)) {
                Mat& bg = nodes_[b].grad;
                const std::size_t off = nodes_[a].val.size();
                for (std::size_t i = 0; i < bg.v.size(); ++i) bg.v[i] += g.v[off + i];
            }
        };
    return n;
}

NodeId Tape::slice_rows(NodeId a, int r0, int r1) {
    const Mat& A = nodes_[a].val;
    if (r0 < 0 || r1 > A.rows || r0 > r1) throw Error(ErrorKind::Config, "slice_rows out of range");
    Mat out(r1 - r0, A.cols);
    std::copy(A.v.begin() + static_cast<std::size_t>(r0) * A.cols,
              A.v.begin() + static_cast<std::size_t>(r1) * A.cols, out.v.begin());
    const bool tr = tracked(a);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, r0]() {
            const Mat& g = nodes_[n].grad;
            Mat& ag = nodes_[a].grad;
            const std::size_t off = static_cast<std::size_t>(r0) * ag.cols;
            for (std::size_t i = 0; i < g.v.size(); ++i) ag.v[off + i] += g.v[i];
        };
    return n;
}

NodeId Tape::sum_all(NodeId a) {
    const Mat& A = nodes_[a].val;
    double s = 0.0;
    for (double x : A.v) s += x;
    Mat out(1, 1);
    out.at(0, 0) = s;
    const bool tr = tracked(a);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a]() {
            const double g = nodes_[n].grad.at(0, 0);
            Mat& ag = nodes_[a].grad;
            for (double& x : ag.v) x += g;
        };
    return n;
}

NodeId Tape::mean_all(NodeId a) {
    const double inv = 1.0 / static_cast<double>(nodes_[a].val.size());
    return scale(sum_all(a), inv);
}

NodeId Tape::mean_rows(NodeId a) {
    const Mat& A = nodes_[a].val;
    Mat out(1, A.cols);
    for (int r = 0; r < A.rows; ++r)
        for (int c = 0; c < A.cols; ++c) out.at(0, c) += A.at(r, c);
    const double inv = 1.0 / std::max(1, A.rows);
    for (double& x : out.v) x *= inv;
    const bool tr = tracked(a);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, inv]() {
            const Mat& g = nodes_[n].grad;
            Mat& ag = nodes_[a].grad;
            for (int r = 0; r < ag.rows; ++r)
                for (int c = 0; c < ag.cols; ++c) ag.at(r, c) += g.at(0, c) * inv;
        };
    return n;
}

NodeId Tape::pick(NodeId a, const std::vector<int>& cols) {
    const Mat& A = nodes_[a].val;
    if (static_cast<int>(cols.size()) != A.rows) throw Error(ErrorKind::Config, "pick length mismatch");
    Mat out(A.rows, 1);
    for (int r = 0; r < A.rows; ++r) {
        if (cols[r] < 0 || cols[r] >= A.cols) throw Error(ErrorKind::Validation, "pick column out of range");
        out.at(r, 0) = A.at(r, cols[r]);
    }
    const bool tr = tracked(a);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, cols]() {
            const Mat& g = nodes_[n].grad;
            Mat& ag = nodes_[a].grad;
            for (int r = 0; r < g.rows; ++r) ag.at(r, cols[r]) += g.at(r, 0);
        };
    return n;
}

NodeId Tape::clamp(NodeId a, double lo, double hi) {
    Mat out = nodes_[a].val;
    for (double& x : out.v) x = std::min(hi, std::max(lo, x));
    const bool tr = tracked(a);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, lo, hi]() {
            const Mat& g = nodes_[n].grad;
            const Mat& x = nodes_[a].val;
            Mat& ag = nodes_[a].grad;
            for (std::size_t i = 0; i < g.v.size(); ++i)
                if (x.v[i] > lo && x.v[i] < hi) ag.v[i] += g.v[i];
        };
    return n;
}

NodeId Tape::minimum(NodeId a, NodeId b) {
    const Mat& A = nodes_[a].val;
    const Mat& B = nodes_[b].val;
    if (!A.same_shape(B)) throw Error(ErrorKind::Config, "minimum shape mismatch");
    Mat out = A;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = std::min(A.v[i], B.v[i]);
    const bool tr = tracked(a) || tracked(b);
    const NodeId n = push(std::move(out), tr);
    if (tr)
        nodes_[n].back = [this, n, a, b]() {
            const Mat& g = nodes_[n].grad;
            const Mat& A2 = nodes_[a].val;
            const Mat& B2 = nodes_[b].val;
            for (std::size_t i = 0; i < g.v.size(); ++i) {
                const bool pick_a = A2.v[i] <= B2.v[i];
                if (pick_a && tracked(a)) nodes_[a].grad.v[i] += g.v[i];
                if (!pick_a && tracked(b)) nodes_[b].grad.v[i] += g.v[i];
            }
        };
    return n;
}

void Tape::backward(NodeId root) {
    Node& r = nodes_[root];
    if (r.val.rows != 1 || r.val.cols != 1) throw Error(ErrorKind::Config, "backward root must be scalar");
    if (!r.tracked) return;
    r.grad.at(0, 0) = 1.0;
    for (auto it = nodes_.rbegin() + (nodes_.size() - 1 - root); it != nodes_.rend(); ++it)
        if (it->back) it->back();
}

double gradient_check(ParamSet& params, const std::function<double()>& loss, double epsilon) {
    params.zero_grads();
    (void)loss(); // populates analytic grads via the caller's backward()
    std::vector<Mat> analytic;
    analytic.reserve(params.count());
    params.for_each([&](Param& p) { analytic.push_back(p.grad); });

    double worst = 0.0;
    std::size_t idx = 0;
    params.for_each([&](Param& p) {
        const Mat& ag = analytic[idx++];
        if (!p.trainable) return;
        for (std::size_t i = 0; i < p.value.v.size(); ++i) {
            const double keep = p.value.v[i];
            p.value.v[i] = keep + epsilon;
            const double up = loss();
            p.value.v[i] = keep - epsilon;
            const double down = loss();
            p.value.v[i] = keep;
            const double numeric = (up - down) / (2.0 * epsilon);
            // The 1e-6 floor absorbs central-difference cancellation noise on
            // near-zero gradients without masking real backprop errors.
            const double rel =
                std::abs(ag.v[i] - numeric) / std::max({std::abs(ag.v[i]), std::abs(numeric), 1e-6});
            worst = std::max(worst, rel);
        }
    });

    idx = 0;
    params.for_each([&](Param& p) { p.grad = analytic[idx++]; });
    return worst;
}

} // namespace factsum
