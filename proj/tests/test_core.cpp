#include <doctest.h>

#include "factsum/mat.hpp"
#include "factsum/params.hpp"
#include "factsum/rng.hpp"
#include "factsum/sha256.hpp"
#include "factsum/tape.hpp"

using namespace factsum;

TEST_CASE("rng: deterministic streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c = Rng(42).fork(1);
    Rng d = Rng(42).fork(2);
    CHECK(c.next_u64() != d.next_u64());
    Rng e(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = e.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("sha256: known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("mat: matmul variants agree") {
    Rng rng(3);
    Mat a = init_uniform(rng, 3, 4, 1.0);
    Mat b = init_uniform(rng, 4, 5, 1.0);
    const Mat c = matmul(a, b);
    // a*b == (a * (b^T)^T) via matmul_nt on transposed data
    Mat bt(5, 4);
    for (int r = 0; r < 4; ++r)
        for (int col = 0; col < 5; ++col) bt.at(col, r) = b.at(r, col);
    CHECK(max_abs_diff(c, matmul_nt(a, bt)) < 1e-12);
}

TEST_CASE("tape: gradients match finite differences on a composite graph") {
    ParamSet params;
    Rng rng(11);
    const ParamId w1 = params.add("w1", init_uniform(rng, 4, 6, 0.5));
    const ParamId b1 = params.add("b1", init_uniform(rng, 1, 6, 0.5));
    const ParamId w2 = params.add("w2", init_uniform(rng, 6, 3, 0.5));
    const ParamId gain = params.add("gain", Mat::full(1, 4, 1.0));
    const Mat x = init_uniform(rng, 5, 4, 1.0);

    auto loss = [&]() {
        Tape t;
        const NodeId xn = t.constant(x);
        const NodeId normed = t.rmsnorm_rows(xn, t.param(params, gain));
        const NodeId h = t.gelu(t.add_rowvec(t.matmul(normed, t.param(params, w1)), t.param(params, b1)));
        const NodeId sm = t.softmax_rows(t.matmul(h, t.param(params, w2)));
        const NodeId picked = t.pick(t.log_softmax_rows(t.matmul(h, t.param(params, w2))), {0, 1, 2, 0, 1});
        const NodeId out = t.add(t.mean_all(t.hadamard(sm, sm)), t.mean_all(picked));
        const NodeId root = t.mean_all(t.exp_(t.scale(out, 0.5)));
        const double v = t.val(root).at(0, 0);
        t.backward(root);
        return v;
    };
    CHECK(gradient_check(params, loss) < 1e-6);
}

TEST_CASE("tape: clamp and minimum route gradients by branch") {
    ParamSet params;
    const ParamId p = params.add("p", Mat::row({0.5, 2.0, -1.0}));
    auto loss = [&]() {
        Tape t;
        const NodeId x = t.param(params, p);
        const NodeId clamped = t.clamp(x, 0.0, 1.0);
        const NodeId m = t.minimum(clamped, t.scale(x, 0.25));
        const NodeId root = t.sum_all(m);
        const double v = t.val(root).at(0, 0);
        t.backward(root);
        return v;
    };
    params.zero_grads();
    loss();
    // x=0.5: min(0.5, 0.125) -> scaled arm, grad 0.25
    // x=2.0: min(1.0, 0.5)   -> scaled arm, grad 0.25
    // x=-1:  min(0.0, -0.25) -> scaled arm, grad 0.25
    const Param& prm = params.at(p);
    CHECK(prm.grad.at(0, 0) == doctest::Approx(0.25));
    CHECK(prm.grad.at(0, 1) == doctest::Approx(0.25));
    CHECK(prm.grad.at(0, 2) == doctest::Approx(0.25));
}

TEST_CASE("tape: concat/slice round trip gradients") {
    ParamSet params;
    Rng rng(5);
    const ParamId a = params.add("a", init_uniform(rng, 2, 3, 1.0));
    const ParamId b = params.add("b", init_uniform(rng, 4, 3, 1.0));
    auto loss = [&]() {
        Tape t;
        const NodeId cat = t.concat_rows(t.param(params, a), t.param(params, b));
        const NodeId top = t.slice_rows(cat, 0, 2);
        const NodeId bottom = t.slice_rows(cat, 2, 6);
        const NodeId root = t.add(t.mean_all(t.hadamard(top, top)), t.scale(t.mean_all(bottom), 2.0));
        const double v = t.val(root).at(0, 0);
        t.backward(root);
        return v;
    };
    CHECK(gradient_check(params, loss) < 1e-6);
}

TEST_CASE("params: float32 blob round trip is bit-identical") {
    ParamSet a;
    Rng rng(9);
    a.add("x", init_uniform(rng, 3, 3, 2.0));
    a.add("y", init_uniform(rng, 2, 5, 2.0));
    const auto blob = a.to_blob();
    a.from_blob(blob);
    CHECK(a.to_blob() == blob);
    CHECK(a.blob_sha256() == sha256_hex(blob.data(), blob.size()));
}

TEST_CASE("params: sgd momentum and freezing") {
    ParamSet ps;
    ps.add("train.w", Mat::full(1, 2, 1.0));
    ps.add("frozen.w", Mat::full(1, 2, 1.0), /*trainable=*/false);
    ps.find("train.w")->grad = Mat::full(1, 2, 1.0);
    ps.find("frozen.w")->grad = Mat::full(1, 2, 1.0);
    SgdOptimizer opt(SgdConfig{0.1, 0.9});
    opt.step(ps);
    CHECK(ps.find("train.w")->value.at(0, 0) == doctest::Approx(0.9));
    CHECK(ps.find("frozen.w")->value.at(0, 0) == doctest::Approx(1.0));
    opt.step(ps); // momentum: v = 0.9*1 + 1 = 1.9
    CHECK(ps.find("train.w")->value.at(0, 0) == doctest::Approx(0.9 - 0.19));
}
