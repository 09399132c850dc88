#include <doctest.h>

#include <cmath>

#include "factsum/error.hpp"
#include "factsum/policy.hpp"

using namespace factsum;
using namespace factsum::policy;

namespace {

PolicyConfig tiny_cfg() {
    PolicyConfig cfg;
    cfg.dim = 8;
    cfg.vocab = 12;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.ffn_hidden = 12;
    cfg.t_max = 8;
    cfg.max_fused_rows = 10;
    cfg.seed = 17;
    return cfg;
}

Mat random_fused(int rows, int dim, int seed) {
    Rng rng(seed);
    return init_uniform(rng, rows, dim, 1.0);
}

} // namespace

TEST_CASE("policy: decode distributions sum to 1") {
    ParamSet store;
    Seq2Seq net(store, "policy", tiny_cfg());
    Tape t;
    const NodeId memory = net.encode(t, t.constant(random_fused(5, 8, 1)));
    const NodeId states = net.decode_states(t, memory, {Tokenizer::kBos, 5, 6});
    const NodeId probs = t.softmax_rows(net.logits(t, states));
    for (int r = 0; r < t.val(probs).rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < t.val(probs).cols; ++c) s += t.val(probs).at(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("policy: greedy generation deterministic; ref == active gives identical log-probs") {
    ParamSet store;
    Seq2Seq net(store, "policy", tiny_cfg());
    const Mat fused = random_fused(4, 8, 2);
    const auto s1 = generate(fused, net, fused, net, 0.0, Rng(1), nullptr);
    const auto s2 = generate(fused, net, fused, net, 0.0, Rng(99), nullptr);
    CHECK(s1.ids == s2.ids);
    REQUIRE(s1.ids.size() == s1.logp_active.size());
    REQUIRE(s1.ids.size() == s1.logp_ref.size());
    double drift = 0.0;
    for (std::size_t i = 0; i < s1.ids.size(); ++i) {
        CHECK(s1.logp_active[i] <= 0.0);
        CHECK(s1.logp_active[i] == s1.logp_ref[i]);
        drift += s1.logp_active[i] - s1.logp_ref[i];
    }
    CHECK(drift == 0.0);

    const auto sampled1 = generate(fused, net, fused, net, 1.0, Rng(5), nullptr);
    const auto sampled2 = generate(fused, net, fused, net, 1.0, Rng(5), nullptr);
    CHECK(sampled1.ids == sampled2.ids);
}

TEST_CASE("policy: temperature-0 tie-break picks the lowest token id") {
    ParamSet store;
    Seq2Seq net(store, "policy", tiny_cfg());
    store.for_each([](Param& p) { p.value.fill(0.0); }); // all logits equal
    const Mat fused = random_fused(3, 8, 3);
    const auto s = generate(fused, net, fused, net, 0.0, Rng(1), nullptr);
    REQUIRE(!s.ids.empty());
    CHECK(s.ids[0] == 0);
}

TEST_CASE("sft_loss: zeroed network gives exactly ln(vocab); peaked bias gives ~0") {
    auto cfg = tiny_cfg();
    cfg.vocab = 4;
    ParamSet store;
    Seq2Seq net(store, "policy", cfg);
    store.for_each([](Param& p) { p.value.fill(0.0); });

    SftBatch batch;
    batch.items.push_back({random_fused(3, 8, 4), {1, 2, 3}});
    const double uniform_loss = sft_loss(net, batch);
    CHECK(uniform_loss == doctest::Approx(std::log(4.0)).epsilon(1e-9));

    // Push all mass onto one token via the shared output bias.
    store.find("policy.out_b")->value.at(0, 2) = 100.0;
    SftBatch peaked;
    peaked.items.push_back({random_fused(3, 8, 4), {2, 2, 2}});
    CHECK(sft_loss(net, peaked) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sft_step: validation and update scope") {
    ParamSet store;
    Seq2Seq net(store, "policy", tiny_cfg());
    ValueHead head(store, 8);
    SgdOptimizer opt(SgdConfig{0.1, 0.0});
    SftBatch empty;
    CHECK_THROWS_AS(sft_step(net, empty, opt), Error);
    SftBatch bad;
    bad.items.push_back({random_fused(2, 8, 5), {}});
    CHECK_THROWS_AS(sft_step(net, bad, opt), Error);
    SftBatch oov;
    oov.items.push_back({random_fused(2, 8, 5), {99}});
    CHECK_THROWS_AS(sft_step(net, oov, opt), Error);

    const std::string value_before = store.blob_sha256_prefix("value.");
    const std::string policy_before = store.blob_sha256_prefix("policy.");
    SftBatch ok;
    ok.items.push_back({random_fused(2, 8, 5), {1, 2}});
    const double loss = sft_step(net, ok, opt);
    CHECK(loss > 0.0);
    CHECK(store.blob_sha256_prefix("value.") == value_before);  // probe untouched
    CHECK(store.blob_sha256_prefix("policy.") != policy_before);
}

TEST_CASE("sft gradient matches finite differences on a <=2k-parameter config") {
    PolicyConfig cfg;
    cfg.dim = 6;
    cfg.vocab = 8;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.ffn_hidden = 6;
    cfg.t_max = 5;
    cfg.max_fused_rows = 4;
    cfg.seed = 23;
    ParamSet store;
    Seq2Seq net(store, "policy", cfg);
    CHECK(store.scalar_count() <= 2000);
    SftBatch batch;
    batch.items.push_back({random_fused(3, 6, 6), {5, 6, 7, Tokenizer::kEos}});
    auto loss = [&]() { return sft_loss(net, batch); };
    CHECK(gradient_check(store, loss) < 1e-4);
}

TEST_CASE("assemble_rationale_input: separator format and label validation") {
    Tokenizer tok;
    tok.add_text("the mayor opened the bridge entailment");
    const auto seq = assemble_rationale_input("the mayor", "entailment", {"opened the bridge"}, tok);
    std::vector<int> expected = tok.encode("the mayor");
    expected.push_back(Tokenizer::kSep);
    const auto label_ids = tok.encode("entailment");
    expected.insert(expected.end(), label_ids.begin(), label_ids.end());
    expected.push_back(Tokenizer::kSep);
    const auto sum_ids = tok.encode("opened the bridge");
    expected.insert(expected.end(), sum_ids.begin(), sum_ids.end());
    CHECK(seq.ids == expected);

    const auto bare = assemble_rationale_input("the mayor", "entailment", {}, tok);
    std::vector<int> expected2 = tok.encode("the mayor");
    expected2.push_back(Tokenizer::kSep);
    expected2.insert(expected2.end(), label_ids.begin(), label_ids.end());
    CHECK(bare.ids == expected2);

    CHECK_THROWS_AS(assemble_rationale_input("c", "maybe", {}, tok), Error);
    CHECK_THROWS_AS(assemble_rationale_input("", "entailment", {}, tok), Error);
    // Truthfulness vocabulary is accepted and normalized.
    CHECK_NOTHROW(assemble_rationale_input("c", "supported", {}, tok));
}

TEST_CASE("tokenizer: reserved table, lowercase split, vocab persistence") {
    Tokenizer tok;
    CHECK(tok.vocab_size() == 5);
    tok.add_text("The Mayor OPENED the bridge");
    const auto ids = tok.encode("the mayor opened");
    CHECK(ids.size() == 3);
    CHECK(tok.decode(ids) == "the mayor opened");
    CHECK(tok.id_of("unseen-token") == Tokenizer::kUnk);
    const Tokenizer restored = Tokenizer::from_json(tok.to_json());
    CHECK(restored.vocab_size() == tok.vocab_size());
    CHECK(restored.encode("the mayor opened") == ids);
    CHECK(restored.word_of(Tokenizer::kSep) == "</s>");
}
