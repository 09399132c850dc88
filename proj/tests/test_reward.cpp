#include <doctest.h>

#include <cmath>

#include "factsum/claimgen.hpp"
#include "factsum/error.hpp"
#include "factsum/reward.hpp"
#include "factsum/rng.hpp"

using namespace factsum;
using namespace factsum::reward;

namespace {
EntailmentDistribution dist(double e, double n, double c) {
    EntailmentDistribution d;
    d.p = {e, n, c};
    return d;
}
} // namespace

TEST_CASE("entailment_reward: substitution examples and algebraic identity") {
    CHECK(entailment_reward(dist(1, 0, 0), Label::Entailment) == doctest::Approx(1.0));
    CHECK(entailment_reward(dist(1.0 / 3, 1.0 / 3, 1.0 / 3), Label::Neutral) == 0.0);
    CHECK(entailment_reward(dist(0, 0.5, 0.5), Label::Entailment) == doctest::Approx(-0.5));

    Rng rng(41);
    double prev_reward = -1.0;
    for (int i = 0; i < 1000; ++i) {
        double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
        const double z = a + b + c;
        const auto d = dist(a / z, b / z, c / z);
        for (int l = 0; l < 3; ++l) {
            const Label gt = static_cast<Label>(l);
            const double r = entailment_reward(d, gt);
            CHECK(r >= -0.5);
            CHECK(r <= 1.0);
            CHECK(std::abs(r - (1.5 * d[gt] - 0.5)) < 1e-12);
        }
        // strictly increasing in P(gt)
        const double r = entailment_reward(d, Label::Entailment);
        if (i > 0 && d[Label::Entailment] > 0.9) CHECK(r > prev_reward);
        if (d[Label::Entailment] < 0.05) prev_reward = r;
    }
}

TEST_CASE("total_reward: Eq. 5 substitution and bounds") {
    CHECK(total_reward(1, 1, 0, 0.2).r_total == doctest::Approx(1.0));
    CHECK(total_reward(0.25, 0.5, 1.0, 0.2).r_total == doctest::Approx(0.275));
    CHECK(total_reward(0, 0, 0, 0.2).r_total == 0.0);
    CHECK_THROWS_AS(total_reward(0, 0, 0, -0.1), Error);

    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
        const double re = rng.uniform(-0.5, 1.0);
        const double rq = rng.uniform(0.0, 1.0);
        const double kl = rng.uniform(0.0, 5.0);
        const auto b = total_reward(re, rq, kl, 0.2);
        CHECK(b.r_total == (rq + re - 0.2 * kl) / 2.0); // exact identity
        CHECK(b.r_total <= 1.0);
        // linear, decreasing in kl
        CHECK(total_reward(re, rq, kl + 1.0, 0.2).r_total < b.r_total);
    }
}

TEST_CASE("quality critic: builtin heuristic and response parsing") {
    QualityCritic critic;
    critic.l_target = 4;
    CHECK(quality_score("one two three four", critic) == doctest::Approx(1.0));
    CHECK(quality_score("1 2 3 4 5 6 7 8", critic) == doctest::Approx(0.0));
    CHECK(quality_score("a b c d e f", critic) == doctest::Approx(0.5));
    CHECK(quality_score("", critic) == doctest::Approx(1.0));

    CHECK(parse_quality_response("The quality score is 0.8.") == doctest::Approx(0.8));
    CHECK(parse_quality_response("preamble... The quality score is 0.25. The quality score is 0.9") ==
          doctest::Approx(0.25));
    CHECK(parse_quality_response("The quality score is 7") == 1.0);    // clamped
    CHECK(parse_quality_response("The quality score is -2") == 0.0);   // clamped
    try {
        parse_quality_response("I think it is fine.");
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        CHECK(e.detail() == "I think it is fine."); // raw response attached
    }
    CHECK_THROWS_AS(parse_quality_response("The quality score is great"), Error);
}

TEST_CASE("kl_estimate: zero for identical lists, additive otherwise") {
    policy::SummarySample s;
    s.ids = {4, 5, 6};
    s.logp_active = {-0.5, -1.0, -0.25};
    s.logp_ref = s.logp_active;
    CHECK(kl_estimate(s) == 0.0);
    s.logp_ref = {-0.6, -1.1, -0.5};
    CHECK(kl_estimate(s) == doctest::Approx(0.1 + 0.1 + 0.25));
    s.logp_ref.pop_back();
    CHECK_THROWS_AS(kl_estimate(s), Error);
}

TEST_CASE("entailment classifier: untrained is uniform; training separates the synth corpus") {
    const auto pairs = claimgen::make_nli_pairs(3, 600);
    EntailmentClassifier::Config cfg;
    cfg.seed = 3;
    cfg.epochs = 6;

    const auto blank = EntailmentClassifier::untrained(pairs, cfg);
    const auto u = blank.probs("some premise text", "some hypothesis");
    CHECK(u.p[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(u.p[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(u.p[2] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    const auto clf = EntailmentClassifier::train(pairs, cfg);
    CHECK(clf.heldout_accuracy() >= 0.9);
    const auto d = clf.probs(pairs[0].premise, pairs[0].premise.substr(0, pairs[0].premise.find(" . ")));
    CHECK(d.valid());

    // determinism across runs
    const auto clf2 = EntailmentClassifier::train(pairs, cfg);
    const auto p1 = clf.probs("Mira Talbot visited the night market", "Mira Talbot visited the night market");
    const auto p2 = clf2.probs("Mira Talbot visited the night market", "Mira Talbot visited the night market");
    CHECK(p1.p == p2.p);
}

TEST_CASE("entailment classifier: degenerate corpora are rejected") {
    CHECK_THROWS_AS(EntailmentClassifier::train({}, {}), Error);
    std::vector<NliExample> single;
    for (int i = 0; i < 10; ++i) single.push_back({"a b", "a", Label::Entailment});
    try {
        EntailmentClassifier::train(single, {});
        FAIL("expected validation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Validation);
    }
}
