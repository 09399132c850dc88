#include <doctest.h>

#include "factsum/error.hpp"
#include "factsum/metrics.hpp"

using namespace factsum;
using namespace factsum::harness;

TEST_CASE("rouge_n: hand-computed unigram case and boundary behavior") {
    const auto s = rouge_n("the cat", "the cat sat", 1);
    CHECK(s.precision == doctest::Approx(1.0));
    CHECK(s.recall == doctest::Approx(2.0 / 3));
    CHECK(s.f1 == doctest::Approx(0.8));

    CHECK(rouge_n("same words here", "same words here", 1).f1 == doctest::Approx(1.0));
    CHECK(rouge_n("alpha beta", "gamma delta", 1).f1 == 0.0);
    CHECK(rouge_n("any", "", 1).f1 == 0.0); // empty reference -> 0 with a warning
    CHECK(rouge_n("the cat sat on the mat", "the cat sat on the mat", 2).f1 == doctest::Approx(1.0));
    CHECK_THROWS_AS(rouge_n("a", "b", 0), Error);
}

TEST_CASE("rouge_l: LCS-based scores") {
    CHECK(rouge_l("x y z", "x y z").f1 == doctest::Approx(1.0));
    CHECK(rouge_l("a b c d", "a x b y c").recall == doctest::Approx(3.0 / 5));
    CHECK(rouge_l("a b c d", "a x b y c").precision == doctest::Approx(3.0 / 4));
    CHECK(rouge_l("p q", "r s").f1 == 0.0);
}

TEST_CASE("bleu: identity, disjoint, brevity, multiple references") {
    CHECK(bleu("the cat sat on the mat", {"the cat sat on the mat"}) == doctest::Approx(1.0));
    CHECK(bleu("the cat", {"the cat"}) == doctest::Approx(1.0)); // shorter than max_n
    CHECK(bleu("alpha beta", {"gamma delta"}) == 0.0);
    CHECK(bleu("", {"ref"}) == 0.0);
    CHECK(bleu("any", {""}) == 0.0);
    // brevity penalty: same clipped precision, shorter candidate scores lower
    const double full = bleu("a b c d", {"a b c d"});
    const double brief = bleu("a b", {"a b c d"});
    CHECK(brief < full);
    CHECK(bleu("a b", {"x y", "a b"}) == doctest::Approx(1.0));
}

TEST_CASE("report_from_predictions: perfect and degenerate predictors") {
    using L = Label;
    const std::vector<L> gold = {L::Entailment, L::Neutral, L::Contradiction,
                                 L::Entailment, L::Neutral, L::Contradiction};
    const auto perfect = report_from_predictions(gold, gold);
    CHECK(perfect.accuracy == doctest::Approx(1.0));
    for (int l = 0; l < 3; ++l) {
        CHECK(perfect.precision[l] == doctest::Approx(1.0));
        CHECK(perfect.recall[l] == doctest::Approx(1.0));
    }
    CHECK(perfect.macro_f == doctest::Approx(1.0));

    const std::vector<L> all_entail(6, L::Entailment);
    const auto degenerate = report_from_predictions(gold, all_entail);
    CHECK(degenerate.accuracy == doctest::Approx(1.0 / 3));
    CHECK(degenerate.recall[0] == doctest::Approx(1.0));
    CHECK(degenerate.precision[0] == doctest::Approx(1.0 / 3));
    CHECK(degenerate.precision[1] == 0.0);
}

TEST_CASE("report_from_predictions: 6-item hand-built confusion oracle") {
    using L = Label;
    // gold:  E E N N C C   pred: E N N E C N
    const std::vector<L> gold = {L::Entailment, L::Entailment, L::Neutral,
                                 L::Neutral, L::Contradiction, L::Contradiction};
    const std::vector<L> pred = {L::Entailment, L::Neutral, L::Neutral,
                                 L::Entailment, L::Contradiction, L::Neutral};
    const auto rep = report_from_predictions(gold, pred);
    CHECK(rep.accuracy == doctest::Approx(3.0 / 6));
    // E: tp=1, predicted 2, gold 2 -> P=0.5 R=0.5 F=0.5
    CHECK(rep.precision[0] == doctest::Approx(0.5));
    CHECK(rep.recall[0] == doctest::Approx(0.5));
    // N: tp=1, predicted 3, gold 2 -> P=1/3 R=0.5 F=0.4
    CHECK(rep.precision[1] == doctest::Approx(1.0 / 3));
    CHECK(rep.recall[1] == doctest::Approx(0.5));
    CHECK(rep.f1[1] == doctest::Approx(0.4));
    // C: tp=1, predicted 1, gold 2 -> P=1 R=0.5 F=2/3
    CHECK(rep.precision[2] == doctest::Approx(1.0));
    CHECK(rep.recall[2] == doctest::Approx(0.5));
    CHECK(rep.macro_f == doctest::Approx((0.5 + 0.4 + 2.0 / 3) / 3));
    CHECK(rep.micro_f == doctest::Approx(rep.accuracy));

    // Confusion row sums equal per-label support; macro F recomputes exactly.
    for (int g = 0; g < 3; ++g) {
        int row = 0;
        for (int p = 0; p < 3; ++p) row += rep.confusion[g][p];
        CHECK(row == rep.support[g]);
    }
    double macro = 0.0;
    for (int l = 0; l < 3; ++l) {
        int tp = rep.confusion[l][l], pred_n = 0;
        for (int g = 0; g < 3; ++g) pred_n += rep.confusion[g][l];
        const double p = pred_n ? double(tp) / pred_n : 0.0;
        const double r = rep.support[l] ? double(tp) / rep.support[l] : 0.0;
        macro += (p + r > 0 ? 2 * p * r / (p + r) : 0.0) / 3.0;
    }
    CHECK(macro == doctest::Approx(rep.macro_f).epsilon(1e-12));
}

TEST_CASE("verify_claims: id alignment is enforced") {
    const auto pairs = claimgen::make_nli_pairs(2, 120);
    reward::EntailmentClassifier::Config cfg;
    cfg.seed = 2;
    cfg.epochs = 2;
    const auto clf = reward::EntailmentClassifier::train(pairs, cfg);
    std::vector<claimgen::ClaimRecord> claims(1);
    claims[0].id = "claim-1";
    claims[0].claim = "text";
    claims[0].label = Label::Entailment;
    CHECK_THROWS_AS(verify_claims({{"other-id", "summary"}}, claims, clf), Error);
    CHECK_NOTHROW(verify_claims({{"claim-1", "text"}}, claims, clf));
}
