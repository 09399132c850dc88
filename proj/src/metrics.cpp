#include "factsum/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

#include "factsum/error.hpp"
#include "factsum/tokenizer.hpp"

namespace factsum::harness {

namespace {

using Words = std::vector<std::string>;

std::map<std::vector<std::string>, int> ngram_counts(const Words& words, int n) {
    std::map<std::vector<std::string>, int> counts;
    if (static_cast<int>(words.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= words.size(); ++i)
        ++counts[std::vector<std::string>(words.begin() + i, words.begin() + i + n)];
    return counts;
}

double f1(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

int lcs_length(const Words& a, const Words& b) {
    std::vector<std::vector<int>> dp(a.size() + 1, std::vector<int>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    return dp[a.size()][b.size()];
}

} // namespace

RougeScore rouge_n(const std::string& candidate, const std::string& reference, int n) {
    if (n < 1) throw Error(ErrorKind::Validation, "rouge_n requires n >= 1");
    const Words cand = policy::Tokenizer::split_words(candidate);
    const Words ref = policy::Tokenizer::split_words(reference);
    if (ref.empty()) {
        std::cerr << "[factsum] warning: empty reference in rouge_n, scoring 0\n";
        return {};
    }
    const auto cand_counts = ngram_counts(cand, n);
    const auto ref_counts = ngram_counts(ref, n);
    int cand_total = 0, ref_total = 0, matched = 0;
    for (const auto& [g, c] : cand_counts) cand_total += c;
    for (const auto& [g, c] : ref_counts) ref_total += c;
    for (const auto& [g, c] : cand_counts) {
        const auto it = ref_counts.find(g);
        if (it != ref_counts.end()) matched += std::min(c, it->second);
    }
    RougeScore s;
    s.precision = cand_total > 0 ? static_cast<double>(matched) / cand_total : 0.0;
    s.recall = ref_total > 0 ? static_cast<double>(matched) / ref_total : 0.0;
    s.f1 = f1(s.precision, s.recall);
    return s;
}

RougeScore rouge_l(const std::string& candidate, const std::string& reference) {
    const Words cand = policy::Tokenizer::split_words(candidate);
    const Words ref = policy::Tokenizer::split_words(reference);
    if (ref.empty()) {
        std::cerr << "[factsum] warning: empty reference in rouge_l, scoring 0\n";
        return {};
    }
    if (cand.empty()) return {};
    const int lcs = lcs_length(cand, ref);
    RougeScore s;
    s.precision = static_cast<double>(lcs) / cand.size();
    s.recall = static_cast<double>(lcs) / ref.size();
    s.f1 = f1(s.precision, s.recall);
    return s;
}

double bleu(const std::string& candidate, const std::vector<std::string>& references, int max_n) {
    if (max_n < 1) throw Error(ErrorKind::Validation, "bleu requires max_n >= 1");
    const Words cand = policy::Tokenizer::split_words(candidate);
    std::vector<Words> refs;
    for (const auto& r : references) {
        const Words w = policy::Tokenizer::split_words(r);
        if (!w.empty()) refs.push_back(w);
    }
    if (refs.empty()) {
        std::cerr << "[factsum] warning: no non-empty reference in bleu, scoring 0\n";
        return 0.0;
    }
    if (cand.empty()) return 0.0;

    // Clipped n-gram precision; orders the candidate cannot realize are
    // skipped so that bleu(x, {x}) == 1 for short x.
    double log_precision_sum = 0.0;
    int orders = 0;
    for (int n = 1; n <= max_n; ++n) {
        const auto cand_counts = ngram_counts(cand, n);
        if (cand_counts.empty()) break;
        std::map<std::vector<std::string>, int> max_ref;
        for (const auto& ref : refs)
            for (const auto& [g, c] : ngram_counts(ref, n)) max_ref[g] = std::max(max_ref[g], c);
        int total = 0, matched = 0;
        for (const auto& [g, c] : cand_counts) {
            total += c;
            const auto it = max_ref.find(g);
            if (it != max_ref.end()) matched += std::min(c, it->second);
        }
        if (matched == 0) return 0.0;
        log_precision_sum += std::log(static_cast<double>(matched) / total);
        ++orders;
    }
    if (orders == 0) return 0.0;

    // Brevity penalty against the closest reference length.
    std::size_t closest = refs[0].size();
    for (const auto& ref : refs)
        if (std::llabs(static_cast<long long>(ref.size()) - static_cast<long long>(cand.size())) <
            std::llabs(static_cast<long long>(closest) - static_cast<long long>(cand.size())))
            closest = ref.size();
    const double bp =
        cand.size() >= closest ? 1.0 : std::exp(1.0 - static_cast<double>(closest) / cand.size());
    return bp * std::exp(log_precision_sum / orders);
}

OverlapReport overlap_report(const std::vector<std::string>& candidates,
                             const std::vector<std::string>& references) {
    if (candidates.size() != references.size())
        throw Error(ErrorKind::Validation, "overlap_report requires aligned candidates and references");
    OverlapReport rep;
    if (candidates.empty()) return rep;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        rep.rouge1 += rouge_n(candidates[i], references[i], 1).f1;
        rep.rouge2 += rouge_n(candidates[i], references[i], 2).f1;
        rep.rouge_l += rouge_l(candidates[i], references[i]).f1;
        rep.bleu += bleu(candidates[i], {references[i]});
    }
    const double inv = 1.0 / static_cast<double>(candidates.size());
    rep.rouge1 *= inv;
    rep.rouge2 *= inv;
    rep.rouge_l *= inv;
    rep.bleu *= inv;
    return rep;
}

VerificationReport report_from_predictions(const std::vector<Label>& gold,
                                           const std::vector<Label>& predicted) {
    if (gold.size() != predicted.size())
        throw Error(ErrorKind::Validation, "gold/predicted length mismatch");
    if (gold.empty()) throw Error(ErrorKind::Validation, "no predictions to score");
    VerificationReport rep;
    int correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const int g = static_cast<int>(gold[i]);
        const int p = static_cast<int>(predicted[i]);
        ++rep.confusion[g][p];
        ++rep.support[g];
        if (g == p) ++correct;
    }
    rep.accuracy = static_cast<double>(correct) / gold.size();
    for (int l = 0; l < 3; ++l) {
        int tp = rep.confusion[l][l];
        int pred_total = 0, gold_total = rep.support[l];
        for (int g = 0; g < 3; ++g) pred_total += rep.confusion[g][l];
        rep.precision[l] = pred_total > 0 ? static_cast<double>(tp) / pred_total : 0.0;
        rep.recall[l] = gold_total > 0 ? static_cast<double>(tp) / gold_total : 0.0;
        rep.f1[l] = f1(rep.precision[l], rep.recall[l]);
        rep.macro_f += rep.f1[l] / 3.0;
    }
    // Micro F over three exhaustive classes equals accuracy.
    rep.micro_f = rep.accuracy;
    return rep;
}

VerificationReport verify_claims(const std::vector<std::pair<std::string, std::string>>& id_and_summary,
                                 const std::vector<claimgen::ClaimRecord>& claims,
                                 const reward::EntailmentClassifier& classifier) {
    std::map<std::string, const std::string*> by_id;
    for (const auto& [id, summary] : id_and_summary) by_id[id] = &summary;
    std::vector<Label> gold, predicted;
    for (const auto& claim : claims) {
        const auto it = by_id.find(claim.id);
        if (it == by_id.end())
            throw Error(ErrorKind::Validation, "no summary for claim id " + claim.id);
        gold.push_back(claim.label);
        predicted.push_back(classifier.predict(*it->second, claim.claim));
    }
    return report_from_predictions(gold, predicted);
}

} // namespace factsum::harness
