#pragma once

#include <array>
#include <string>
#include <vector>

#include "factsum/claimgen.hpp"
#include "factsum/labels.hpp"
#include "factsum/reward.hpp"

namespace factsum::harness {

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

RougeScore rouge_n(const std::string& candidate, const std::string& reference, int n);
RougeScore rouge_l(const std::string& candidate, const std::string& reference);
double bleu(const std::string& candidate, const std::vector<std::string>& references, int max_n = 4);

struct OverlapReport {
    double rouge1 = 0.0, rouge2 = 0.0, rouge_l = 0.0, bleu = 0.0;
    std::string bertscore_status = "unavailable"; // plugin slot, no model bundled
};

OverlapReport overlap_report(const std::vector<std::string>& candidates,
                             const std::vector<std::string>& references);

struct VerificationReport {
    double accuracy = 0.0;
    std::array<double, 3> precision{}, recall{}, f1{}; // indexed by Label
    double macro_f = 0.0;
    double micro_f = 0.0;
    std::array<std::array<int, 3>, 3> confusion{}; // [gold][pred]
    std::array<int, 3> support{};
};

VerificationReport report_from_predictions(const std::vector<Label>& gold,
                                           const std::vector<Label>& predicted);

// Classifier predictions of each claim's label given its generated summary
// (summaries aligned to claims by id).
VerificationReport verify_claims(const std::vector<std::pair<std::string, std::string>>& id_and_summary,
                                 const std::vector<claimgen::ClaimRecord>& claims,
                                 const reward::EntailmentClassifier& classifier);

} // namespace factsum::harness
