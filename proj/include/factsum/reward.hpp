#pragma once

#include <array>
#include <string>
#include <vector>

#include "factsum/labels.hpp"
#include "factsum/params.hpp"
#include "factsum/policy.hpp"
#include "factsum/tokenizer.hpp"

namespace factsum::reward {

struct EntailmentDistribution {
    std::array<double, 3> p{}; // indexed by Label

    double operator[](Label l) const { return p[static_cast<int>(l)]; }
    double& operator[](Label l) { return p[static_cast<int>(l)]; }
    bool valid(double tol = 1e-6) const;
};

// P(gt) - 0.5 * sum of the other two labels' probabilities; algebraically
// 1.5 * P(gt) - 0.5, range [-0.5, 1].
double entailment_reward(const EntailmentDistribution& dist, Label gt);

struct NliExample {
    std::string premise;
    std::string hypothesis;
    Label label;
};

// Small premise/hypothesis classifier: learned bag-of-token embeddings plus
// overlap/negation interaction features into one hidden layer. Deterministic
// per seed; never updated during RL.
class EntailmentClassifier {
public:
    struct Config {
        int dim = 16;
        int hidden = 24;
        int epochs = 8;
        int batch = 32;
        double lr = 0.02;
        double holdout_frac = 0.2;
        std::uint64_t seed = 0;
    };

    // Trains with cross-entropy; throws Validation unless all three labels
    // are represented. Held-out metrics are kept on the instance.
    static EntailmentClassifier train(const std::vector<NliExample>& pairs, const Config& cfg);

    // Untrained instance (zero output layer -> uniform probabilities).
    static EntailmentClassifier untrained(const std::vector<NliExample>& vocab_source, const Config& cfg);

    EntailmentDistribution probs(const std::string& premise, const std::string& hypothesis) const;
    Label predict(const std::string& premise, const std::string& hypothesis) const;

    double heldout_accuracy() const { return heldout_accuracy_; }
    int heldout_count() const { return heldout_count_; }

private:
    EntailmentClassifier() = default;
    void build(const std::vector<NliExample>& pairs, const Config& cfg);
    NodeId forward(Tape& t, const std::vector<int>& premise_ids, const std::vector<int>& hyp_ids,
                   const Mat& extra, bool train_mode);
    Mat extra_features(const std::vector<std::string>& premise_words,
                       const std::vector<std::string>& hyp_words) const;

    policy::Tokenizer vocab_;
    mutable ParamSet params_;
    Config cfg_;
    ParamId embed_ = 0, w_p_ = 0, w_h_ = 0, w_sq_ = 0, w_pr_ = 0, w_ex_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
    double heldout_accuracy_ = 0.0;
    int heldout_count_ = 0;
};

// LM critic for clarity/conciseness. Builtin heuristic keeps the test suite
// offline: clamp(1 - max(0, (tokens - L)/L), 0, 1). External mode sends the
// quality prompt and parses "The quality score is <number>" bit-exactly.
struct QualityCritic {
    enum class Kind { BuiltinHeuristic, External };
    Kind kind = Kind::BuiltinHeuristic;
    int l_target = 48;
    std::string endpoint;
    double timeout_secs = 30.0;
    int max_in_flight = 4;
};

double quality_score(const std::string& summary, const QualityCritic& critic);

// First occurrence of the exact pattern wins; throws Parse carrying the raw
// response when absent. Result clamped to [0, 1].
double parse_quality_response(const std::string& raw);

// Single-sample estimator of sequence KL(active || reference):
// sum_t (log pi_active(y_t) - log pi_ref(y_t)). May be negative per sample.
double kl_estimate(const policy::SummarySample& sample);

struct RewardBreakdown {
    double r_entail = 0.0;  // [-0.5, 1]
    double r_quality = 0.0; // [0, 1]
    double kl = 0.0;
    double eta = 0.2;
    double r_total = 0.0; // (r_quality + r_entail - eta*kl) / 2
};

RewardBreakdown total_reward(double r_entail, double r_quality, double kl, double eta);

} // namespace factsum::reward
