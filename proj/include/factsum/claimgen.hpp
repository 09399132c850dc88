#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "factsum/encoding.hpp"
#include "factsum/labels.hpp"
#include "factsum/reward.hpp"

namespace factsum::claimgen {

struct DocumentCluster {
    std::string id;
    std::vector<std::string> documents;
    std::vector<encoding::ImageRecord> images;
    std::string summary; // human-written multi-document summary
};

enum class Checkworthiness { UFS, CFS, NFS, Unknown };

const char* checkworthiness_name(Checkworthiness c);
std::optional<Checkworthiness> parse_checkworthiness(const std::string& word);

struct ClaimRecord {
    std::string id;
    std::string cluster_id;
    std::string claim;
    Label label = Label::Entailment;
    Checkworthiness checkworthiness = Checkworthiness::Unknown;
    std::optional<Label> verified_label;
};

// LLM access. Live mode posts {"prompt": ...} to the endpoint and reads
// {"text": ...}; scripted mode replays recorded responses byte-for-byte,
// keyed by SHA-256 of the rendered prompt.
class LlmClient {
public:
    enum class Mode { Live, Scripted };

    static LlmClient live(std::string endpoint, double timeout_secs = 30.0, int max_retries = 2,
                          double rate_limit_per_sec = 0.0);
    static LlmClient scripted(std::unordered_map<std::string, std::string> responses_by_prompt_sha,
                              std::optional<std::string> default_response = std::nullopt);
    static LlmClient scripted_from_file(const std::string& path);

    std::string complete(const std::string& prompt) const;
    Mode mode() const { return mode_; }

private:
    Mode mode_ = Mode::Scripted;
    std::string endpoint_;
    double timeout_secs_ = 30.0;
    int max_retries_ = 2;
    double rate_limit_per_sec_ = 0.0;
    std::unordered_map<std::string, std::string> script_;
    std::optional<std::string> default_response_;
};

// Renders the label-specific prompt over the cluster summary and parses the
// numbered list "1." .. "10.". Exactly ten records or a Generation error.
std::vector<ClaimRecord> generate_claims(const DocumentCluster& cluster, Label label,
                                         const LlmClient& client);

// Double-check pass: first label word in the response wins.
Label verify_label(const ClaimRecord& claim, const DocumentCluster& cluster, const LlmClient& client);

// Checkworthiness classifier plugin. The builtin heuristic: NFS without any
// content verb / number / entity-like capitalized token; UFS when factual but
// matching the triviality lexicon; CFS otherwise.
struct CheckworthinessPlugin {
    enum class Kind { BuiltinHeuristic, External };
    Kind kind = Kind::BuiltinHeuristic;
    std::string endpoint;
    double timeout_secs = 30.0;
    std::vector<std::string> content_verbs;   // empty -> builtin lexicon
    std::vector<std::string> triviality_words; // empty -> builtin lexicon
};

Checkworthiness checkworthiness(const ClaimRecord& claim, const CheckworthinessPlugin& plugin);

struct SynthWorld {
    std::vector<DocumentCluster> clusters;
    std::vector<ClaimRecord> claims; // 30 per cluster, 10 per label
};

// Deterministic template fact world: subject/relation/object tuples rendered
// across 2-3 documents per cluster. Entailment claims restate a fact
// verbatim, contradiction claims negate one, neutral claims introduce an
// attribute never stated; labels are correct by construction.
SynthWorld synth_world(std::uint64_t seed, int clusters);

// Token-containment entailment oracle used to sanity-check constructed
// labels: claim content words all appear in some document.
bool containment_entails(const DocumentCluster& cluster, const std::string& claim);

// Separable synthetic NLI corpus for classifier training: verbatim copies ->
// entailment, negated templates -> contradiction, unstated facts -> neutral.
std::vector<reward::NliExample> make_nli_pairs(std::uint64_t seed, int n);

// Scripted responses that make the claimgen pipeline reproduce the synth
// world's claims through the real prompt/parse path (test + fixture helper).
std::unordered_map<std::string, std::string> scripted_responses_for(const SynthWorld& world);

} // namespace factsum::claimgen
