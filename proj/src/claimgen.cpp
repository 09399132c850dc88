#include "factsum/claimgen.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "factsum/error.hpp"
#include "factsum/prompts.hpp"
#include "factsum/rng.hpp"
#include "factsum/sha256.hpp"
#include "factsum/tokenizer.hpp"
#include "factsum/transport.hpp"

namespace factsum::claimgen {

const char* checkworthiness_name(Checkworthiness c) {
    switch (c) {
        case Checkworthiness::UFS: return "UFS";
        case Checkworthiness::CFS: return "CFS";
        case Checkworthiness::NFS: return "NFS";
        case Checkworthiness::Unknown: return "unknown";
    }
    return "unknown";
}

std::optional<Checkworthiness> parse_checkworthiness(const std::string& word) {
    if (word == "UFS") return Checkworthiness::UFS;
    if (word == "CFS") return Checkworthiness::CFS;
    if (word == "NFS") return Checkworthiness::NFS;
    if (word == "unknown") return Checkworthiness::Unknown;
    return std::nullopt;
}

LlmClient LlmClient::live(std::string endpoint, double timeout_secs, int max_retries,
                          double rate_limit_per_sec) {
    LlmClient c;
    c.mode_ = Mode::Live;
    c.endpoint_ = std::move(endpoint);
    c.timeout_secs_ = timeout_secs;
    c.max_retries_ = max_retries;
    c.rate_limit_per_sec_ = rate_limit_per_sec;
    return c;
}

LlmClient LlmClient::scripted(std::unordered_map<std::string, std::string> responses_by_prompt_sha,
                              std::optional<std::string> default_response) {
    LlmClient c;
    c.mode_ = Mode::Scripted;
    c.script_ = std::move(responses_by_prompt_sha);
    c.default_response_ = std::move(default_response);
    return c;
}

LlmClient LlmClient::scripted_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open LLM script file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j = nlohmann::json::parse(buf.str(), nullptr, false);
    if (j.is_discarded() || !j.contains("responses") || !j["responses"].is_object())
        throw Error(ErrorKind::Format, "invalid LLM script file", path);
    std::unordered_map<std::string, std::string> script;
    for (auto& [key, value] : j["responses"].items()) script[key] = value.get<std::string>();
    std::optional<std::string> def;
    if (j.contains("default")) def = j["default"].get<std::string>();
    return scripted(std::move(script), std::move(def));
}

std::string LlmClient::complete(const std::string& prompt) const {
    if (mode_ == Mode::Scripted) {
        const auto it = script_.find(sha256_hex(prompt));
        if (it != script_.end()) return it->second;
        if (default_response_) return *default_response_;
        throw Error(ErrorKind::Transport, "no scripted response for prompt", prompt.substr(0, 120));
    }
    const std::string endpoint = transport::effective_llm_endpoint(endpoint_);
    nlohmann::json req;
    req["prompt"] = prompt;
    std::string last_error;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
        if (rate_limit_per_sec_ > 0.0 && attempt == 0) {
            static thread_local auto last_call = std::chrono::steady_clock::now() - std::chrono::hours(1);
            const auto min_gap = std::chrono::duration<double>(1.0 / rate_limit_per_sec_);
            const auto now = std::chrono::steady_clock::now();
            if (now - last_call < min_gap)
                std::this_thread::sleep_for(min_gap - (now - last_call));
            last_call = std::chrono::steady_clock::now();
        }
        try {
            const std::string body = transport::call_endpoint(endpoint, req.dump(), timeout_secs_);
            nlohmann::json resp = nlohmann::json::parse(body, nullptr, false);
            if (resp.is_discarded() || !resp.contains("text"))
                throw Error(ErrorKind::Parse, "LLM response lacks a text field", body);
            return resp["text"].get<std::string>();
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Transport) throw;
            last_error = e.what();
        }
    }
    throw Error(ErrorKind::Transport, "LLM endpoint failed after retries", last_error);
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Items of a numbered list "1. ..." .. "10. ..."; empty when any is missing.
std::vector<std::string> parse_numbered_list(const std::string& text, int expected) {
    std::vector<std::string> items;
    std::istringstream in(text);
    std::string line;
    int next = 1;
    while (std::getline(in, line) && next <= expected) {
        const std::string t = trim(line);
        const std::string marker = std::to_string(next) + ".";
        if (t.rfind(marker, 0) == 0) {
            items.push_back(trim(t.substr(marker.size())));
            ++next;
        }
    }
    if (static_cast<int>(items.size()) != expected) return {};
    for (const auto& item : items)
        if (item.empty()) return {};
    return items;
}

} // namespace

std::vector<ClaimRecord> generate_claims(const DocumentCluster& cluster, Label label,
                                         const LlmClient& client) {
    const std::string prompt = prompts::render_claim_prompt(label, cluster.summary);
    std::string response;
    std::vector<std::string> items;
    for (int attempt = 0; attempt < 2 && items.empty(); ++attempt) {
        response = client.complete(prompt);
        items = parse_numbered_list(response, 10);
    }
    if (items.empty())
        throw Error(ErrorKind::Generation, "claim generation did not yield 10 parseable items", response);
    std::vector<ClaimRecord> out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        ClaimRecord rec;
        rec.id = cluster.id + "-" + label_name(label) + "-" + std::to_string(k);
        rec.cluster_id = cluster.id;
        rec.claim = items[k];
        rec.label = label;
        out.push_back(std::move(rec));
    }
    return out;
}

Label verify_label(const ClaimRecord& claim, const DocumentCluster& cluster, const LlmClient& client) {
    if (claim.cluster_id != cluster.id)
        throw Error(ErrorKind::Validation, "claim does not belong to the given cluster");
    std::string documents;
    for (std::size_t i = 0; i < cluster.documents.size(); ++i) {
        if (i) documents += "\n\n";
        documents += cluster.documents[i];
    }
    const std::string response =
        client.complete(prompts::render_double_check_prompt(documents, claim.claim));
    const auto label = find_label_word(response);
    if (!label) throw Error(ErrorKind::Parse, "double-check response has no label word", response);
    return *label;
}

namespace {

const std::vector<std::string>& default_content_verbs() {
    static const std::vector<std::string> verbs = {
        "visited",  "opened",   "won",      "announced", "signed",    "launched", "canceled",
        "funded",   "missed",   "dropped",  "increased", "decreased", "reported", "said",
        "grew",     "fell",     "added",    "expected",  "endorsed",  "toured",   "sponsored",
        "reviewed", "backed",   "visit",    "open",      "win",       "announce", "sign",
        "launch",   "cancel",   "fund",     "miss",      "drop",      "increase", "decrease",
        "report",   "say",      "grow",     "fall",      "expect",    "endorse",  "tour",
        "sponsor",  "review",   "back",     "delayed",   "delay",     "hosted",   "host",
    };
    return verbs;
}

const std::vector<std::string>& default_triviality_words() {
    static const std::vector<std::string> words = {"weather", "nice", "pleasant", "lovely", "sunny"};
    return words;
}

std::string lower_word(std::string w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return w;
}

} // namespace

Checkworthiness checkworthiness(const ClaimRecord& claim, const CheckworthinessPlugin& plugin) {
    if (plugin.kind == CheckworthinessPlugin::Kind::External) {
        nlohmann::json req;
        req["task"] = "checkworthiness";
        req["claim"] = claim.claim;
        const std::string body = transport::call_endpoint(plugin.endpoint, req.dump(), plugin.timeout_secs);
        nlohmann::json resp = nlohmann::json::parse(body, nullptr, false);
        if (!resp.is_discarded() && resp.contains("label")) {
            const auto parsed = parse_checkworthiness(resp["label"].get<std::string>());
            if (parsed && *parsed != Checkworthiness::Unknown) return *parsed;
        }
        throw Error(ErrorKind::Parse, "checkworthiness plugin response invalid", body);
    }

    const auto& verbs = plugin.content_verbs.empty() ? default_content_verbs() : plugin.content_verbs;
    const auto& trivia =
        plugin.triviality_words.empty() ? default_triviality_words() : plugin.triviality_words;
    const std::unordered_set<std::string> verb_set(verbs.begin(), verbs.end());
    const std::unordered_set<std::string> trivia_set(trivia.begin(), trivia.end());

    std::vector<std::string> raw_words;
    {
        std::istringstream in(claim.claim);
        std::string w;
        while (in >> w) raw_words.push_back(w);
    }
    bool factual = false;
    for (std::size_t i = 0; i < raw_words.size() && !factual; ++i) {
        const std::string& w = raw_words[i];
        if (verb_set.count(lower_word(w))) factual = true;
        for (char ch : w)
            if (std::isdigit(static_cast<unsigned char>(ch))) factual = true;
        if (i > 0 && std::isupper(static_cast<unsigned char>(w[0]))) factual = true;
    }
    if (!factual) return Checkworthiness::NFS;
    for (const auto& w : raw_words)
        if (trivia_set.count(lower_word(w))) return Checkworthiness::UFS;
    return Checkworthiness::CFS;
}

namespace {

struct Relation {
    const char* past;
    const char* base;
};

const std::vector<std::string>& subjects() {
    static const std::vector<std::string> s = {
        "Mira Talbot",       "Arlo Finch",       "The Harbor Museum", "Nordvale Council",
        "Captain Rhea Solis", "The Calder Institute", "Mayor Edda Voss",  "The Linden Library",
        "Professor Omar Reyes", "The Brightwater Trust", "Senator June Park", "The Foundry Guild",
    };
    return s;
}

const std::vector<Relation>& relations() {
    static const std::vector<Relation> r = {
        {"visited", "visit"},   {"opened", "open"},     {"won", "win"},       {"announced", "announce"},
        {"signed", "sign"},     {"launched", "launch"}, {"canceled", "cancel"}, {"funded", "fund"},
        {"hosted", "host"},     {"delayed", "delay"},
    };
    return r;
}

const std::vector<std::string>& objects() {
    static const std::vector<std::string> o = {
        // No object word may equal a relation's base form, or negated claims
        // would leak through the token-containment oracle.
        "the river festival", "a new archive wing",  "the regional final",  "a trade agreement",
        "the night market",   "a research vessel",   "the coastal highway", "a literacy program",
        "the winter exhibit", "a tidal power plant", "the autumn derby",    "a harvest gala",
    };
    return o;
}

// Reserved for neutral claims only; never asserted in any document.
const std::vector<std::string>& neutral_relations() {
    static const std::vector<std::string> r = {"privately endorsed", "quietly reviewed",
                                               "personally sponsored", "informally backed"};
    return r;
}

struct Fact {
    int subject, relation, object;

    std::string sentence() const {
        return subjects()[subject] + " " + relations()[relation].past + " " + objects()[object];
    }
    std::string negation() const {
        return subjects()[subject] + " did not " + relations()[relation].base + " " + objects()[object];
    }
};

Mat fact_patches(const std::string& sentence, int patch_dim) {
    // Deterministic pseudo-random patch vector derived from the fact text.
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : sentence) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
    Rng rng(h);
    Mat m(1, patch_dim);
    for (double& x : m.v) x = rng.uniform(-1.0, 1.0);
    return m;
}

const std::set<std::string>& function_words() {
    static const std::set<std::string> w = {"the", "a", "an", "did", "not", "to", "of", "and", "in", "."};
    return w;
}

} // namespace

SynthWorld synth_world(std::uint64_t seed, int clusters) {
    if (clusters < 1) throw Error(ErrorKind::Validation, "synth_world needs clusters >= 1");
    constexpr int kFactsPerCluster = 6;
    constexpr int kDocsPerCluster = 3;
    constexpr int kPatchDim = 8;

    SynthWorld world;
    Rng rng = Rng(seed).fork(0x5e7e);
    for (int c = 0; c < clusters; ++c) {
        DocumentCluster cluster;
        cluster.id = "cluster-" + std::to_string(c);

        std::set<std::tuple<int, int, int>> used;
        std::vector<Fact> facts;
        while (static_cast<int>(facts.size()) < kFactsPerCluster) {
            Fact f{rng.index(subjects().size()), rng.index(relations().size()), rng.index(objects().size())};
            if (used.insert({f.subject, f.relation, f.object}).second) facts.push_back(f);
        }

        std::vector<std::string> doc_sentences[kDocsPerCluster];
        for (int i = 0; i < kFactsPerCluster; ++i)
            doc_sentences[i % kDocsPerCluster].push_back(facts[i].sentence());
        for (int d = 0; d < kDocsPerCluster; ++d) {
            std::string doc;
            for (std::size_t s = 0; s < doc_sentences[d].size(); ++s) {
                if (s) doc += " . ";
                doc += doc_sentences[d][s];
            }
            cluster.documents.push_back(doc);
            encoding::ImageRecord img;
            img.patches = Mat(static_cast<int>(doc_sentences[d].size()), kPatchDim);
            for (std::size_t s = 0; s < doc_sentences[d].size(); ++s) {
                const Mat p = fact_patches(doc_sentences[d][s], kPatchDim);
                for (int j = 0; j < kPatchDim; ++j) img.patches.at(static_cast<int>(s), j) = p.at(0, j);
            }
            cluster.images.push_back(std::move(img));
        }
        {
            std::string summary;
            for (int i = 0; i < kFactsPerCluster; ++i) {
                if (i) summary += " . ";
                summary += facts[i].sentence();
            }
            cluster.summary = std::move(summary);
        }

        CheckworthinessPlugin cw_plugin;
        auto add_claim = [&](Label label, int k, std::string text) {
            ClaimRecord rec;
            rec.id = cluster.id + "-" + label_name(label) + "-" + std::to_string(k);
            rec.cluster_id = cluster.id;
            rec.claim = std::move(text);
            rec.label = label;
            rec.checkworthiness = checkworthiness(rec, cw_plugin);
            world.claims.push_back(std::move(rec));
        };
        // Ten claims per label; entailment/contradiction claims cycle the
        // cluster's facts when there are fewer than ten.
        constexpr int kClaimsPerLabel = 10;
        for (int k = 0; k < kClaimsPerLabel; ++k)
            add_claim(Label::Entailment, k, facts[k % kFactsPerCluster].sentence());
        for (int k = 0; k < kClaimsPerLabel; ++k)
            add_claim(Label::Contradiction, k, facts[k % kFactsPerCluster].negation());
        std::set<std::pair<int, int>> neutral_used;
        for (int k = 0; k < kClaimsPerLabel; ++k) {
            int rel, obj;
            do {
                rel = rng.index(neutral_relations().size());
                obj = rng.index(objects().size());
            } while (!neutral_used.insert({rel, obj}).second);
            add_claim(Label::Neutral, k,
                      subjects()[facts[k % kFactsPerCluster].subject] + " " + neutral_relations()[rel] +
                          " " + objects()[obj]);
        }

        world.clusters.push_back(std::move(cluster));
    }
    return world;
}

bool containment_entails(const DocumentCluster& cluster, const std::string& claim) {
    const auto claim_words = policy::Tokenizer::split_words(claim);
    for (const auto& doc : cluster.documents) {
        const auto doc_words = policy::Tokenizer::split_words(doc);
        const std::unordered_set<std::string> doc_set(doc_words.begin(), doc_words.end());
        bool ok = true;
        for (const auto& w : claim_words) {
            if (function_words().count(w)) continue;
            if (!doc_set.count(w)) {
                ok = false;
                break;
            }
        }
        if (ok) return true;
    }
    return false;
}

std::vector<reward::NliExample> make_nli_pairs(std::uint64_t seed, int n) {
    std::vector<reward::NliExample> out;
    out.reserve(static_cast<std::size_t>(n));
    Rng rng = Rng(seed).fork(0x9a1e5);
    for (int i = 0; i < n; ++i) {
        // Premise lengths span single facts up to full-summary size so the
        // classifier stays calibrated on generated summaries.
        const int n_facts = 1 + rng.index(6);
        std::set<std::tuple<int, int, int>> used;
        std::vector<Fact> facts;
        while (static_cast<int>(facts.size()) < n_facts) {
            Fact f{rng.index(subjects().size()), rng.index(relations().size()), rng.index(objects().size())};
            if (used.insert({f.subject, f.relation, f.object}).second) facts.push_back(f);
        }
        std::string premise;
        for (int f = 0; f < n_facts; ++f) {
            if (f) premise += " . ";
            premise += facts[f].sentence();
        }
        reward::NliExample ex;
        ex.premise = std::move(premise);
        const int pick = rng.index(facts.size());
        auto scramble_words = [&rng](const std::string& text) {
            std::vector<std::string> words;
            {
                std::istringstream in(text);
                std::string w;
                while (in >> w) words.push_back(w);
            }
            for (std::size_t k = words.size(); k > 1; --k)
                std::swap(words[k - 1], words[rng.uniform_int(k)]);
            std::string scrambled;
            for (std::size_t k = 0; k < words.size(); ++k) {
                if (k) scrambled += ' ';
                scrambled += words[k];
            }
            return scrambled;
        };
        // An intact copy of the picked fact embedded in scrambled context:
        // what matters is whether the claim's own span survives, not how
        // clean the rest of the summary is.
        auto noisy_context_with_fact = [&](const std::string& fact_sentence) {
            std::string context;
            for (int f = 0; f < n_facts; ++f) {
                if (f) context += " ";
                context += facts[f].sentence();
            }
            const std::string noise = scramble_words(context);
            const auto cut = noise.find(' ', noise.size() / 2);
            if (cut == std::string::npos) return noise + " . " + fact_sentence;
            return noise.substr(0, cut) + " . " + fact_sentence + " . " + noise.substr(cut + 1);
        };
        // Cases 0/1 clean entailment/contradiction, 3/4 the same with the
        // fact span intact inside scrambled context, 5/7 fully scrambled
        // premises that can neither verify nor refute, 2/6 constructed
        // neutrals. Garbled evidence earns nothing; intact spans always pay.
        switch (i % 8) {
            case 0:
                ex.label = Label::Entailment;
                ex.hypothesis = facts[pick].sentence();
                break;
            case 3:
                ex.label = Label::Entailment;
                ex.hypothesis = facts[pick].sentence();
                ex.premise = noisy_context_with_fact(facts[pick].sentence());
                break;
            case 1:
                ex.label = Label::Contradiction;
                ex.hypothesis = facts[pick].negation();
                break;
            case 4:
                ex.label = Label::Contradiction;
                ex.hypothesis = facts[pick].negation();
                ex.premise = noisy_context_with_fact(facts[pick].sentence());
                break;
            case 5:
                ex.label = Label::Neutral;
                ex.hypothesis = facts[pick].sentence();
                ex.premise = scramble_words(ex.premise);
                break;
            case 7:
                ex.label = Label::Neutral;
                ex.hypothesis = facts[pick].negation();
                ex.premise = scramble_words(ex.premise);
                break;
            default: {
                ex.label = Label::Neutral;
                if (i % 2 == 0) {
                    // Unstated relation between mentioned entities: subject and
                    // object both occur in the premise, only the relation is
                    // new. Keeps "high word overlap but neutral" in-distribution.
                    ex.hypothesis = subjects()[facts[pick].subject] + " " +
                                    neutral_relations()[rng.index(neutral_relations().size())] + " " +
                                    objects()[facts[rng.index(facts.size())].object];
                } else {
                    // Unrelated fact absent from the premise.
                    Fact f{rng.index(subjects().size()), rng.index(relations().size()),
                           rng.index(objects().size())};
                    while (used.count({f.subject, f.relation, f.object}))
                        f = Fact{rng.index(subjects().size()), rng.index(relations().size()),
                                 rng.index(objects().size())};
                    ex.hypothesis = f.sentence();
                }
                break;
            }
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::unordered_map<std::string, std::string> scripted_responses_for(const SynthWorld& world) {
    std::unordered_map<std::string, std::string> script;
    for (const auto& cluster : world.clusters) {
        for (Label label : {Label::Entailment, Label::Neutral, Label::Contradiction}) {
            std::string body;
            int k = 0;
            for (const auto& claim : world.claims) {
                if (claim.cluster_id != cluster.id || claim.label != label) continue;
                body += std::to_string(++k) + ". " + claim.claim + "\n";
            }
            script[sha256_hex(prompts::render_claim_prompt(label, cluster.summary))] = body;
        }
        std::string documents;
        for (std::size_t i = 0; i < cluster.documents.size(); ++i) {
            if (i) documents += "\n\n";
            documents += cluster.documents[i];
        }
        for (const auto& claim : world.claims) {
            if (claim.cluster_id != cluster.id) continue;
            script[sha256_hex(prompts::render_double_check_prompt(documents, claim.claim))] =
                std::string("The label is ") + label_name(claim.label) + ".";
        }
    }
    return script;
}

} // namespace factsum::claimgen
