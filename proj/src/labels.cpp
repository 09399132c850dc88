#include "factsum/labels.hpp"

#include <algorithm>
#include <cctype>

namespace factsum {

namespace {
std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}
} // namespace

std::optional<Label> parse_label(const std::string& word) {
    const std::string w = lower(word);
    if (w == "entailment" || w == "supported") return Label::Entailment;
    if (w == "neutral" || w == "nei") return Label::Neutral;
    if (w == "contradiction" || w == "refuted") return Label::Contradiction;
    return std::nullopt;
}

std::optional<Label> find_label_word(const std::string& text) {
    const std::string t = lower(text);
    std::size_t best = std::string::npos;
    Label best_label = Label::Entailment;
    for (const auto& [word, label] : {std::pair<const char*, Label>{"entailment", Label::Entailment},
                                      {"neutral", Label::Neutral},
                                      {"contradiction", Label::Contradiction}}) {
        const auto pos = t.find(word);
        if (pos != std::string::npos && pos < best) {
            best = pos;
            best_label = label;
        }
    }
    if (best == std::string::npos) return std::nullopt;
    return best_label;
}

} // namespace factsum
