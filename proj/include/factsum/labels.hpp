#pragma once

#include <optional>
#include <string>

namespace factsum {

// The three NLI labels. Fact-checking reports also print the truthfulness
// vocabulary: Supported / NEI / Refuted.
enum class Label { Entailment = 0, Neutral = 1, Contradiction = 2 };

inline const char* label_name(Label l) {
    switch (l) {
        case Label::Entailment: return "entailment";
        case Label::Neutral: return "neutral";
        case Label::Contradiction: return "contradiction";
    }
    return "entailment";
}

inline const char* truthfulness_name(Label l) {
    switch (l) {
        case Label::Entailment: return "supported";
        case Label::Neutral: return "nei";
        case Label::Contradiction: return "refuted";
    }
    return "supported";
}

std::optional<Label> parse_label(const std::string& word);

// First label word occurring in free-form text, scanning left to right.
std::optional<Label> find_label_word(const std::string& text);

} // namespace factsum
