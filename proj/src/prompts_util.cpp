#include "factsum/prompts.hpp"

#include "factsum/sha256.hpp"

namespace factsum::prompts {

const char* claim_template(Label label) {
    switch (label) {
        case Label::Entailment: return k_claim_entailment;
        case Label::Neutral: return k_claim_neutral;
        case Label::Contradiction: return k_claim_contradiction;
    }
    return k_claim_entailment;
}

std::string substitute(std::string tmpl, const std::string& slot, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = tmpl.find(slot, pos)) != std::string::npos) {
        tmpl.replace(pos, slot.size(), value);
        pos += value.size();
    }
    return tmpl;
}

std::string render_claim_prompt(Label label, const std::string& summary) {
    return substitute(claim_template(label), "<summary>", summary);
}

std::string render_double_check_prompt(const std::string& documents, const std::string& claim) {
    return substitute(substitute(k_double_check, "<documents>", documents), "<claim>", claim);
}

std::string render_quality_prompt(const std::string& summary) {
    return substitute(k_quality, "<summary>", summary);
}

std::string template_hash(const char* tmpl) { return sha256_hex(tmpl); }

} // namespace factsum::prompts
