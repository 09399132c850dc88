#pragma once

#include <string>

#include "factsum/labels.hpp"

namespace factsum::prompts {

// Template assets embedded at build time from assets/prompts/.
extern const char* const k_claim_entailment;
extern const char* const k_claim_neutral;
extern const char* const k_claim_contradiction;
extern const char* const k_double_check;
extern const char* const k_quality;

const char* claim_template(Label label);

// Replaces every occurrence of `slot` (e.g. "<summary>") with `value`.
std::string substitute(std::string tmpl, const std::string& slot, const std::string& value);

std::string render_claim_prompt(Label label, const std::string& summary);
std::string render_double_check_prompt(const std::string& documents, const std::string& claim);
std::string render_quality_prompt(const std::string& summary);

// SHA-256 of the raw template text, recorded in corpus manifests.
std::string template_hash(const char* tmpl);

} // namespace factsum::prompts
