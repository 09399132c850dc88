#include "factsum/tokenizer.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "factsum/error.hpp"

namespace factsum::policy {

Tokenizer::Tokenizer() {
    for (const char* w : {"<pad>", "<bos>", "<eos>", "</s>", "<unk>"}) add_word(w);
}

std::vector<std::string> Tokenizer::split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void Tokenizer::add_word(const std::string& word) {
    if (ids_.count(word)) return;
    ids_.emplace(word, static_cast<int>(words_.size()));
    words_.push_back(word);
}

void Tokenizer::add_text(const std::string& text) {
    for (auto& w : split_words(text)) add_word(w);
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    std::vector<int> out;
    for (auto& w : split_words(text)) out.push_back(id_of(w));
    return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        if (!out.empty()) out.push_back(' ');
        out += word_of(id);
    }
    return out;
}

int Tokenizer::id_of(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::word_of(int id) const {
    if (id < 0 || id >= static_cast<int>(words_.size()))
        throw Error(ErrorKind::Validation, "token id out of range: " + std::to_string(id));
    return words_[id];
}

std::string Tokenizer::to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["words"] = words_;
    return j.dump(2);
}

Tokenizer Tokenizer::from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.contains("words") || !j["words"].is_array())
        throw Error(ErrorKind::Format, "invalid tokenizer file", "words");
    Tokenizer t;
    const auto& words = j["words"];
    for (std::size_t i = 0; i < words.size(); ++i) {
        const std::string w = words[i].get<std::string>();
        if (i < 5) {
            if (w != t.words_[i]) throw Error(ErrorKind::Format, "tokenizer reserved table mismatch", w);
        } else {
            t.add_word(w);
        }
    }
    return t;
}

} // namespace factsum::policy
