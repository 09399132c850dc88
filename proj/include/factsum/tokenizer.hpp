#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace factsum::policy {

// Whitespace + lowercase tokenizer with a fixed reserved-token table. The
// vocabulary is built from the training corpus at dataset-build time and
// persisted next to it; unseen tokens map to <unk>.
class Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kSep = 3; // rendered as "</s>"
    static constexpr int kUnk = 4;

    Tokenizer();

    static std::vector<std::string> split_words(const std::string& text);

    // Adds every word of `text` to the vocabulary (idempotent).
    void add_text(const std::string& text);
    void add_word(const std::string& word);

    std::vector<int> encode(const std::string& text) const;
    // Space-joined tokens; pad/bos/eos are skipped, <sep> renders as "</s>".
    std::string decode(const std::vector<int>& ids) const;

    int id_of(const std::string& word) const; // kUnk when absent
    const std::string& word_of(int id) const;
    int vocab_size() const { return static_cast<int>(words_.size()); }

    std::string to_json() const;
    static Tokenizer from_json(const std::string& json_text);

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
};

} // namespace factsum::policy
