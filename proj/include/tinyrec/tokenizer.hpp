#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tinyrec {

// A padded token sequence: ids ending in zero-padding, len real tokens.
struct TokenSeq {
    std::vector<int> ids;
    int len = 0;

    int padded_len() const { return static_cast<int>(ids.size()); }
};

// Lowercase, split on non-alphanumeric runs, hash each word into [1, vocab).
// Id 0 is reserved for padding. Deterministic and dependency-free.
class Tokenizer {
public:
    explicit Tokenizer(int vocab_size = 30000);

    int vocab_size() const { return vocab_size_; }
    int token_id(std::string_view word) const;

    std::vector<int> encode(std::string_view text, int max_tokens) const;
    TokenSeq encode_seq(std::string_view text, int max_tokens) const;

    static std::vector<std::string> split_words(std::string_view text);

private:
    int vocab_size_;
};

}  // namespace tinyrec
