#include "tinyrec/tokenizer.hpp"

#include <cctype>
#include <stdexcept>

namespace tinyrec {

Tokenizer::Tokenizer(int vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size < 2) throw std::invalid_argument("Tokenizer: vocab must hold padding plus words");
}

int Tokenizer::token_id(std::string_view word) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : word) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return 1 + static_cast<int>(h % static_cast<uint64_t>(vocab_size_ - 1));
}

std::vector<std::string> Tokenizer::split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

std::vector<int> Tokenizer::encode(std::string_view text, int max_tokens) const {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) {
        if (static_cast<int>(ids.size()) >= max_tokens) break;
        ids.push_back(token_id(w));
    }
    return ids;
}

TokenSeq Tokenizer::encode_seq(std::string_view text, int max_tokens) const {
    TokenSeq seq;
    seq.ids = encode(text, max_tokens);
    seq.len = static_cast<int>(seq.ids.size());
    return seq;
}

}  // namespace tinyrec
