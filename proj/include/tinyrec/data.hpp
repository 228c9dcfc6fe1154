#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tinyrec/posttrain.hpp"
#include "tinyrec/rng.hpp"
#include "tinyrec/tokenizer.hpp"

namespace tinyrec {

// One MIND news row. The abstract stands in for the body, which MIND lacks.
struct NewsArticle {
    std::string id;
    std::string category, subcategory;
    std::string title_text, body_text;
    std::string url, title_entities, body_entities;
    TokenSeq title;
    TokenSeq body;
};

struct Candidate {
    std::string news_id;
    int label = 0;  // 1 = clicked
};

struct Impression {
    std::string impression_id, user_id, time;
    std::vector<std::string> history;  // clicked news ids, oldest first
    std::vector<Candidate> candidates;

    bool has_positive() const;
    bool has_negative() const;
};

class NewsTable {
public:
    explicit NewsTable(std::vector<NewsArticle> articles);

    int size() const { return static_cast<int>(articles_.size()); }
    const NewsArticle& at(int index) const { return articles_[static_cast<size_t>(index)]; }
    int index_of(const std::string& id) const;  // -1 when absent
    int require(const std::string& id) const;   // throws on unknown id

private:
    std::vector<NewsArticle> articles_;
    std::unordered_map<std::string, int> index_;
};

// MIND news.tsv: news_id, category, subcategory, title, abstract, url,
// title_entities, abstract_entities. Malformed rows raise with line numbers.
std::vector<NewsArticle> parse_mind_news(const std::string& path, const Tokenizer& tok,
                                         int max_title_tokens, int max_body_tokens);

// MIND behaviors.tsv: impression_id, user_id, time, space-separated history,
// space-separated candidates with a -1/-0 click suffix.
std::vector<Impression> parse_mind_behaviors(const std::string& path);

std::string serialize_mind_news(const std::vector<NewsArticle>& articles);
std::string serialize_mind_behaviors(const std::vector<Impression>& impressions);
void write_mind_news(const std::string& path, const std::vector<NewsArticle>& articles);
void write_mind_behaviors(const std::string& path, const std::vector<Impression>& impressions);

// "title<TAB>body" lines; articles with an empty body are skipped.
void write_match_corpus(const std::string& path, const std::vector<NewsArticle>& articles);
MatchCorpus match_corpus_from_articles(const std::vector<NewsArticle>& articles);

// One training instance of the recommendation task: the positive sits at a
// random slot among K sampled negatives from the same impression.
struct RecSample {
    int impression_index = -1;
    std::vector<int> history;     // article indices, most recent last, <= L
    std::vector<int> candidates;  // K+1 article indices
    int label_pos = 0;
};

std::vector<RecSample> build_rec_samples(const std::vector<Impression>& impressions,
                                         const NewsTable& table, int k_negatives, int max_history,
                                         RandomSource& rng);

// Desk-scale synthetic dataset. Titles reuse words from their own body
// (learnable matching signal); clicks follow per-user topic preferences
// (learnable recommendation signal). A single topic removes both signals.
struct SynthSpec {
    int n_articles = 2000;
    int n_topics = 4;
    int words_per_topic = 64;
    int content_words = 10;  // distinct words per article; title is a subset
    int title_tokens = 6;
    int body_tokens = 48;
    int n_users = 200;
    int n_train_impressions = 2000;
    int n_eval_impressions = 500;
    int n_candidates = 10;
    int history_min = 3;
    int history_max = 12;
    double click_noise = 0.1;
    uint64_t seed = 1;
};

struct SynthData {
    std::vector<NewsArticle> articles;
    std::vector<Impression> train;
    std::vector<Impression> eval;
};

SynthData generate_synthetic_corpus(const SynthSpec& spec, const Tokenizer& tok,
                                    int max_title_tokens, int max_body_tokens);

}  // namespace tinyrec
