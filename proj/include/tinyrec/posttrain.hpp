#pragma once

#include <string>
#include <vector>

#include "tinyrec/encoders.hpp"
#include "tinyrec/tokenizer.hpp"

namespace tinyrec {

// One title-body matching instance: a news body and N+1 candidate titles,
// with the article's own title at position 0.
struct MatchSample {
    TokenSeq body;
    std::vector<TokenSeq> titles;
};

struct MatchArticle {
    TokenSeq title;
    TokenSeq body;
};

struct MatchCorpus {
    std::vector<MatchArticle> articles;
    size_t size() const { return articles.size(); }
};

// One article per line, "title<TAB>body", UTF-8.
MatchCorpus load_match_corpus(const std::string& path, const Tokenizer& tok, int max_title_tokens,
                              int max_body_tokens);

struct MatchingOutput {
    Tensor logits;       // [N+1]; logits[0] is the positive score
    Tensor title_reprs;  // [N+1, news_dim]
    Tensor body_repr;    // [news_dim]
};

// Dot product of the body representation with each title representation.
MatchingOutput matching_forward(const NewsEncoderParams& enc, const MatchSample& sample);

// Mean over the batch of -log softmax(logits)[0]. Accepts [N+1] or [B, N+1].
Tensor matching_loss(const Tensor& logits_batch);

// Negatives drawn uniformly without replacement from the other articles.
MatchSample make_match_sample(const MatchCorpus& corpus, int positive, int n_negatives,
                              RandomSource& rng);
std::vector<MatchSample> sample_matching_batch(const MatchCorpus& corpus, int batch_size,
                                               int n_negatives, RandomSource& rng);

// Fraction of fresh matching samples whose positive title wins the ranking.
double matching_accuracy(const NewsEncoderParams& enc, const MatchCorpus& corpus, int max_samples,
                         int n_negatives, RandomSource& rng);

// Mean cosine of (title, own body) minus mean cosine of (title, other body);
// a post-trained encoder should open a clear gap.
struct CosineGap {
    double own = 0.0;
    double other = 0.0;
    double gap = 0.0;
};
CosineGap title_body_cosine_gap(const NewsEncoderParams& enc, const MatchCorpus& corpus,
                                int max_articles, RandomSource& rng);

}  // namespace tinyrec
