#include "tinyrec/posttrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace tinyrec {

MatchCorpus load_match_corpus(const std::string& path, const Tokenizer& tok, int max_title_tokens,
                              int max_body_tokens) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_match_corpus: cannot open " + path);
    MatchCorpus corpus;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("load_match_corpus: line " + std::to_string(lineno) +
                                     " has no tab separator");
        MatchArticle art;
        art.title = tok.encode_seq(line.substr(0, tab), max_title_tokens);
        art.body = tok.encode_seq(line.substr(tab + 1), max_body_tokens);
        if (art.title.len == 0 || art.body.len == 0)
            throw std::runtime_error("load_match_corpus: line " + std::to_string(lineno) +
                                     " has an empty title or body");
        corpus.articles.push_back(std::move(art));
    }
    return corpus;
}

MatchingOutput matching_forward(const NewsEncoderParams& enc, const MatchSample& sample) {
    if (sample.titles.empty()) throw std::invalid_argument("matching_forward: no titles");
    MatchingOutput out;
    out.body_repr = encode_news(enc, sample.body);
    std::vector<Tensor> reprs;
    std::vector<Tensor> scores;
    reprs.reserve(sample.titles.size());
    for (const TokenSeq& title : sample.titles) {
        Tensor h = encode_news(enc, title);
        scores.push_back(dot(out.body_repr, h));
        reprs.push_back(std::move(h));
    }
    out.title_reprs = stack_rows(reprs);
    out.logits = concat(scores, 0);
    return out;
}

Tensor matching_loss(const Tensor& logits_batch) {
    if (logits_batch.rank() > 2)
        throw std::invalid_argument("matching_loss: expects [N+1] or [B, N+1]");
    const int rows = logits_batch.rank() == 2 ? logits_batch.dim(0) : 1;
    const int cols = logits_batch.rank() == 2 ? logits_batch.dim(1) : logits_batch.dim(0);
    std::vector<double> onehot(static_cast<size_t>(rows) * cols, 0.0);
    for (int r = 0; r < rows; ++r) onehot[static_cast<size_t>(r) * cols] = 1.0;
    Tensor target = Tensor::from(logits_batch.shape(), std::move(onehot));
    return cross_entropy(target, logits_batch);
}

MatchSample make_match_sample(const MatchCorpus& corpus, int positive, int n_negatives,
                              RandomSource& rng) {
    const int n = static_cast<int>(corpus.size());
    if (positive < 0 || positive >= n)
        throw std::invalid_argument("make_match_sample: positive index out of range");
    if (n < n_negatives + 1)
        throw std::invalid_argument("make_match_sample: corpus of " + std::to_string(n) +
                                    " articles cannot supply " + std::to_string(n_negatives) +
                                    " negatives");
    MatchSample s;
    s.body = corpus.articles[static_cast<size_t>(positive)].body;
    s.titles.push_back(corpus.articles[static_cast<size_t>(positive)].title);
    // draw from [0, n-1) and skip over the positive
    for (int idx : rng.sample_without_replacement(n - 1, n_negatives)) {
        const int article = idx >= positive ? idx + 1 : idx;
        s.titles.push_back(corpus.articles[static_cast<size_t>(article)].title);
    }
    return s;
}

std::vector<MatchSample> sample_matching_batch(const MatchCorpus& corpus, int batch_size,
                                               int n_negatives, RandomSource& rng) {
    std::vector<MatchSample> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        const int positive = static_cast<int>(rng.uniform_int(static_cast<int64_t>(corpus.size())));
        batch.push_back(make_match_sample(corpus, positive, n_negatives, rng));
    }
    return batch;
}

double matching_accuracy(const NewsEncoderParams& enc, const MatchCorpus& corpus, int max_samples,
                         int n_negatives, RandomSource& rng) {
    NoGradGuard ng;
    const int n = std::min<int>(max_samples, static_cast<int>(corpus.size()));
    if (n == 0) return 0.0;
    std::vector<int> order(corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const MatchSample s = make_match_sample(corpus, order[static_cast<size_t>(i)], n_negatives, rng);
        const MatchingOutput out = matching_forward(enc, s);
        const auto vals = out.logits.values();
        bool win = true;
        for (size_t j = 1; j < vals.size(); ++j)
            if (vals[j] >= vals[0]) win = false;
        hits += win ? 1 : 0;
    }
    return static_cast<double>(hits) / n;
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    const double denom = std::sqrt(aa) * std::sqrt(bb);
    return denom > 0.0 ? ab / denom : 0.0;
}

}  // namespace

CosineGap title_body_cosine_gap(const NewsEncoderParams& enc, const MatchCorpus& corpus,
                                int max_articles, RandomSource& rng) {
    NoGradGuard ng;
    const int n = std::min<int>(max_articles, static_cast<int>(corpus.size()));
    if (n < 2) throw std::invalid_argument("title_body_cosine_gap: need at least two articles");
    std::vector<int> order(corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);

    std::vector<std::vector<double>> titles, bodies;
    for (int i = 0; i < n; ++i) {
        const MatchArticle& art = corpus.articles[static_cast<size_t>(order[static_cast<size_t>(i)])];
        Tensor t = encode_news(enc, art.title);
        Tensor b = encode_news(enc, art.body);
        titles.emplace_back(t.values().begin(), t.values().end());
        bodies.emplace_back(b.values().begin(), b.values().end());
    }
    CosineGap gap;
    for (int i = 0; i < n; ++i) {
        gap.own += cosine(titles[static_cast<size_t>(i)], bodies[static_cast<size_t>(i)]);
        int other = static_cast<int>(rng.uniform_int(n - 1));
        if (other >= i) ++other;
        gap.other += cosine(titles[static_cast<size_t>(i)], bodies[static_cast<size_t>(other)]);
    }
    gap.own /= n;
    gap.other /= n;
    gap.gap = gap.own - gap.other;
    return gap;
}

}  // namespace tinyrec
