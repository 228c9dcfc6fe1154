#include "tinyrec/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace tinyrec {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::vector<std::string> split_nonempty(const std::string& field, char sep) {
    std::vector<std::string> out;
    for (auto& part : split(field, sep))
        if (!part.empty()) out.push_back(std::move(part));
    return out;
}

[[noreturn]] void line_error(const std::string& what, const std::string& path, int lineno) {
    throw std::runtime_error(what + " (" + path + ":" + std::to_string(lineno) + ")");
}

}  // namespace

bool Impression::has_positive() const {
    for (const Candidate& c : candidates)
        if (c.label == 1) return true;
    return false;
}

bool Impression::has_negative() const {
    for (const Candidate& c : candidates)
        if (c.label == 0) return true;
    return false;
}

NewsTable::NewsTable(std::vector<NewsArticle> articles) : articles_(std::move(articles)) {
    index_.reserve(articles_.size());
    for (size_t i = 0; i < articles_.size(); ++i) {
        const auto [it, inserted] = index_.emplace(articles_[i].id, static_cast<int>(i));
        if (!inserted)
            throw std::invalid_argument("NewsTable: duplicate news id " + articles_[i].id);
    }
}

int NewsTable::index_of(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
}

int NewsTable::require(const std::string& id) const {
    const int idx = index_of(id);
    if (idx < 0) throw std::runtime_error("unknown news id " + id);
    return idx;
}

std::vector<NewsArticle> parse_mind_news(const std::string& path, const Tokenizer& tok,
                                         int max_title_tokens, int max_body_tokens) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_mind_news: cannot open " + path);
    std::vector<NewsArticle> articles;
    std::unordered_set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto cols = split(line, '\t');
        if (cols.size() != 8)
            line_error("parse_mind_news: expected 8 tab-separated columns, got " +
                           std::to_string(cols.size()),
                       path, lineno);
        NewsArticle art;
        art.id = cols[0];
        art.category = cols[1];
        art.subcategory = cols[2];
        art.title_text = cols[3];
        art.body_text = cols[4];
        art.url = cols[5];
        art.title_entities = cols[6];
        art.body_entities = cols[7];
        if (art.id.empty()) line_error("parse_mind_news: empty news id", path, lineno);
        if (!seen.insert(art.id).second)
            line_error("parse_mind_news: duplicate news id " + art.id, path, lineno);
        art.title = tok.encode_seq(art.title_text, max_title_tokens);
        art.body = tok.encode_seq(art.body_text, max_body_tokens);
        articles.push_back(std::move(art));
    }
    return articles;
}

std::vector<Impression> parse_mind_behaviors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_mind_behaviors: cannot open " + path);
    std::vector<Impression> impressions;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto cols = split(line, '\t');
        if (cols.size() != 5)
            line_error("parse_mind_behaviors: expected 5 tab-separated columns, got " +
                           std::to_string(cols.size()),
                       path, lineno);
        Impression imp;
        imp.impression_id = cols[0];
        imp.user_id = cols[1];
        imp.time = cols[2];
        imp.history = split_nonempty(cols[3], ' ');
        for (const std::string& item : split_nonempty(cols[4], ' ')) {
            const size_t dash = item.rfind('-');
            if (dash == std::string::npos || dash == 0 || dash + 2 != item.size())
                line_error("parse_mind_behaviors: malformed candidate '" + item + "'", path, lineno);
            Candidate c;
            c.news_id = item.substr(0, dash);
            const char suffix = item[dash + 1];
            if (suffix == '1')
                c.label = 1;
            else if (suffix == '0')
                c.label = 0;
            else
                line_error("parse_mind_behaviors: unknown click suffix '" + item + "'", path,
                           lineno);
            imp.candidates.push_back(std::move(c));
        }
        if (imp.candidates.empty())
            line_error("parse_mind_behaviors: impression without candidates", path, lineno);
        impressions.push_back(std::move(imp));
    }
    return impressions;
}

std::string serialize_mind_news(const std::vector<NewsArticle>& articles) {
    std::ostringstream os;
    for (const NewsArticle& a : articles)
        os << a.id << '\t' << a.category << '\t' << a.subcategory << '\t' << a.title_text << '\t'
           << a.body_text << '\t' << a.url << '\t' << a.title_entities << '\t' << a.body_entities
           << '\n';
    return os.str();
}

std::string serialize_mind_behaviors(const std::vector<Impression>& impressions) {
    std::ostringstream os;
    for (const Impression& imp : impressions) {
        os << imp.impression_id << '\t' << imp.user_id << '\t' << imp.time << '\t';
        for (size_t i = 0; i < imp.history.size(); ++i) os << (i ? " " : "") << imp.history[i];
        os << '\t';
        for (size_t i = 0; i < imp.candidates.size(); ++i)
            os << (i ? " " : "") << imp.candidates[i].news_id << '-' << imp.candidates[i].label;
        os << '\n';
    }
    return os.str();
}

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace

void write_mind_news(const std::string& path, const std::vector<NewsArticle>& articles) {
    write_file(path, serialize_mind_news(articles));
}

void write_mind_behaviors(const std::string& path, const std::vector<Impression>& impressions) {
    write_file(path, serialize_mind_behaviors(impressions));
}

void write_match_corpus(const std::string& path, const std::vector<NewsArticle>& articles) {
    std::ostringstream os;
    for (const NewsArticle& a : articles) {
        if (a.body_text.empty() || a.title_text.empty()) continue;
        os << a.title_text << '\t' << a.body_text << '\n';
    }
    write_file(path, os.str());
}

MatchCorpus match_corpus_from_articles(const std::vector<NewsArticle>& articles) {
    MatchCorpus corpus;
    for (const NewsArticle& a : articles) {
        if (a.title.len == 0 || a.body.len == 0) continue;
        corpus.articles.push_back({a.title, a.body});
    }
    return corpus;
}

std::vector<RecSample> build_rec_samples(const std::vector<Impression>& impressions,
                                         const NewsTable& table, int k_negatives, int max_history,
                                         RandomSource& rng) {
    if (k_negatives < 1) throw std::invalid_argument("build_rec_samples: need k >= 1");
    std::vector<RecSample> samples;
    for (size_t ii = 0; ii < impressions.size(); ++ii) {
        const Impression& imp = impressions[ii];
        std::vector<int> positives, negatives;
        for (const Candidate& c : imp.candidates) {
            const int idx = table.require(c.news_id);
            (c.label == 1 ? positives : negatives).push_back(idx);
        }
        if (positives.empty() || negatives.empty()) continue;

        std::vector<int> history;
        const size_t start = imp.history.size() > static_cast<size_t>(max_history)
                                 ? imp.history.size() - static_cast<size_t>(max_history)
                                 : 0;
        for (size_t h = start; h < imp.history.size(); ++h)
            history.push_back(table.require(imp.history[h]));

        for (int pos : positives) {
            RecSample s;
            s.impression_index = static_cast<int>(ii);
            s.history = history;
            std::vector<int> negs;
            if (static_cast<int>(negatives.size()) >= k_negatives) {
                for (int j : rng.sample_without_replacement(static_cast<int>(negatives.size()),
                                                            k_negatives))
                    negs.push_back(negatives[static_cast<size_t>(j)]);
            } else {
                for (int j = 0; j < k_negatives; ++j)
                    negs.push_back(negatives[static_cast<size_t>(
                        rng.uniform_int(static_cast<int64_t>(negatives.size())))]);
            }
            s.label_pos = static_cast<int>(rng.uniform_int(k_negatives + 1));
            s.candidates = std::move(negs);
            s.candidates.insert(s.candidates.begin() + s.label_pos, pos);
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

// ===================== synthetic corpus =====================

namespace {

struct SynthUser {
    int primary = 0;
    int secondary = 0;
};

}  // namespace

SynthData generate_synthetic_corpus(const SynthSpec& spec, const Tokenizer& tok,
                                    int max_title_tokens, int max_body_tokens) {
    if (spec.n_topics < 1 || spec.n_articles < 1 || spec.n_users < 1)
        throw std::invalid_argument("generate_synthetic_corpus: counts must be positive");
    if (spec.content_words > spec.words_per_topic)
        throw std::invalid_argument("generate_synthetic_corpus: content_words exceeds topic vocabulary");
    if (spec.title_tokens > spec.content_words)
        throw std::invalid_argument("generate_synthetic_corpus: title_tokens exceeds content_words");
    if (spec.body_tokens < spec.title_tokens)
        throw std::invalid_argument("generate_synthetic_corpus: body must hold every title token");
    if (spec.history_min < 1 || spec.history_max < spec.history_min)
        throw std::invalid_argument("generate_synthetic_corpus: bad history range");
    if (spec.n_candidates < 2)
        throw std::invalid_argument("generate_synthetic_corpus: need at least two candidates");

    RandomSource rng(spec.seed);
    SynthData data;

    // topic vocabularies
    std::vector<std::vector<std::string>> topic_words(static_cast<size_t>(spec.n_topics));
    for (int t = 0; t < spec.n_topics; ++t)
        for (int w = 0; w < spec.words_per_topic; ++w)
            topic_words[static_cast<size_t>(t)].push_back("t" + std::to_string(t) + "w" +
                                                          std::to_string(w));

    // articles: the title reuses words that appear in the body
    std::vector<std::vector<int>> by_topic(static_cast<size_t>(spec.n_topics));
    for (int i = 0; i < spec.n_articles; ++i) {
        const int topic = i % spec.n_topics;
        const auto& words = topic_words[static_cast<size_t>(topic)];
        const auto content = rng.sample_without_replacement(spec.words_per_topic,
                                                            spec.content_words);
        std::string title;
        std::vector<int> body_words;
        for (int w = 0; w < spec.title_tokens; ++w) {
            if (w) title += ' ';
            title += words[static_cast<size_t>(content[static_cast<size_t>(w)])];
            body_words.push_back(content[static_cast<size_t>(w)]);
        }
        // every title word appears in the body; the rest is drawn from the
        // same per-article content set
        while (static_cast<int>(body_words.size()) < spec.body_tokens)
            body_words.push_back(content[static_cast<size_t>(rng.uniform_int(spec.content_words))]);
        rng.shuffle(body_words);
        std::string body;
        for (size_t w = 0; w < body_words.size(); ++w) {
            if (w) body += ' ';
            body += words[static_cast<size_t>(body_words[w])];
        }
        NewsArticle art;
        art.id = "N" + std::to_string(i);
        art.category = "topic" + std::to_string(topic);
        art.subcategory = "all";
        art.title_text = std::move(title);
        art.body_text = std::move(body);
        art.url = "-";
        art.title_entities = "[]";
        art.body_entities = "[]";
        art.title = tok.encode_seq(art.title_text, max_title_tokens);
        art.body = tok.encode_seq(art.body_text, max_body_tokens);
        by_topic[static_cast<size_t>(topic)].push_back(i);
        data.articles.push_back(std::move(art));
    }
    for (int t = 0; t < spec.n_topics; ++t)
        if (by_topic[static_cast<size_t>(t)].empty())
            throw std::invalid_argument("generate_synthetic_corpus: a topic has no articles");

    // users with a primary and secondary topic preference
    std::vector<SynthUser> users(static_cast<size_t>(spec.n_users));
    for (auto& u : users) {
        u.primary = static_cast<int>(rng.uniform_int(spec.n_topics));
        u.secondary = spec.n_topics == 1
                          ? u.primary
                          : static_cast<int>((u.primary + 1 + rng.uniform_int(spec.n_topics - 1)) %
                                             spec.n_topics);
    }

    auto article_of_topic = [&](int topic) -> int {
        const auto& pool = by_topic[static_cast<size_t>(topic)];
        return pool[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(pool.size())))];
    };

    auto gen_impression = [&](int serial) -> Impression {
        const int uid = static_cast<int>(rng.uniform_int(spec.n_users));
        const SynthUser& user = users[static_cast<size_t>(uid)];
        for (int attempt = 0; attempt < 64; ++attempt) {
            Impression imp;
            imp.impression_id = std::to_string(serial);
            imp.user_id = "U" + std::to_string(uid);
            imp.time = "-";
            const int hist_len = spec.history_min +
                                 static_cast<int>(rng.uniform_int(spec.history_max -
                                                                  spec.history_min + 1));
            for (int h = 0; h < hist_len; ++h) {
                const int topic = rng.uniform() < 0.8 ? user.primary : user.secondary;
                imp.history.push_back(data.articles[static_cast<size_t>(article_of_topic(topic))].id);
            }
            for (int c = 0; c < spec.n_candidates; ++c) {
                const bool preferred = spec.n_topics == 1 || rng.uniform() < 0.5;
                int topic;
                if (preferred) {
                    topic = rng.uniform() < 0.8 ? user.primary : user.secondary;
                } else {
                    topic = static_cast<int>(rng.uniform_int(spec.n_topics));
                    while (topic == user.primary || topic == user.secondary)
                        topic = static_cast<int>(rng.uniform_int(spec.n_topics));
                }
                const bool liked = topic == user.primary || topic == user.secondary;
                const double p_click = liked ? 1.0 - spec.click_noise : spec.click_noise;
                Candidate cand;
                cand.news_id = data.articles[static_cast<size_t>(article_of_topic(topic))].id;
                cand.label = rng.uniform() < p_click ? 1 : 0;
                imp.candidates.push_back(std::move(cand));
            }
            if (imp.has_positive() && imp.has_negative()) return imp;
        }
        throw std::runtime_error("generate_synthetic_corpus: could not draw a two-class impression");
    };

    // special case: two preferred topics can cover everything, making the
    // non-preferred draw loop spin forever
    if (spec.n_topics == 2)
        for (auto& u : users) u.secondary = u.primary;

    for (int i = 0; i < spec.n_train_impressions; ++i)
        data.train.push_back(gen_impression(i));
    for (int i = 0; i < spec.n_eval_impressions; ++i)
        data.eval.push_back(gen_impression(spec.n_train_impressions + i));
    return data;
}

}  // namespace tinyrec
