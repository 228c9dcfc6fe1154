#include "tinyrec/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace tinyrec {

namespace {

void check_scores(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("metric: scores and labels must be equal-length and non-empty");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("metric: non-finite score");
}

// indices sorted by descending score, ties kept in input order
std::vector<int> descending_order(std::span<const double> scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });
    return order;
}

}  // namespace

double auc_score(std::span<const double> scores, std::span<const int> labels) {
    check_scores(scores, labels);
    int64_t positives = 0, negatives = 0;
    for (int l : labels) (l == 1 ? positives : negatives)++;
    if (positives == 0 || negatives == 0)
        throw std::invalid_argument("auc_score: needs both classes");

    const auto order = descending_order(scores);
    const size_t n = order.size();
    // tie-averaged ranks, 1-based, ascending by score
    std::vector<double> rank(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[static_cast<size_t>(order[j + 1])] ==
                                scores[static_cast<size_t>(order[i])])
            ++j;
        // order is descending; convert block positions to ascending ranks
        const double lo = static_cast<double>(n - j);
        const double hi = static_cast<double>(n - i);
        const double avg = 0.5 * (lo + hi);
        for (size_t k = i; k <= j; ++k) rank[static_cast<size_t>(order[k])] = avg;
        i = j + 1;
    }
    double rank_sum = 0.0;
    for (size_t k = 0; k < n; ++k)
        if (labels[k] == 1) rank_sum += rank[k];
    const double u = rank_sum - 0.5 * static_cast<double>(positives) *
                                    (static_cast<double>(positives) + 1.0);
    return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

double mrr_score(std::span<const double> scores, std::span<const int> labels) {
    check_scores(scores, labels);
    const auto order = descending_order(scores);
    double sum = 0.0;
    int64_t positives = 0;
    for (size_t pos = 0; pos < order.size(); ++pos) {
        if (labels[static_cast<size_t>(order[pos])] == 1) {
            sum += 1.0 / static_cast<double>(pos + 1);
            ++positives;
        }
    }
    if (positives == 0) throw std::invalid_argument("mrr_score: needs at least one positive");
    return sum / static_cast<double>(positives);
}

double ndcg_at_k(std::span<const double> scores, std::span<const int> labels, int k) {
    check_scores(scores, labels);
    if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be positive");
    int64_t positives = 0;
    for (int l : labels) positives += l == 1;
    if (positives == 0) throw std::invalid_argument("ndcg_at_k: needs at least one positive");

    const auto order = descending_order(scores);
    const int depth = std::min<int>(k, static_cast<int>(order.size()));
    double dcg = 0.0;
    for (int pos = 0; pos < depth; ++pos)
        if (labels[static_cast<size_t>(order[static_cast<size_t>(pos)])] == 1)
            dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    double idcg = 0.0;
    const int ideal = std::min<int>(depth, static_cast<int>(positives));
    for (int pos = 0; pos < ideal; ++pos) idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    return dcg / idcg;
}

std::string EvalResult::to_line() const {
    std::ostringstream os;
    os.precision(17);
    os << "auc=" << auc << " mrr=" << mrr << " ndcg5=" << ndcg5 << " ndcg10=" << ndcg10
       << " impressions=" << total << " used_auc=" << used_auc << " used_rank=" << used_rank
       << " skipped_single_class=" << skipped_single_class
       << " skipped_no_positive=" << skipped_no_positive;
    return os.str();
}

namespace {

struct ImpressionMetrics {
    double auc = 0.0, mrr = 0.0, ndcg5 = 0.0, ndcg10 = 0.0;
    bool auc_ok = false;
    bool rank_ok = false;
};

}  // namespace

EvalResult evaluate(const RecModel& model, const std::vector<Impression>& impressions,
                    const NewsTable& table, int threads) {
    if (threads < 1) throw std::invalid_argument("evaluate: threads must be >= 1");
    const ModelConfig& cfg = model.news.cfg;

    // every referenced id must exist before any work starts
    std::vector<char> referenced(static_cast<size_t>(table.size()), 0);
    for (const Impression& imp : impressions) {
        for (const std::string& id : imp.history) referenced[static_cast<size_t>(table.require(id))] = 1;
        for (const Candidate& c : imp.candidates) referenced[static_cast<size_t>(table.require(c.news_id))] = 1;
    }

    // one representation per unique news id, then read-only
    std::vector<std::vector<double>> cache(static_cast<size_t>(table.size()));
    {
        std::vector<int> todo;
        for (int i = 0; i < table.size(); ++i)
            if (referenced[static_cast<size_t>(i)]) todo.push_back(i);
        auto encode_range = [&](size_t lo, size_t hi) {
            NoGradGuard ng;
            for (size_t idx = lo; idx < hi; ++idx) {
                const int article = todo[idx];
                Tensor h = encode_news(model.news, table.at(article).title);
                cache[static_cast<size_t>(article)].assign(h.values().begin(), h.values().end());
            }
        };
        if (threads == 1 || todo.size() < 64) {
            encode_range(0, todo.size());
        } else {
            std::vector<std::thread> pool;
            const size_t chunk = (todo.size() + static_cast<size_t>(threads) - 1) /
                                 static_cast<size_t>(threads);
            for (int t = 0; t < threads; ++t) {
                const size_t lo = static_cast<size_t>(t) * chunk;
                const size_t hi = std::min(todo.size(), lo + chunk);
                if (lo >= hi) break;
                pool.emplace_back(encode_range, lo, hi);
            }
            for (auto& th : pool) th.join();
        }
    }

    std::vector<ImpressionMetrics> results(impressions.size());
    auto score_range = [&](size_t lo, size_t hi) {
        NoGradGuard ng;
        for (size_t ii = lo; ii < hi; ++ii) {
            const Impression& imp = impressions[ii];
            std::vector<Tensor> history;
            std::vector<char> mask;
            const size_t start = imp.history.size() > static_cast<size_t>(cfg.history_len)
                                     ? imp.history.size() - static_cast<size_t>(cfg.history_len)
                                     : 0;
            for (size_t h = start; h < imp.history.size(); ++h) {
                const int idx = table.index_of(imp.history[h]);
                history.push_back(Tensor::from({cfg.news_dim}, cache[static_cast<size_t>(idx)]));
                mask.push_back(1);
            }
            Tensor u = encode_user(model.user, history, mask);
            std::vector<double> scores;
            std::vector<int> labels;
            for (const Candidate& c : imp.candidates) {
                const int idx = table.index_of(c.news_id);
                Tensor h = Tensor::from({cfg.news_dim}, cache[static_cast<size_t>(idx)]);
                scores.push_back(score_click(h, u).item());
                labels.push_back(c.label);
            }
            ImpressionMetrics& m = results[ii];
            const bool has_pos = imp.has_positive();
            if (has_pos && imp.has_negative()) {
                m.auc = auc_score(scores, labels);
                m.auc_ok = true;
            }
            if (has_pos) {
                m.mrr = mrr_score(scores, labels);
                m.ndcg5 = ndcg_at_k(scores, labels, 5);
                m.ndcg10 = ndcg_at_k(scores, labels, 10);
                m.rank_ok = true;
            }
        }
    };
    if (threads == 1 || impressions.size() < 16) {
        score_range(0, impressions.size());
    } else {
        std::vector<std::thread> pool;
        const size_t chunk = (impressions.size() + static_cast<size_t>(threads) - 1) /
                             static_cast<size_t>(threads);
        for (int t = 0; t < threads; ++t) {
            const size_t lo = static_cast<size_t>(t) * chunk;
            const size_t hi = std::min(impressions.size(), lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(score_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    // deterministic reduction in impression order
    EvalResult out;
    out.total = static_cast<int>(impressions.size());
    for (const ImpressionMetrics& m : results) {
        if (m.auc_ok) {
            out.auc += m.auc;
            ++out.used_auc;
        } else {
            ++out.skipped_single_class;
        }
        if (m.rank_ok) {
            out.mrr += m.mrr;
            out.ndcg5 += m.ndcg5;
            out.ndcg10 += m.ndcg10;
            ++out.used_rank;
        } else {
            ++out.skipped_no_positive;
        }
    }
    if (out.used_auc > 0) out.auc /= out.used_auc;
    if (out.used_rank > 0) {
        out.mrr /= out.used_rank;
        out.ndcg5 /= out.used_rank;
        out.ndcg10 /= out.used_rank;
    }
    return out;
}

double EvalReport::mean(double EvalResult::* metric) const {
    if (runs.empty()) return 0.0;
    double s = 0.0;
    for (const EvalResult& r : runs) s += r.*metric;
    return s / static_cast<double>(runs.size());
}

double EvalReport::stddev(double EvalResult::* metric) const {
    if (runs.size() < 2) return 0.0;
    const double m = mean(metric);
    double acc = 0.0;
    for (const EvalResult& r : runs) acc += (r.*metric - m) * (r.*metric - m);
    return std::sqrt(acc / static_cast<double>(runs.size() - 1));
}

std::string EvalReport::to_lines() const {
    std::ostringstream os;
    os.precision(17);
    for (size_t i = 0; i < runs.size(); ++i) os << "run=" << i << " " << runs[i].to_line() << "\n";
    os << "summary runs=" << runs.size() << " auc_mean=" << mean(&EvalResult::auc)
       << " auc_std=" << stddev(&EvalResult::auc) << " mrr_mean=" << mean(&EvalResult::mrr)
       << " mrr_std=" << stddev(&EvalResult::mrr) << " ndcg5_mean=" << mean(&EvalResult::ndcg5)
       << " ndcg5_std=" << stddev(&EvalResult::ndcg5)
       << " ndcg10_mean=" << mean(&EvalResult::ndcg10)
       << " ndcg10_std=" << stddev(&EvalResult::ndcg10) << "\n";
    return os.str();
}

ParamCount count_params(const ModelConfig& cfg) {
    cfg.validate();
    ParamCount c;
    const int64_t d = cfg.d_model;
    c.embeddings = static_cast<int64_t>(cfg.vocab_size) * d +
                   static_cast<int64_t>(cfg.max_seq_len()) * d;
    const int64_t per_block = 4 * (d * d + d)             // q, k, v, o projections
                              + 2 * d                     // first layer norm
                              + d * cfg.d_ff + cfg.d_ff   // ffn in
                              + cfg.d_ff * d + d          // ffn out
                              + 2 * d;                    // second layer norm
    c.encoder_layers = per_block * cfg.n_layers;
    c.news_head = 2 * d                                              // closing norm
                  + d * cfg.query_dim + cfg.query_dim + cfg.query_dim  // pooling
                  + d * cfg.news_dim + cfg.news_dim;                 // output dense
    c.user_encoder = static_cast<int64_t>(cfg.news_dim) * cfg.query_dim + cfg.query_dim +
                     cfg.query_dim;
    c.total = c.embeddings + c.encoder_layers + c.news_head + c.user_encoder;
    return c;
}

std::vector<TokenSeq> make_bench_batch(const ModelConfig& cfg, int n_news, uint64_t seed) {
    RandomSource rng(seed);
    std::vector<TokenSeq> batch;
    batch.reserve(static_cast<size_t>(n_news));
    for (int i = 0; i < n_news; ++i) {
        TokenSeq s;
        s.len = cfg.max_title_len;
        for (int t = 0; t < cfg.max_title_len; ++t)
            s.ids.push_back(1 + static_cast<int>(rng.uniform_int(cfg.vocab_size - 1)));
        batch.push_back(std::move(s));
    }
    return batch;
}

std::string BenchReport::to_line() const {
    std::ostringstream os;
    os << "layers=" << n_layers << " params_total=" << params_total
       << " params_encoder=" << params_encoder_layers << " news_per_sec=" << news_per_second
       << " speedup_vs_ref=" << speedup_vs_ref;
    return os.str();
}

BenchReport bench_throughput(const ModelConfig& cfg, const std::vector<TokenSeq>& news,
                             const BenchOptions& opt) {
    if (opt.window_seconds <= 0.0)
        throw std::invalid_argument("bench_throughput: window duration must be positive");
    if (opt.windows < 5)
        throw std::invalid_argument("bench_throughput: need at least five timed windows");
    if (news.empty()) throw std::invalid_argument("bench_throughput: empty news batch");
    if (opt.threads < 1) throw std::invalid_argument("bench_throughput: threads must be >= 1");

    RandomSource rng(opt.seed);
    const NewsEncoderParams params = NewsEncoderParams::init(cfg, rng);

    using Clock = std::chrono::steady_clock;
    auto encode_all = [&]() {
        if (opt.threads == 1) {
            NoGradGuard ng;
            for (const TokenSeq& s : news) {
                volatile double sink = encode_news(params, s).values()[0];
                (void)sink;
            }
        } else {
            std::vector<std::thread> pool;
            const size_t chunk = (news.size() + static_cast<size_t>(opt.threads) - 1) /
                                 static_cast<size_t>(opt.threads);
            for (int t = 0; t < opt.threads; ++t) {
                const size_t lo = static_cast<size_t>(t) * chunk;
                const size_t hi = std::min(news.size(), lo + chunk);
                if (lo >= hi) break;
                pool.emplace_back([&, lo, hi]() {
                    NoGradGuard ng;
                    for (size_t i = lo; i < hi; ++i) {
                        volatile double sink = encode_news(params, news[i]).values()[0];
                        (void)sink;
                    }
                });
            }
            for (auto& th : pool) th.join();
        }
    };

    const auto warm_end = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                             std::chrono::duration<double>(opt.warmup_seconds));
    do {
        encode_all();
    } while (Clock::now() < warm_end);

    std::vector<double> rates;
    for (int w = 0; w < opt.windows; ++w) {
        const auto t0 = Clock::now();
        int64_t encoded = 0;
        double elapsed = 0.0;
        do {
            encode_all();
            encoded += static_cast<int64_t>(news.size());
            elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
        } while (elapsed < opt.window_seconds);
        rates.push_back(static_cast<double>(encoded) / elapsed);
    }
    std::sort(rates.begin(), rates.end());
    const double median = rates.size() % 2 == 1
                              ? rates[rates.size() / 2]
                              : 0.5 * (rates[rates.size() / 2 - 1] + rates[rates.size() / 2]);

    const ParamCount pc = count_params(cfg);
    BenchReport rep;
    rep.n_layers = cfg.n_layers;
    rep.params_total = pc.total;
    rep.params_encoder_layers = pc.encoder_layers;
    rep.news_per_second = median;
    return rep;
}

std::vector<BenchReport> bench_layer_sweep(ModelConfig base, std::vector<int> layer_counts,
                                           const BenchOptions& opt) {
    if (layer_counts.empty()) throw std::invalid_argument("bench_layer_sweep: no layer counts");
    const auto batch = make_bench_batch(base, opt.n_news, opt.seed);
    std::vector<BenchReport> reports;
    int deepest = layer_counts[0];
    for (int n : layer_counts) deepest = std::max(deepest, n);
    double ref_rate = 0.0;
    for (int n : layer_counts) {
        ModelConfig cfg = base;
        cfg.n_layers = n;
        BenchReport rep = bench_throughput(cfg, batch, opt);
        if (n == deepest) ref_rate = rep.news_per_second;
        reports.push_back(rep);
    }
    for (BenchReport& rep : reports)
        rep.speedup_vs_ref = ref_rate > 0.0 ? rep.news_per_second / ref_rate : 0.0;
    return reports;
}

std::string bench_table(const std::vector<BenchReport>& reports) {
    std::ostringstream os;
    os << "layers  params_total  params_encoder  news_per_sec  speedup_vs_ref\n";
    for (const BenchReport& r : reports) {
        os << r.n_layers << "  " << r.params_total << "  " << r.params_encoder_layers << "  ";
        os.precision(6);
        os << r.news_per_second << "  " << r.speedup_vs_ref << "\n";
    }
    return os.str();
}

}  // namespace tinyrec
