#pragma once

#include <span>
#include <string>
#include <vector>

#include "tinyrec/data.hpp"
#include "tinyrec/encoders.hpp"

namespace tinyrec {

// Probability that a random positive outranks a random negative; tied pairs
// count one half. Computed from tie-averaged ranks (Mann-Whitney).
// Requires at least one positive and one negative.
double auc_score(std::span<const double> scores, std::span<const int> labels);

// Mean over positives of 1/rank under descending scores (MIND convention).
double mrr_score(std::span<const double> scores, std::span<const int> labels);

// Binary-gain nDCG with 1/log2(rank+1) discounts, truncated at k.
double ndcg_at_k(std::span<const double> scores, std::span<const int> labels, int k);

struct EvalResult {
    double auc = 0.0, mrr = 0.0, ndcg5 = 0.0, ndcg10 = 0.0;
    int total = 0;                  // impressions seen
    int used_auc = 0;               // impressions entering the AUC mean
    int used_rank = 0;              // impressions entering MRR / nDCG
    int skipped_single_class = 0;   // no positives or no negatives
    int skipped_no_positive = 0;

    std::string to_line() const;
};

// Scores every impression with one cached news representation per unique id.
// Impressions may be sharded across threads; the per-impression results are
// reduced in index order, so the outcome is independent of thread count.
EvalResult evaluate(const RecModel& model, const std::vector<Impression>& impressions,
                    const NewsTable& table, int threads = 1);

// Mean and standard deviation across repeated runs (seeds).
struct EvalReport {
    std::vector<EvalResult> runs;

    void add(const EvalResult& r) { runs.push_back(r); }
    double mean(double EvalResult::* metric) const;
    double stddev(double EvalResult::* metric) const;
    std::string to_lines() const;
};

struct ParamCount {
    int64_t total = 0;
    int64_t embeddings = 0;      // token + positional tables
    int64_t encoder_layers = 0;  // transformer blocks only
    int64_t news_head = 0;       // attention pooling + output dense
    int64_t user_encoder = 0;
};

// Exact learnable-scalar counts derived from the configuration.
ParamCount count_params(const ModelConfig& cfg);

struct BenchOptions {
    int n_news = 256;
    double window_seconds = 0.5;
    int windows = 5;         // median over at least five windows
    double warmup_seconds = 0.25;
    int threads = 1;
    uint64_t seed = 1234;
};

struct BenchReport {
    int n_layers = 0;
    int64_t params_total = 0;
    int64_t params_encoder_layers = 0;
    double news_per_second = 0.0;
    double speedup_vs_ref = 1.0;  // reference = deepest configuration in a sweep

    std::string to_line() const;
};

// Identical tokenized inputs must be used across configs in a sweep.
std::vector<TokenSeq> make_bench_batch(const ModelConfig& cfg, int n_news, uint64_t seed);

BenchReport bench_throughput(const ModelConfig& cfg, const std::vector<TokenSeq>& news,
                             const BenchOptions& opt);

// Benchmarks the same dims at several depths; speedups are relative to the
// deepest entry. Prints params, news/sec, and speedup per row.
std::vector<BenchReport> bench_layer_sweep(ModelConfig base, std::vector<int> layer_counts,
                                           const BenchOptions& opt);
std::string bench_table(const std::vector<BenchReport>& reports);

}  // namespace tinyrec
