#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tinyrec/eval.hpp"

using namespace tinyrec;

// ---------------------------------------------------------------------------
// Brute-force oracles, independent of the library implementations: AUC by
// explicit pairwise counting, MRR/nDCG by explicit rank enumeration.
// ---------------------------------------------------------------------------

namespace oracle {

double auc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j])
                wins += 1.0;
            else if (s[i] == s[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// 1-based rank under descending scores with ties broken by input order
int rank_of(const std::vector<double>& s, size_t i) {
    int r = 1;
    for (size_t j = 0; j < s.size(); ++j) {
        if (s[j] > s[i]) ++r;
        else if (s[j] == s[i] && j < i) ++r;
    }
    return r;
}

double mrr(const std::vector<double>& s, const std::vector<int>& y) {
    double sum = 0.0;
    int n_pos = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        sum += 1.0 / rank_of(s, i);
        ++n_pos;
    }
    return sum / n_pos;
}

double ndcg(const std::vector<double>& s, const std::vector<int>& y, int k) {
    double dcg = 0.0;
    int n_pos = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        ++n_pos;
        const int r = rank_of(s, i);
        if (r <= k) dcg += 1.0 / std::log2(r + 1.0);
    }
    double idcg = 0.0;
    for (int r = 1; r <= std::min<int>(k, n_pos); ++r) idcg += 1.0 / std::log2(r + 1.0);
    return dcg / idcg;
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// frozen examples (values computed with the oracles above)
// ---------------------------------------------------------------------------

TEST_CASE("auc: separable, tied, and mixed cases") {
    CHECK(auc_score(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
    CHECK(auc_score(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1}) == 0.5);
    // positives at 0.4 and 0.5 both rank below the 0.6 negative
    const std::vector<double> s{0.4, 0.6, 0.5};
    const std::vector<int> y{1, 0, 1};
    CHECK(oracle::auc(s, y) == 0.0);
    CHECK(auc_score(s, y) == 0.0);
}

TEST_CASE("auc: single-class input is an error for the caller to handle") {
    CHECK_THROWS_AS(auc_score(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}),
                    std::invalid_argument);
    CHECK_THROWS_AS(auc_score(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}),
                    std::invalid_argument);
}

TEST_CASE("mrr: positives at ranks 1, 2, and {1,3}") {
    CHECK(mrr_score(std::vector<double>{0.9, 0.2, 0.1}, std::vector<int>{1, 0, 0}) == 1.0);
    CHECK(mrr_score(std::vector<double>{0.2, 0.9, 0.1}, std::vector<int>{1, 0, 0}) == 0.5);
    const std::vector<double> s{0.9, 0.5, 0.7};
    const std::vector<int> y{1, 1, 0};
    CHECK(mrr_score(s, y) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(oracle::mrr(s, y) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("ndcg: first place, second place, and below the cutoff") {
    CHECK(ndcg_at_k(std::vector<double>{0.9, 0.1, 0.2}, std::vector<int>{1, 0, 0}, 5) == 1.0);
    CHECK(ndcg_at_k(std::vector<double>{0.5, 0.9, 0.1}, std::vector<int>{1, 0, 0}, 5) ==
          doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-15));
    std::vector<double> s{0.1, 0.9, 0.8, 0.7, 0.6, 0.5};
    std::vector<int> y{1, 0, 0, 0, 0, 0};
    CHECK(ndcg_at_k(s, y, 5) == 0.0);
}

TEST_CASE("metrics match brute-force oracles on randomized impressions") {
    RandomSource rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(9));  // <= 10 candidates
        std::vector<double> scores;
        std::vector<int> labels;
        bool pos = false, neg = false;
        for (int i = 0; i < n; ++i) {
            // quantized scores so ties actually occur
            scores.push_back(std::round(rng.uniform() * 4.0) / 4.0);
            labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
            pos = pos || labels.back() == 1;
            neg = neg || labels.back() == 0;
        }
        if (!pos) labels[0] = 1;
        if (!neg) labels[static_cast<size_t>(n - 1)] = 0;

        CHECK(std::abs(auc_score(scores, labels) - oracle::auc(scores, labels)) <= 1e-12);
        CHECK(std::abs(mrr_score(scores, labels) - oracle::mrr(scores, labels)) <= 1e-12);
        CHECK(std::abs(ndcg_at_k(scores, labels, 5) - oracle::ndcg(scores, labels, 5)) <= 1e-12);
        CHECK(std::abs(ndcg_at_k(scores, labels, 10) - oracle::ndcg(scores, labels, 10)) <= 1e-12);
    }
}

TEST_CASE("metrics are invariant under strictly monotone score transforms") {
    RandomSource rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform_int(7));
        std::vector<double> scores;
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) {
            scores.push_back(std::round(rng.uniform() * 3.0) / 3.0);
            labels.push_back(i % 2);
        }
        std::vector<double> affine(scores), expd(scores);
        for (double& v : affine) v = 2.0 * v + 1.0;
        for (double& v : expd) v = std::exp(v);
        for (const auto* t : {&affine, &expd}) {
            CHECK(std::abs(auc_score(scores, labels) - auc_score(*t, labels)) <= 1e-12);
            CHECK(std::abs(mrr_score(scores, labels) - mrr_score(*t, labels)) <= 1e-12);
            CHECK(std::abs(ndcg_at_k(scores, labels, 5) - ndcg_at_k(*t, labels, 5)) <= 1e-12);
            CHECK(std::abs(ndcg_at_k(scores, labels, 10) - ndcg_at_k(*t, labels, 10)) <= 1e-12);
        }
    }
}

TEST_CASE("perfect oracle scores reach 1.0 on tie-free impressions") {
    const std::vector<double> scores{1.0, 0.0, 1.0, 0.0};
    const std::vector<int> labels{1, 0, 1, 0};
    CHECK(auc_score(scores, labels) == 1.0);
    CHECK(mrr_score(scores, labels) == doctest::Approx(0.75));  // ranks 1 and 2
    CHECK(ndcg_at_k(scores, labels, 5) == 1.0);
}

// ---------------------------------------------------------------------------
// evaluate()
// ---------------------------------------------------------------------------

namespace {

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.vocab_size = 512;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.n_layers = 1;
    cfg.max_title_len = 8;
    cfg.max_body_len = 16;
    cfg.news_dim = 8;
    cfg.query_dim = 6;
    cfg.history_len = 5;
    return cfg;
}

SynthData tiny_synth(uint64_t seed = 3) {
    Tokenizer tok(512);
    SynthSpec spec;
    spec.n_articles = 50;
    spec.n_topics = 3;
    spec.words_per_topic = 20;
    spec.content_words = 8;
    spec.title_tokens = 4;
    spec.body_tokens = 12;
    spec.n_users = 10;
    spec.n_train_impressions = 5;
    spec.n_eval_impressions = 40;
    spec.n_candidates = 6;
    spec.history_min = 2;
    spec.history_max = 4;
    spec.seed = seed;
    return generate_synthetic_corpus(spec, tok, 8, 16);
}

}  // namespace

TEST_CASE("evaluate: deterministic, order-independent, and thread-count independent") {
    RandomSource rng(5);
    auto model = RecModel::init(micro_config(), rng);
    auto data = tiny_synth();
    NewsTable table(data.articles);

    auto r1 = evaluate(model, data.eval, table, 1);
    auto r2 = evaluate(model, data.eval, table, 1);
    CHECK(r1.auc == r2.auc);
    CHECK(r1.mrr == r2.mrr);

    auto r4 = evaluate(model, data.eval, table, 4);
    CHECK(r1.auc == r4.auc);
    CHECK(r1.ndcg10 == r4.ndcg10);

    auto shuffled = data.eval;
    std::reverse(shuffled.begin(), shuffled.end());
    auto rs = evaluate(model, shuffled, table, 1);
    CHECK(std::abs(r1.auc - rs.auc) <= 1e-12);
    CHECK(std::abs(r1.ndcg5 - rs.ndcg5) <= 1e-12);
    CHECK(r1.used_auc == rs.used_auc);
}

TEST_CASE("evaluate: unknown news id is an error") {
    RandomSource rng(6);
    auto model = RecModel::init(micro_config(), rng);
    auto data = tiny_synth();
    NewsTable table(data.articles);
    Impression bad;
    bad.impression_id = "x";
    bad.candidates = {{"UNKNOWN", 1}, {"N0", 0}};
    CHECK_THROWS_AS(evaluate(model, {bad}, table, 1), std::runtime_error);
}

TEST_CASE("evaluate: single-class impressions are skipped and counted") {
    RandomSource rng(7);
    auto model = RecModel::init(micro_config(), rng);
    auto data = tiny_synth();
    NewsTable table(data.articles);
    Impression all_neg;
    all_neg.impression_id = "x";
    all_neg.history = {"N0"};
    all_neg.candidates = {{"N1", 0}, {"N2", 0}};
    auto imps = data.eval;
    imps.push_back(all_neg);
    auto r = evaluate(model, imps, table, 1);
    CHECK(r.skipped_single_class == 1);
    CHECK(r.skipped_no_positive == 1);
    CHECK(r.used_auc == static_cast<int>(data.eval.size()));
}

TEST_CASE("EvalReport: mean and standard deviation across runs") {
    EvalReport rep;
    EvalResult a, b;
    a.auc = 0.7;
    b.auc = 0.8;
    rep.add(a);
    rep.add(b);
    CHECK(rep.mean(&EvalResult::auc) == doctest::Approx(0.75));
    CHECK(rep.stddev(&EvalResult::auc) ==
          doctest::Approx(std::sqrt(0.005 / 1.0)).epsilon(1e-12));
    CHECK(rep.to_lines().find("auc_mean=") != std::string::npos);
}

// ---------------------------------------------------------------------------
// parameter counting and throughput
// ---------------------------------------------------------------------------

TEST_CASE("count_params matches the instantiated model exactly") {
    auto cfg = micro_config();
    cfg.n_layers = 3;
    RandomSource rng(8);
    auto model = RecModel::init(cfg, rng);
    int64_t actual = 0;
    for (const auto& nt : model.named_params()) actual += nt.tensor.size();
    const auto counted = count_params(cfg);
    CHECK(counted.total == actual);
    CHECK(counted.embeddings ==
          static_cast<int64_t>(cfg.vocab_size) * cfg.d_model +
              static_cast<int64_t>(cfg.max_seq_len()) * cfg.d_model);
}

TEST_CASE("count_params: embedding-only configuration follows the closed form") {
    auto cfg = micro_config();
    cfg.n_layers = 0;
    const auto counted = count_params(cfg);
    CHECK(counted.encoder_layers == 0);
    CHECK(counted.embeddings == static_cast<int64_t>(cfg.vocab_size) * cfg.d_model +
                                    static_cast<int64_t>(cfg.max_seq_len()) * cfg.d_model);
    CHECK(counted.total == counted.embeddings + counted.news_head + counted.user_encoder);
}

TEST_CASE("count_params: 4-layer encoder stack is a third of the 12-layer stack") {
    auto cfg = micro_config();
    cfg.n_layers = 4;
    const auto student = count_params(cfg);
    cfg.n_layers = 12;
    const auto teacher = count_params(cfg);
    CHECK(student.total < teacher.total);
    const double ratio = static_cast<double>(student.encoder_layers) /
                         static_cast<double>(teacher.encoder_layers);
    CHECK(ratio <= 0.5);
    CHECK(ratio == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("bench_throughput: validation and depth ordering") {
    auto cfg = micro_config();
    BenchOptions opt;
    opt.n_news = 8;
    opt.window_seconds = 0.02;
    opt.warmup_seconds = 0.01;
    auto batch = make_bench_batch(cfg, opt.n_news, opt.seed);

    BenchOptions bad = opt;
    bad.window_seconds = 0.0;
    CHECK_THROWS_AS(bench_throughput(cfg, batch, bad), std::invalid_argument);
    bad = opt;
    bad.windows = 3;
    CHECK_THROWS_AS(bench_throughput(cfg, batch, bad), std::invalid_argument);

    auto reports = bench_layer_sweep(cfg, {1, 4}, opt);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].news_per_second > reports[1].news_per_second);
    CHECK(reports[1].speedup_vs_ref == 1.0);
    CHECK(reports[0].speedup_vs_ref > 1.0);
    CHECK(bench_table(reports).find("news_per_sec") != std::string::npos);
}
