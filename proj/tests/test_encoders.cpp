#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "grad_check.hpp"
#include "tinyrec/encoders.hpp"

using namespace tinyrec;

namespace {

ModelConfig micro_config(int n_layers = 1) {
    ModelConfig cfg;
    cfg.vocab_size = 50;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.n_layers = n_layers;
    cfg.max_title_len = 6;
    cfg.max_body_len = 8;
    cfg.news_dim = 8;
    cfg.query_dim = 6;
    cfg.history_len = 4;
    return cfg;
}

TokenSeq seq(std::vector<int> ids) {
    TokenSeq s;
    s.len = static_cast<int>(ids.size());
    s.ids = std::move(ids);
    return s;
}

int64_t total_params(const std::vector<NamedTensor>& named) {
    int64_t n = 0;
    for (const auto& nt : named) n += nt.tensor.size();
    return n;
}

}  // namespace

TEST_CASE("encode_news: deterministic and padding-insensitive") {
    RandomSource rng(1);
    auto params = NewsEncoderParams::init(micro_config(2), rng);

    auto a = encode_news(params, seq({3, 9, 17}));
    auto b = encode_news(params, seq({3, 9, 17}));
    for (int i = 0; i < a.dim(0); ++i) CHECK(a.values()[i] == b.values()[i]);

    TokenSeq padded;
    padded.ids = {3, 9, 17, 0, 0, 0};
    padded.len = 3;
    auto c = encode_news(params, padded);
    for (int i = 0; i < a.dim(0); ++i)
        CHECK(std::abs(a.values()[i] - c.values()[i]) <= 1e-9);
}

TEST_CASE("encode_news: rejects out-of-vocab tokens and empty sequences") {
    RandomSource rng(2);
    auto params = NewsEncoderParams::init(micro_config(), rng);
    CHECK_THROWS_AS(encode_news(params, seq({1, 50})), std::out_of_range);
    CHECK_THROWS_AS(encode_news(params, seq({})), std::invalid_argument);
    CHECK_THROWS_AS(encode_news(params, seq({1, 2, 3, 4, 5, 6, 7, 8, 9})), std::invalid_argument);
}

TEST_CASE("encode_news: gradient of squared norm passes finite differences for every parameter") {
    RandomSource rng(3);
    auto params = NewsEncoderParams::init(micro_config(1), rng);
    const TokenSeq tokens = seq({4, 31, 7, 0});

    auto named = params.named_params();
    std::vector<Tensor> inputs;
    for (const auto& nt : named) inputs.push_back(nt.tensor);
    auto f = [&params, &tokens](const std::vector<Tensor>&) {
        auto h = encode_news(params, tokens);
        return dot(h, h);
    };
    gradcheck::Options opt;
    opt.max_coords_per_input = 6;
    auto rep = gradcheck::check(f, inputs, opt);
    INFO(rep.worst << " max_rel_err=" << rep.max_rel_err);
    CHECK(rep.ok);
}

TEST_CASE("encode_user: single unmasked item passes through exactly") {
    RandomSource rng(4);
    auto user = UserEncoderParams::init(8, 6, rng);
    auto h = Tensor::randn({8}, rng);
    auto enc = encode_user_attn(user, {h}, {1});
    for (int i = 0; i < 8; ++i) CHECK(enc.repr.values()[i] == h.values()[i]);
    CHECK(enc.weights.values()[0] == 1.0);
}

TEST_CASE("encode_user: duplicated history item matches the single-item output") {
    RandomSource rng(5);
    auto user = UserEncoderParams::init(8, 6, rng);
    auto h = Tensor::randn({8}, rng);
    auto one = encode_user(user, {h}, {1});
    auto two = encode_user(user, {h, h}, {1, 1});
    for (int i = 0; i < 8; ++i)
        CHECK(std::abs(one.values()[i] - two.values()[i]) <= 1e-12);
}

TEST_CASE("encode_user: attention weights form a simplex over unmasked slots") {
    RandomSource rng(6);
    auto user = UserEncoderParams::init(8, 6, rng);
    std::vector<Tensor> hist{Tensor::randn({8}, rng), Tensor::randn({8}, rng),
                             Tensor::randn({8}, rng), Tensor::zeros({8})};
    auto enc = encode_user_attn(user, hist, {1, 1, 1, 0});
    double s = 0.0;
    for (double w : enc.weights.values()) s += w;
    CHECK(std::abs(s - 1.0) <= 1e-12);
    CHECK(enc.weights.values()[3] == 0.0);  // masked slot gets exactly zero
}

TEST_CASE("encode_user: all-masked history returns the zero vector") {
    RandomSource rng(7);
    auto user = UserEncoderParams::init(8, 6, rng);
    auto enc = encode_user(user, {Tensor::randn({8}, rng)}, {0});
    for (double v : enc.values()) CHECK(v == 0.0);
    auto empty = encode_user(user, {}, {});
    for (double v : empty.values()) CHECK(v == 0.0);
}

TEST_CASE("encode_user: permuting history permutes weights and preserves the output") {
    RandomSource rng(8);
    auto user = UserEncoderParams::init(8, 6, rng);
    auto a = Tensor::randn({8}, rng);
    auto b = Tensor::randn({8}, rng);
    auto c = Tensor::randn({8}, rng);
    auto ab = encode_user_attn(user, {a, b, c}, {1, 1, 1});
    auto ba = encode_user_attn(user, {b, a, c}, {1, 1, 1});
    CHECK(std::abs(ab.weights.values()[0] - ba.weights.values()[1]) <= 1e-12);
    CHECK(std::abs(ab.weights.values()[1] - ba.weights.values()[0]) <= 1e-12);
    CHECK(std::abs(ab.weights.values()[2] - ba.weights.values()[2]) <= 1e-12);
    for (int i = 0; i < 8; ++i)
        CHECK(std::abs(ab.repr.values()[i] - ba.repr.values()[i]) <= 1e-9);
}

TEST_CASE("score_click: dot-product cases") {
    auto e0 = Tensor::from({3}, {1.0, 0.0, 0.0});
    CHECK(score_click(e0, e0).item() == 1.0);
    auto e1 = Tensor::from({3}, {0.0, 1.0, 0.0});
    CHECK(score_click(e0, e1).item() == 0.0);
    CHECK(score_click(Tensor::from({2}, {1.0, 2.0}), Tensor::from({2}, {3.0, -1.0})).item() == 1.0);
}

TEST_CASE("a 4-layer student has fewer parameters than a 12-layer teacher") {
    RandomSource rng(9);
    auto cfg = micro_config(4);
    auto student = NewsEncoderParams::init(cfg, rng);
    cfg.n_layers = 12;
    auto teacher = NewsEncoderParams::init(cfg, rng);
    CHECK(total_params(student.named_params()) < total_params(teacher.named_params()));
}

TEST_CASE("full model gradient passes finite differences on a two-sample batch") {
    RandomSource rng(10);
    auto model = RecModel::init(micro_config(1), rng);

    struct Sample {
        std::vector<TokenSeq> history;
        std::vector<TokenSeq> candidates;
        int label_pos;
    };
    const std::vector<Sample> batch{
        {{seq({3, 4}), seq({9, 2, 11})}, {seq({5, 6}), seq({8}), seq({13, 1})}, 0},
        {{seq({21, 7, 7})}, {seq({30, 31}), seq({40, 2}), seq({17})}, 2},
    };

    auto forward = [&]() {
        std::vector<Tensor> logits_rows, targets_rows;
        for (const auto& s : batch) {
            std::vector<Tensor> hist;
            std::vector<char> mask;
            for (const auto& t : s.history) {
                hist.push_back(encode_news(model.news, t));
                mask.push_back(1);
            }
            Tensor u = encode_user(model.user, hist, mask);
            std::vector<Tensor> scores;
            for (const auto& t : s.candidates)
                scores.push_back(score_click(encode_news(model.news, t), u));
            logits_rows.push_back(concat(scores, 0));
            std::vector<double> onehot(s.candidates.size(), 0.0);
            onehot[static_cast<size_t>(s.label_pos)] = 1.0;
            targets_rows.push_back(Tensor::from({static_cast<int>(onehot.size())}, onehot));
        }
        return cross_entropy(stack_rows(targets_rows), stack_rows(logits_rows));
    };

    auto named = model.named_params();
    std::vector<Tensor> inputs;
    for (const auto& nt : named) inputs.push_back(nt.tensor);
    gradcheck::Options opt;
    opt.max_coords_per_input = 5;
    auto rep = gradcheck::check([&](const std::vector<Tensor>&) { return forward(); }, inputs, opt);
    INFO(rep.worst << " max_rel_err=" << rep.max_rel_err);
    CHECK(rep.ok);
}

TEST_CASE("news encoder checkpoints round-trip bitwise") {
    RandomSource rng(11);
    auto params = NewsEncoderParams::init(micro_config(2), rng);
    params.stage = "posttrained";
    const auto dir = std::filesystem::temp_directory_path() / "tinyrec_enc_ckpt";
    std::filesystem::create_directories(dir);
    const std::string stem = (dir / "enc").string();
    save_news_encoder(stem, params);
    auto loaded = load_news_encoder(stem);
    CHECK(loaded.stage == "posttrained");
    CHECK(loaded.cfg.n_layers == 2);
    auto a = params.named_params();
    auto b = loaded.named_params();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].tensor.size() == b[i].tensor.size());
        for (int64_t j = 0; j < a[i].tensor.size(); ++j)
            CHECK(a[i].tensor.values()[static_cast<size_t>(j)] ==
                  b[i].tensor.values()[static_cast<size_t>(j)]);
    }
    std::filesystem::remove_all(dir);
}
