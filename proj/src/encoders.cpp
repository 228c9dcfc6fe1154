#include "tinyrec/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace tinyrec {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kMaskedScore = -1e30;

Tensor weight(Shape shape, RandomSource& rng) { return Tensor::randn(std::move(shape), rng, kInitStd, true); }
Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(Shape shape) {
    auto t = Tensor::full(std::move(shape), 1.0);
    t.set_requires_grad(true);
    return t;
}

Tensor clone_param(const Tensor& t) {
    auto c = Tensor::from(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
    if (t.requires_grad()) c.set_requires_grad(true);
    return c;
}

int meta_int(const CheckpointData& ckpt, const std::string& key) {
    const std::string* v = ckpt.find_meta(key);
    if (!v) throw std::runtime_error("checkpoint missing meta key '" + key + "'");
    return std::stoi(*v);
}

}  // namespace

// ===================== ModelConfig =====================

void ModelConfig::validate() const {
    if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocab_size must be >= 2");
    if (d_model <= 0 || n_heads <= 0 || d_ff <= 0 || n_layers < 0)
        throw std::invalid_argument("ModelConfig: dims must be positive");
    if (d_model % n_heads != 0)
        throw std::invalid_argument("ModelConfig: n_heads must divide d_model");
    if (max_title_len <= 0 || max_body_len <= 0 || news_dim <= 0 || query_dim <= 0 || history_len <= 0)
        throw std::invalid_argument("ModelConfig: lengths must be positive");
}

bool ModelConfig::same_dims(const ModelConfig& o) const {
    return vocab_size == o.vocab_size && d_model == o.d_model && n_heads == o.n_heads &&
           d_ff == o.d_ff && max_title_len == o.max_title_len && max_body_len == o.max_body_len &&
           news_dim == o.news_dim && query_dim == o.query_dim && history_len == o.history_len;
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_meta() const {
    return {
        {"vocab_size", std::to_string(vocab_size)},
        {"d_model", std::to_string(d_model)},
        {"n_heads", std::to_string(n_heads)},
        {"d_ff", std::to_string(d_ff)},
        {"n_layers", std::to_string(n_layers)},
        {"max_title_len", std::to_string(max_title_len)},
        {"max_body_len", std::to_string(max_body_len)},
        {"news_dim", std::to_string(news_dim)},
        {"query_dim", std::to_string(query_dim)},
        {"history_len", std::to_string(history_len)},
    };
}

ModelConfig ModelConfig::from_meta(const CheckpointData& ckpt) {
    ModelConfig cfg;
    cfg.vocab_size = meta_int(ckpt, "vocab_size");
    cfg.d_model = meta_int(ckpt, "d_model");
    cfg.n_heads = meta_int(ckpt, "n_heads");
    cfg.d_ff = meta_int(ckpt, "d_ff");
    cfg.n_layers = meta_int(ckpt, "n_layers");
    cfg.max_title_len = meta_int(ckpt, "max_title_len");
    cfg.max_body_len = meta_int(ckpt, "max_body_len");
    cfg.news_dim = meta_int(ckpt, "news_dim");
    cfg.query_dim = meta_int(ckpt, "query_dim");
    cfg.history_len = meta_int(ckpt, "history_len");
    cfg.validate();
    return cfg;
}

// ===================== parameter sets =====================

NewsEncoderParams NewsEncoderParams::init(const ModelConfig& cfg, RandomSource& rng) {
    cfg.validate();
    NewsEncoderParams p;
    p.cfg = cfg;
    const int d = cfg.d_model;
    p.tok_emb = weight({cfg.vocab_size, d}, rng);
    p.pos_emb = weight({cfg.max_seq_len(), d}, rng);
    // projections feeding the residual stream shrink with depth so deep
    // stacks train from random init at a shared learning rate
    const double resid_std =
        kInitStd / std::sqrt(std::max(1.0, 2.0 * static_cast<double>(cfg.n_layers)));
    p.blocks.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& b : p.blocks) {
        b.wq = weight({d, d}, rng);
        b.bq = zeros_param({d});
        b.wk = weight({d, d}, rng);
        b.bk = zeros_param({d});
        b.wv = weight({d, d}, rng);
        b.bv = zeros_param({d});
        b.wo = Tensor::randn({d, d}, rng, resid_std, true);
        b.bo = zeros_param({d});
        b.ln1_g = ones_param({d});
        b.ln1_b = zeros_param({d});
        b.ffn_w1 = weight({d, cfg.d_ff}, rng);
        b.ffn_b1 = zeros_param({cfg.d_ff});
        b.ffn_w2 = Tensor::randn({cfg.d_ff, d}, rng, resid_std, true);
        b.ffn_b2 = zeros_param({d});
        b.ln2_g = ones_param({d});
        b.ln2_b = zeros_param({d});
    }
    p.final_g = ones_param({d});
    p.final_b = zeros_param({d});
    p.pool_w = weight({d, cfg.query_dim}, rng);
    p.pool_b = zeros_param({cfg.query_dim});
    p.pool_q = weight({cfg.query_dim}, rng);
    p.out_w = weight({d, cfg.news_dim}, rng);
    p.out_b = zeros_param({cfg.news_dim});
    return p;
}

void NewsEncoderParams::reinit_head(RandomSource& rng) {
    pool_w = weight({cfg.d_model, cfg.query_dim}, rng);
    pool_b = zeros_param({cfg.query_dim});
    pool_q = weight({cfg.query_dim}, rng);
    out_w = weight({cfg.d_model, cfg.news_dim}, rng);
    out_b = zeros_param({cfg.news_dim});
}

std::vector<NamedTensor> NewsEncoderParams::named_params() const {
    std::vector<NamedTensor> out;
    out.push_back({"news.tok_emb", tok_emb});
    out.push_back({"news.pos_emb", pos_emb});
    for (size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        const std::string base = "news.block" + std::to_string(i) + ".";
        out.push_back({base + "wq", b.wq});
        out.push_back({base + "bq", b.bq});
        out.push_back({base + "wk", b.wk});
        out.push_back({base + "bk", b.bk});
        out.push_back({base + "wv", b.wv});
        out.push_back({base + "bv", b.bv});
        out.push_back({base + "wo", b.wo});
        out.push_back({base + "bo", b.bo});
        out.push_back({base + "ln1_g", b.ln1_g});
        out.push_back({base + "ln1_b", b.ln1_b});
        out.push_back({base + "ffn_w1", b.ffn_w1});
        out.push_back({base + "ffn_b1", b.ffn_b1});
        out.push_back({base + "ffn_w2", b.ffn_w2});
        out.push_back({base + "ffn_b2", b.ffn_b2});
        out.push_back({base + "ln2_g", b.ln2_g});
        out.push_back({base + "ln2_b", b.ln2_b});
    }
    out.push_back({"news.final_g", final_g});
    out.push_back({"news.final_b", final_b});
    out.push_back({"news.pool_w", pool_w});
    out.push_back({"news.pool_b", pool_b});
    out.push_back({"news.pool_q", pool_q});
    out.push_back({"news.out_w", out_w});
    out.push_back({"news.out_b", out_b});
    return out;
}

std::vector<Tensor> NewsEncoderParams::trainable_params(int freeze_below) const {
    std::vector<Tensor> out;
    if (freeze_below <= 0) {
        out.push_back(tok_emb);
        out.push_back(pos_emb);
    }
    for (size_t i = 0; i < blocks.size(); ++i) {
        if (static_cast<int>(i) < freeze_below) continue;
        const auto& b = blocks[i];
        for (const Tensor& t : {b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo, b.ln1_g, b.ln1_b,
                                b.ffn_w1, b.ffn_b1, b.ffn_w2, b.ffn_b2, b.ln2_g, b.ln2_b})
            out.push_back(t);
    }
    for (const Tensor& t : {final_g, final_b, pool_w, pool_b, pool_q, out_w, out_b})
        out.push_back(t);
    return out;
}

NewsEncoderParams NewsEncoderParams::clone() const {
    NewsEncoderParams p;
    p.cfg = cfg;
    p.stage = stage;
    p.tok_emb = clone_param(tok_emb);
    p.pos_emb = clone_param(pos_emb);
    p.blocks.reserve(blocks.size());
    for (const auto& b : blocks)
        p.blocks.push_back({clone_param(b.wq), clone_param(b.bq), clone_param(b.wk),
                            clone_param(b.bk), clone_param(b.wv), clone_param(b.bv),
                            clone_param(b.wo), clone_param(b.bo), clone_param(b.ln1_g),
                            clone_param(b.ln1_b), clone_param(b.ffn_w1), clone_param(b.ffn_b1),
                            clone_param(b.ffn_w2), clone_param(b.ffn_b2), clone_param(b.ln2_g),
                            clone_param(b.ln2_b)});
    p.final_g = clone_param(final_g);
    p.final_b = clone_param(final_b);
    p.pool_w = clone_param(pool_w);
    p.pool_b = clone_param(pool_b);
    p.pool_q = clone_param(pool_q);
    p.out_w = clone_param(out_w);
    p.out_b = clone_param(out_b);
    return p;
}

UserEncoderParams UserEncoderParams::init(int news_dim, int query_dim, RandomSource& rng) {
    UserEncoderParams p;
    p.news_dim = news_dim;
    p.query_dim = query_dim;
    p.pool_w = weight({news_dim, query_dim}, rng);
    p.pool_b = zeros_param({query_dim});
    p.pool_q = weight({query_dim}, rng);
    return p;
}

std::vector<NamedTensor> UserEncoderParams::named_params() const {
    return {{"user.pool_w", pool_w}, {"user.pool_b", pool_b}, {"user.pool_q", pool_q}};
}

std::vector<Tensor> UserEncoderParams::trainable_params() const {
    return {pool_w, pool_b, pool_q};
}

UserEncoderParams UserEncoderParams::clone() const {
    UserEncoderParams p;
    p.news_dim = news_dim;
    p.query_dim = query_dim;
    p.pool_w = clone_param(pool_w);
    p.pool_b = clone_param(pool_b);
    p.pool_q = clone_param(pool_q);
    return p;
}

RecModel RecModel::init(const ModelConfig& cfg, RandomSource& rng) {
    RecModel m;
    m.news = NewsEncoderParams::init(cfg, rng);
    m.user = UserEncoderParams::init(cfg.news_dim, cfg.query_dim, rng);
    return m;
}

std::vector<NamedTensor> RecModel::named_params() const {
    auto out = news.named_params();
    for (auto& nt : user.named_params()) out.push_back(std::move(nt));
    return out;
}

std::vector<Tensor> RecModel::trainable_params(int freeze_below) const {
    auto out = news.trainable_params(freeze_below);
    for (auto& t : user.trainable_params()) out.push_back(std::move(t));
    return out;
}

RecModel RecModel::clone() const {
    RecModel m;
    m.news = news.clone();
    m.user = user.clone();
    return m;
}

// ===================== forward passes =====================

namespace {

// Additive attention pooling over the rows of x, with -1e30 masking.
Tensor pooled_rows(const Tensor& x, const Tensor& key_mask, const Tensor& w, const Tensor& b,
                   const Tensor& q) {
    const int rows = x.dim(0);
    Tensor scores = matmul(tanh(add_bias(matmul(x, w), b)), reshape(q, {q.dim(0), 1}));
    Tensor alpha = softmax(add(reshape(scores, {rows}), key_mask), 0);
    return reshape(matmul(reshape(alpha, {1, rows}), x), {x.dim(1)});
}

}  // namespace

Tensor encode_news(const NewsEncoderParams& params, const TokenSeq& tokens) {
    const ModelConfig& cfg = params.cfg;
    const int t = tokens.padded_len();
    if (t == 0 || tokens.len < 1 || tokens.len > t)
        throw std::invalid_argument("encode_news: sequence must contain at least one real token");
    if (t > cfg.max_seq_len())
        throw std::invalid_argument("encode_news: sequence of length " + std::to_string(t) +
                                    " exceeds max positions " + std::to_string(cfg.max_seq_len()));

    std::vector<double> maskv(static_cast<size_t>(t), 0.0);
    for (int i = tokens.len; i < t; ++i) maskv[static_cast<size_t>(i)] = kMaskedScore;
    Tensor key_mask = Tensor::from({t}, std::move(maskv));

    Tensor x = add(embedding(params.tok_emb, tokens.ids), slice(params.pos_emb, 0, 0, t));
    const int dh = cfg.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    // pre-norm blocks: trainable from random init at 12 layers without warmup
    for (const auto& blk : params.blocks) {
        Tensor xn = layer_norm(x, blk.ln1_g, blk.ln1_b);
        Tensor q = add_bias(matmul(xn, blk.wq), blk.bq);
        Tensor k = add_bias(matmul(xn, blk.wk), blk.bk);
        Tensor v = add_bias(matmul(xn, blk.wv), blk.bv);
        std::vector<Tensor> heads;
        heads.reserve(static_cast<size_t>(cfg.n_heads));
        for (int h = 0; h < cfg.n_heads; ++h) {
            Tensor qh = slice(q, 1, h * dh, dh);
            Tensor kh = slice(k, 1, h * dh, dh);
            Tensor vh = slice(v, 1, h * dh, dh);
            Tensor s = add_bias(scale(matmul(qh, transpose(kh)), inv_sqrt_dh), key_mask);
            heads.push_back(matmul(softmax(s, 1), vh));
        }
        x = add(x, add_bias(matmul(concat(heads, 1), blk.wo), blk.bo));
        Tensor fn = layer_norm(x, blk.ln2_g, blk.ln2_b);
        Tensor hidden = gelu(add_bias(matmul(fn, blk.ffn_w1), blk.ffn_b1));
        x = add(x, add_bias(matmul(hidden, blk.ffn_w2), blk.ffn_b2));
    }
    x = layer_norm(x, params.final_g, params.final_b);
    Tensor pooled = pooled_rows(x, key_mask, params.pool_w, params.pool_b, params.pool_q);
    Tensor out = add_bias(matmul(reshape(pooled, {1, cfg.d_model}), params.out_w), params.out_b);
    return reshape(out, {cfg.news_dim});
}

UserEncoding encode_user_attn(const UserEncoderParams& params, const std::vector<Tensor>& history,
                              const std::vector<char>& mask) {
    if (history.size() != mask.size())
        throw std::invalid_argument("encode_user: history and mask length differ");
    const int slots = static_cast<int>(history.size());
    int real = 0;
    for (char m : mask) real += m ? 1 : 0;
    if (slots == 0 || real == 0) {
        // cold-start user: all candidates score zero
        return {Tensor::zeros({params.news_dim}), Tensor::zeros({slots > 0 ? slots : 1})};
    }
    for (const Tensor& h : history)
        if (h.rank() != 1 || h.dim(0) != params.news_dim)
            throw std::invalid_argument("encode_user: history item has wrong dimension");

    std::vector<double> maskv(static_cast<size_t>(slots), 0.0);
    for (int i = 0; i < slots; ++i)
        if (!mask[static_cast<size_t>(i)]) maskv[static_cast<size_t>(i)] = kMaskedScore;
    Tensor key_mask = Tensor::from({slots}, std::move(maskv));

    Tensor h = stack_rows(history);
    Tensor scores = matmul(tanh(add_bias(matmul(h, params.pool_w), params.pool_b)),
                           reshape(params.pool_q, {params.query_dim, 1}));
    Tensor alpha = softmax(add(reshape(scores, {slots}), key_mask), 0);
    Tensor repr = reshape(matmul(reshape(alpha, {1, slots}), h), {params.news_dim});
    return {repr, alpha};
}

Tensor encode_user(const UserEncoderParams& params, const std::vector<Tensor>& history,
                   const std::vector<char>& mask) {
    return encode_user_attn(params, history, mask).repr;
}

Tensor score_click(const Tensor& news_repr, const Tensor& user_repr) {
    return dot(news_repr, user_repr);
}

// ===================== checkpoint glue =====================

namespace {

void copy_from_checkpoint(const CheckpointData& ckpt, std::vector<NamedTensor> dst,
                          const std::string& stem) {
    size_t matched = 0;
    for (auto& nt : dst) {
        const Tensor* src = ckpt.find_tensor(nt.name);
        if (!src) throw std::runtime_error("checkpoint " + stem + " missing tensor " + nt.name);
        if (src->shape() != nt.tensor.shape())
            throw std::runtime_error("checkpoint " + stem + " tensor " + nt.name + " has shape " +
                                     shape_str(src->shape()) + ", expected " +
                                     shape_str(nt.tensor.shape()));
        auto out = nt.tensor.values_mut();
        auto in = src->values();
        std::copy(in.begin(), in.end(), out.begin());
        ++matched;
    }
    if (matched != ckpt.tensors.size())
        throw std::runtime_error("checkpoint " + stem + " contains unexpected extra tensors");
}

}  // namespace

void save_news_encoder(const std::string& stem, const NewsEncoderParams& params) {
    auto meta = params.cfg.to_meta();
    meta.emplace_back("kind", "news_encoder");
    meta.emplace_back("stage", params.stage);
    save_checkpoint(stem, params.named_params(), meta);
}

NewsEncoderParams load_news_encoder(const std::string& stem) {
    CheckpointData ckpt = load_checkpoint(stem);
    ModelConfig cfg = ModelConfig::from_meta(ckpt);
    RandomSource dummy(0);
    NewsEncoderParams params = NewsEncoderParams::init(cfg, dummy);
    copy_from_checkpoint(ckpt, params.named_params(), stem);
    if (const std::string* stage = ckpt.find_meta("stage")) params.stage = *stage;
    return params;
}

void save_rec_model(const std::string& stem, const RecModel& model, const std::string& stage) {
    auto meta = model.news.cfg.to_meta();
    meta.emplace_back("kind", "rec_model");
    meta.emplace_back("stage", stage);
    save_checkpoint(stem, model.named_params(), meta);
}

RecModel load_rec_model(const std::string& stem) {
    CheckpointData ckpt = load_checkpoint(stem);
    ModelConfig cfg = ModelConfig::from_meta(ckpt);
    RandomSource dummy(0);
    RecModel model = RecModel::init(cfg, dummy);
    copy_from_checkpoint(ckpt, model.named_params(), stem);
    if (const std::string* stage = ckpt.find_meta("stage")) model.news.stage = *stage;
    return model;
}

}  // namespace tinyrec
