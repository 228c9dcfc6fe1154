#pragma once

#include <string>
#include <vector>

#include "tinyrec/checkpoint.hpp"
#include "tinyrec/rng.hpp"
#include "tinyrec/tensor.hpp"
#include "tinyrec/tokenizer.hpp"

namespace tinyrec {

struct ModelConfig {
    int vocab_size = 30000;
    int d_model = 128;
    int n_heads = 4;
    int d_ff = 256;
    int n_layers = 12;
    int max_title_len = 30;
    int max_body_len = 512;
    int news_dim = 256;
    int query_dim = 200;
    int history_len = 50;  // L

    int max_seq_len() const { return max_title_len > max_body_len ? max_title_len : max_body_len; }
    int head_dim() const { return d_model / n_heads; }
    void validate() const;
    bool same_dims(const ModelConfig& other) const;  // everything except n_layers

    std::vector<std::pair<std::string, std::string>> to_meta() const;
    static ModelConfig from_meta(const CheckpointData& ckpt);
};

struct TransformerBlockParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor ln2_g, ln2_b;
};

// Transformer token encoder with additive-attention pooling and a linear
// output layer producing the news representation.
struct NewsEncoderParams {
    ModelConfig cfg;
    std::string stage = "init";  // init / posttrained / stage1 / finetuned / stage2

    Tensor tok_emb;  // [vocab, d_model]
    Tensor pos_emb;  // [max_seq_len, d_model]
    std::vector<TransformerBlockParams> blocks;
    Tensor final_g, final_b;        // closing layer norm of the pre-norm stack
    Tensor pool_w, pool_b, pool_q;  // d_model->query_dim projection + query vector
    Tensor out_w, out_b;            // d_model->news_dim

    static NewsEncoderParams init(const ModelConfig& cfg, RandomSource& rng);
    // Redraws the pooling head and output dense layer; the transformer stack
    // and embeddings keep their weights. Used when finetuning from a
    // post-trained encoder with a new seed.
    void reinit_head(RandomSource& rng);

    std::vector<NamedTensor> named_params() const;
    // Parameters updated during training. freeze_below=k keeps the embeddings
    // and blocks [0, k) fixed, mirroring "finetune only the last layers".
    std::vector<Tensor> trainable_params(int freeze_below = 0) const;
    NewsEncoderParams clone() const;
};

// Additive attention over clicked-news representations.
struct UserEncoderParams {
    int news_dim = 256;
    int query_dim = 200;
    Tensor pool_w, pool_b, pool_q;

    static UserEncoderParams init(int news_dim, int query_dim, RandomSource& rng);
    std::vector<NamedTensor> named_params() const;
    std::vector<Tensor> trainable_params() const;
    UserEncoderParams clone() const;
};

struct RecModel {
    NewsEncoderParams news;
    UserEncoderParams user;

    static RecModel init(const ModelConfig& cfg, RandomSource& rng);
    std::vector<NamedTensor> named_params() const;
    std::vector<Tensor> trainable_params(int freeze_below = 0) const;
    RecModel clone() const;
};

// tokens: padded ids + real length; padding never receives attention weight.
Tensor encode_news(const NewsEncoderParams& params, const TokenSeq& tokens);

struct UserEncoding {
    Tensor repr;     // [news_dim]
    Tensor weights;  // [slots]; zero at masked slots
};

// history: one tensor per slot (padded slots may be zero tensors), mask[i]
// nonzero for real items. All-masked history yields the zero representation.
UserEncoding encode_user_attn(const UserEncoderParams& params, const std::vector<Tensor>& history,
                              const std::vector<char>& mask);
Tensor encode_user(const UserEncoderParams& params, const std::vector<Tensor>& history,
                   const std::vector<char>& mask);

// Click score is the dot product of the candidate and user representations.
Tensor score_click(const Tensor& news_repr, const Tensor& user_repr);

// checkpoint glue
void save_news_encoder(const std::string& stem, const NewsEncoderParams& params);
NewsEncoderParams load_news_encoder(const std::string& stem);
void save_rec_model(const std::string& stem, const RecModel& model, const std::string& stage);
RecModel load_rec_model(const std::string& stem);

}  // namespace tinyrec
