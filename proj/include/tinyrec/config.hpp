#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tinyrec/data.hpp"
#include "tinyrec/encoders.hpp"

namespace tinyrec {

// Every knob of the pipeline in one declarative struct. Defaults follow the
// reference hyper-parameter table (N=9, K=4, L=50, T1=T2=1, beta1=1,
// beta2=0.1, M=4, omega=1, batch 32, Adam (0.9, 0.999, 1e-8), post-train lr
// 1e-6, finetune lr 5e-5); desk-scale runs override via file or --set.
struct PipelineConfig {
    // model dims
    int vocab_size = 30000;
    int d_model = 128;
    int n_heads = 4;
    int d_ff = 256;
    int teacher_layers = 12;
    int student_layers = 4;
    int max_title_len = 30;
    int max_body_len = 512;
    int news_dim = 256;
    int query_dim = 200;
    int history_len = 50;  // L

    // optimizer
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    // domain-specific post-training
    int match_negatives = 9;  // N
    double posttrain_lr = 1e-6;
    int posttrain_epochs = 5;
    int posttrain_batch = 32;

    // stage-1 distillation (matching task)
    double stage1_lr = 1e-4;
    int stage1_epochs = 5;
    int stage1_batch = 32;
    double t1 = 1.0;
    double beta1 = 1.0;
    double stage1_distill_weight = 1.0;
    double stage1_emb_weight = 1.0;

    // recommendation finetuning
    int rec_negatives = 4;  // K
    double finetune_lr = 5e-5;
    int finetune_epochs = 3;
    int rec_batch = 32;

    // stage-2 multi-teacher distillation
    int num_teachers = 4;  // M
    double stage2_lr = 5e-5;
    int stage2_epochs = 3;
    double t2 = 1.0;
    double beta2 = 0.1;
    double omega_init = 1.0;
    double stage2_distill_weight = 1.0;
    double stage2_emb_weight = 1.0;
    std::string soft_label_combine = "logits";  // or "probs"

    // learning-rate schedule (fractions of the run; 0/1 = constant lr)
    double lr_warmup_frac = 0.0;
    double lr_final_frac = 1.0;

    // mechanics
    uint64_t seed = 17;
    int freeze_below = 0;
    double val_fraction = 0.2;
    int eval_threads = 1;
    int log_every = 10;

    // synthetic data
    int synth_articles = 2000;
    int synth_topics = 4;
    int synth_words_per_topic = 64;
    int synth_content_words = 10;
    int synth_title_tokens = 6;
    int synth_body_tokens = 48;
    int synth_users = 200;
    int synth_train_impressions = 2000;
    int synth_eval_impressions = 500;
    int synth_candidates = 10;
    int synth_history_min = 3;
    int synth_history_max = 12;
    double synth_click_noise = 0.1;

    ModelConfig teacher_model() const;
    ModelConfig student_model() const;
    SynthSpec synth_spec() const;
    void validate() const;

    // "key = value" lines, '#' comments; unknown keys are errors.
    static PipelineConfig from_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    void apply_overrides(const std::vector<std::string>& key_value_pairs);  // "k=v" items
    std::string canonical() const;  // every key, sorted, one per line
    uint64_t hash() const;          // FNV-1a over canonical()
    static std::vector<std::string> known_keys();
};

}  // namespace tinyrec
