#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tinyrec/config.hpp"
#include "tinyrec/data.hpp"
#include "tinyrec/distill.hpp"
#include "tinyrec/eval.hpp"
#include "tinyrec/posttrain.hpp"

namespace tinyrec {

// One line-delimited training record: "phase=... kind=... step=... k=v ...".
// Values serialize at full precision so logs can be checked numerically.
struct LogRecord {
    std::string phase;
    std::string kind;  // "step" or "epoch"
    int64_t step = -1;
    int epoch = -1;
    std::vector<std::pair<std::string, double>> values;

    void put(const std::string& key, double v) { values.emplace_back(key, v); }
    double get(const std::string& key) const;
    bool has(const std::string& key) const;
    std::string to_line() const;
    static LogRecord parse_line(const std::string& line);
};

class TrainLog {
public:
    explicit TrainLog(std::string phase) : phase_(std::move(phase)) {}

    // When set, records append to this file as they arrive.
    void set_sink(const std::string& path);
    void append(LogRecord rec);
    const std::vector<LogRecord>& records() const { return records_; }
    std::vector<LogRecord> steps() const;
    std::vector<LogRecord> epochs() const;
    const std::string& phase() const { return phase_; }

    static std::vector<LogRecord> read_file(const std::string& path);

private:
    std::string phase_;
    std::string sink_;
    std::vector<LogRecord> records_;
};

// Deterministic hold-out split of training impressions (default 20%).
std::pair<std::vector<Impression>, std::vector<Impression>> split_validation(
    const std::vector<Impression>& impressions, double val_fraction, RandomSource& rng);

// ---- phase 1: domain-specific post-training ----
struct PosttrainResult {
    NewsEncoderParams encoder;  // tagged "posttrained"
    TrainLog log{"posttrain"};
    std::vector<double> epoch_loss;
    std::vector<double> epoch_accuracy;  // matching accuracy at N negatives
    double final_accuracy = 0.0;
};
PosttrainResult run_posttrain(const PipelineConfig& cfg, const MatchCorpus& corpus,
                              const std::string& log_path = "");

// ---- phase 2: stage-1 distillation on the matching task ----
struct Stage1Result {
    NewsEncoderParams student;  // tagged "stage1"
    TrainLog log{"stage1"};
    double initial_accuracy = 0.0;
    double final_accuracy = 0.0;
};
Stage1Result run_stage1(const PipelineConfig& cfg, const NewsEncoderParams& teacher,
                        const MatchCorpus& corpus, const std::string& log_path = "");

// ---- phase 3: recommendation finetuning (teachers and baselines) ----
struct FinetuneResult {
    RecModel model;  // tagged "finetuned"
    TrainLog log{"finetune"};
    double best_val_auc = 0.0;
};
// Shared trainer for every recommendation finetune. With `warm_start` set,
// the transformer stack and embeddings copy the given encoder and the
// pooling/output heads are redrawn from the run seed; otherwise everything
// initializes from the run seed. `init_stage` constrains warm_start's tag
// ("posttrained" for teachers, "stage1" for the distilled student, "" = any).
FinetuneResult run_finetune(const PipelineConfig& cfg, const ModelConfig& model_cfg,
                            const NewsEncoderParams* warm_start, const std::string& init_stage,
                            const NewsTable& table, const std::vector<Impression>& train,
                            uint64_t run_seed, const std::string& log_path = "");

struct EnsembleResult {
    std::vector<RecModel> teachers;  // tagged "finetuned"
    std::vector<double> val_auc;
};
// Finetunes the post-trained encoder M times with distinct derived seeds.
EnsembleResult run_teacher_ensemble(const PipelineConfig& cfg,
                                    const NewsEncoderParams& posttrained, const NewsTable& table,
                                    const std::vector<Impression>& train,
                                    const std::string& log_dir = "");

// ---- phase 4: stage-2 multi-teacher distillation ----
struct Stage2Result {
    RecModel student;  // tagged "stage2"
    TrainLog log{"stage2"};
    double best_val_auc = 0.0;
    double final_omega = 0.0;
    std::vector<double> mean_teacher_weights;  // final-epoch mean per teacher
};
// stage1_student == nullptr skips the stage-1 warm start (stage ablation).
Stage2Result run_stage2(const PipelineConfig& cfg, const std::vector<RecModel>& teachers,
                        const NewsEncoderParams* stage1_student, const NewsTable& table,
                        const std::vector<Impression>& train, const std::string& log_path = "");

// Forward pass for one recommendation sample.
struct SampleForward {
    Tensor logits;      // [K+1]
    Tensor news_reprs;  // [history+K+1, news_dim] (only when requested)
    Tensor user_repr;   // [news_dim]
};
SampleForward rec_forward(const RecModel& model, const NewsTable& table, const RecSample& sample,
                          bool want_reprs);

}  // namespace tinyrec
