#pragma once

#include <string>
#include <vector>

#include "tinyrec/trainer.hpp"

namespace tinyrec {

// Per-seed artifacts shared across experiment arms: one post-trained teacher,
// one stage-1 student, and M finetuned teachers.
struct PipelineArtifacts {
    NewsEncoderParams posttrained;
    NewsEncoderParams stage1_student;
    std::vector<RecModel> teachers;
    std::vector<double> teacher_val_auc;
};

PipelineArtifacts train_pipeline_artifacts(const PipelineConfig& cfg, const MatchCorpus& corpus,
                                           const NewsTable& table,
                                           const std::vector<Impression>& train);

struct RecipeRow {
    std::string label;
    uint64_t config_hash = 0;
    int runs = 0;
    double auc_mean = 0.0, auc_std = 0.0;
    double mrr_mean = 0.0, mrr_std = 0.0;
    double ndcg5_mean = 0.0, ndcg5_std = 0.0;
    double ndcg10_mean = 0.0, ndcg10_std = 0.0;
};

struct RecipeResult {
    std::string name;
    std::vector<RecipeRow> rows;  // empty for the efficiency recipe
    std::string table;            // printable result, always filled
};

std::vector<std::string> recipe_names();

// Runs one named experiment end to end on a synthetic dataset generated from
// the base config. Orderable metric cells report mean and std over n_seeds.
RecipeResult run_recipe(const std::string& name, const PipelineConfig& base, int n_seeds = 3);

}  // namespace tinyrec
