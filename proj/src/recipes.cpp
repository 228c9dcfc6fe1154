#include "tinyrec/recipes.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tinyrec/eval.hpp"

namespace tinyrec {

namespace {

uint64_t derived_seed(uint64_t base, uint64_t stream) {
    return RandomSource(base).derive(stream).next_u64();
}

struct CellStats {
    std::vector<EvalResult> runs;

    void add(const EvalResult& r) { runs.push_back(r); }
};

RecipeRow to_row(const std::string& label, uint64_t config_hash, const CellStats& cell) {
    EvalReport rep;
    for (const EvalResult& r : cell.runs) rep.add(r);
    RecipeRow row;
    row.label = label;
    row.config_hash = config_hash;
    row.runs = static_cast<int>(cell.runs.size());
    row.auc_mean = rep.mean(&EvalResult::auc);
    row.auc_std = rep.stddev(&EvalResult::auc);
    row.mrr_mean = rep.mean(&EvalResult::mrr);
    row.mrr_std = rep.stddev(&EvalResult::mrr);
    row.ndcg5_mean = rep.mean(&EvalResult::ndcg5);
    row.ndcg5_std = rep.stddev(&EvalResult::ndcg5);
    row.ndcg10_mean = rep.mean(&EvalResult::ndcg10);
    row.ndcg10_std = rep.stddev(&EvalResult::ndcg10);
    return row;
}

std::string rows_table(const std::string& name, const std::vector<RecipeRow>& rows) {
    std::ostringstream os;
    os << "recipe " << name << "\n";
    os << "label\truns\tauc\tmrr\tndcg5\tndcg10\tconfig_hash\n";
    os.precision(5);
    os << std::fixed;
    for (const RecipeRow& r : rows) {
        os << r.label << "\t" << r.runs << "\t" << r.auc_mean << "±" << r.auc_std << "\t"
           << r.mrr_mean << "±" << r.mrr_std << "\t" << r.ndcg5_mean << "±" << r.ndcg5_std << "\t"
           << r.ndcg10_mean << "±" << r.ndcg10_std << "\t" << std::hex << r.config_hash << std::dec
           << "\n";
    }
    return os.str();
}

struct RecipeContext {
    PipelineConfig base;
    SynthData data;
    NewsTable table;
    MatchCorpus corpus;

    explicit RecipeContext(const PipelineConfig& cfg)
        : base(cfg),
          data(generate_synthetic_corpus(cfg.synth_spec(), Tokenizer(cfg.vocab_size),
                                         cfg.max_title_len, cfg.max_body_len)),
          table(data.articles),
          corpus(match_corpus_from_articles(data.articles)) {}

    PipelineConfig seeded(int seed_index) const {
        PipelineConfig cfg = base;
        cfg.seed = derived_seed(base.seed, 7000 + static_cast<uint64_t>(seed_index));
        return cfg;
    }

    EvalResult eval_model(const RecModel& model) const {
        return evaluate(model, data.eval, table, base.eval_threads);
    }
};

std::vector<RecModel> first_teachers(const std::vector<RecModel>& teachers, int m) {
    return {teachers.begin(), teachers.begin() + m};
}

}  // namespace

PipelineArtifacts train_pipeline_artifacts(const PipelineConfig& cfg, const MatchCorpus& corpus,
                                           const NewsTable& table,
                                           const std::vector<Impression>& train) {
    PipelineArtifacts art;
    PosttrainResult pt = run_posttrain(cfg, corpus);
    art.posttrained = std::move(pt.encoder);
    Stage1Result s1 = run_stage1(cfg, art.posttrained, corpus);
    art.stage1_student = std::move(s1.student);
    EnsembleResult ens = run_teacher_ensemble(cfg, art.posttrained, table, train);
    art.teachers = std::move(ens.teachers);
    art.teacher_val_auc = std::move(ens.val_auc);
    return art;
}

std::vector<std::string> recipe_names() {
    return {"teacher-count-sweep", "stage-ablation", "beta-sweep",
            "loss-ablation",       "layer-sweep",    "efficiency"};
}

RecipeResult run_recipe(const std::string& name, const PipelineConfig& base, int n_seeds) {
    base.validate();
    if (n_seeds < 1) throw std::invalid_argument("run_recipe: need at least one seed");
    const auto names = recipe_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        std::string list;
        for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
        throw std::invalid_argument("run_recipe: unknown recipe '" + name + "'; available: " + list);
    }

    RecipeResult result;
    result.name = name;

    if (name == "efficiency") {
        BenchOptions opt;
        opt.n_news = 64;
        opt.window_seconds = 0.4;
        ModelConfig bench_cfg = base.teacher_model();
        auto reports = bench_layer_sweep(bench_cfg, {1, 2, 4, 12}, opt);
        result.table = "recipe efficiency\n" + bench_table(reports);
        return result;
    }

    RecipeContext ctx(base);

    if (name == "teacher-count-sweep") {
        std::vector<CellStats> cells(4);
        for (int s = 0; s < n_seeds; ++s) {
            PipelineConfig cfg = ctx.seeded(s);
            cfg.num_teachers = 4;
            auto art = train_pipeline_artifacts(cfg, ctx.corpus, ctx.table, ctx.data.train);
            for (int m = 1; m <= 4; ++m) {
                Stage2Result st = run_stage2(cfg, first_teachers(art.teachers, m),
                                             &art.stage1_student, ctx.table, ctx.data.train);
                cells[static_cast<size_t>(m - 1)].add(ctx.eval_model(st.student));
            }
        }
        for (int m = 1; m <= 4; ++m) {
            PipelineConfig cfg = ctx.base;
            cfg.num_teachers = m;
            result.rows.push_back(to_row("M=" + std::to_string(m), cfg.hash(),
                                         cells[static_cast<size_t>(m - 1)]));
        }
    } else if (name == "stage-ablation") {
        std::vector<CellStats> cells(4);
        const std::vector<std::string> labels{"both-stages", "stage1-only", "stage2-only",
                                              "neither"};
        for (int s = 0; s < n_seeds; ++s) {
            PipelineConfig cfg = ctx.seeded(s);
            auto art = train_pipeline_artifacts(cfg, ctx.corpus, ctx.table, ctx.data.train);
            Stage2Result full = run_stage2(cfg, art.teachers, &art.stage1_student, ctx.table,
                                           ctx.data.train);
            cells[0].add(ctx.eval_model(full.student));
            FinetuneResult s1_only =
                run_finetune(cfg, cfg.student_model(), &art.stage1_student, "stage1", ctx.table,
                             ctx.data.train, derived_seed(cfg.seed, 300));
            cells[1].add(ctx.eval_model(s1_only.model));
            Stage2Result s2_only = run_stage2(cfg, art.teachers, nullptr, ctx.table, ctx.data.train);
            cells[2].add(ctx.eval_model(s2_only.student));
            FinetuneResult neither = run_finetune(cfg, cfg.student_model(), nullptr, "", ctx.table,
                                                  ctx.data.train, derived_seed(cfg.seed, 300));
            cells[3].add(ctx.eval_model(neither.model));
        }
        for (size_t i = 0; i < labels.size(); ++i)
            result.rows.push_back(to_row(labels[i], ctx.base.hash(), cells[i]));
    } else if (name == "beta-sweep") {
        const std::vector<double> beta2_values{0.0, 0.05, 0.1, 0.15, 0.3};
        const std::vector<double> beta1_values{0.7, 1.0, 1.3};
        std::vector<CellStats> cells(beta2_values.size() + beta1_values.size());
        for (int s = 0; s < n_seeds; ++s) {
            PipelineConfig cfg = ctx.seeded(s);
            // beta2 axis at beta1 = 1
            cfg.beta1 = 1.0;
            auto art = train_pipeline_artifacts(cfg, ctx.corpus, ctx.table, ctx.data.train);
            for (size_t i = 0; i < beta2_values.size(); ++i) {
                PipelineConfig cell = cfg;
                cell.beta2 = beta2_values[i];
                Stage2Result st = run_stage2(cell, art.teachers, &art.stage1_student, ctx.table,
                                             ctx.data.train);
                cells[i].add(ctx.eval_model(st.student));
            }
            // beta1 axis at beta2 = 0.1; stage 1 depends on beta1
            for (size_t i = 0; i < beta1_values.size(); ++i) {
                PipelineConfig cell = cfg;
                cell.beta1 = beta1_values[i];
                cell.beta2 = 0.1;
                Stage1Result s1 = run_stage1(cell, art.posttrained, ctx.corpus);
                Stage2Result st = run_stage2(cell, art.teachers, &s1.student, ctx.table,
                                             ctx.data.train);
                cells[beta2_values.size() + i].add(ctx.eval_model(st.student));
            }
        }
        for (size_t i = 0; i < beta2_values.size(); ++i) {
            PipelineConfig cell = ctx.base;
            cell.beta2 = beta2_values[i];
            std::ostringstream label;
            label << "beta2=" << beta2_values[i];
            result.rows.push_back(to_row(label.str(), cell.hash(), cells[i]));
        }
        for (size_t i = 0; i < beta1_values.size(); ++i) {
            PipelineConfig cell = ctx.base;
            cell.beta1 = beta1_values[i];
            cell.beta2 = 0.1;
            std::ostringstream label;
            label << "beta1=" << beta1_values[i];
            result.rows.push_back(
                to_row(label.str(), cell.hash(), cells[beta2_values.size() + i]));
        }
    } else if (name == "loss-ablation") {
        const std::vector<std::string> labels{"full", "no-distill", "no-emb", "no-target"};
        std::vector<CellStats> cells(labels.size());
        for (int s = 0; s < n_seeds; ++s) {
            PipelineConfig cfg = ctx.seeded(s);
            auto art = train_pipeline_artifacts(cfg, ctx.corpus, ctx.table, ctx.data.train);
            for (size_t i = 0; i < labels.size(); ++i) {
                PipelineConfig cell = cfg;
                if (labels[i] == "no-distill") cell.stage2_distill_weight = 0.0;
                if (labels[i] == "no-emb") cell.stage2_emb_weight = 0.0;
                if (labels[i] == "no-target") cell.beta2 = 0.0;
                Stage2Result st = run_stage2(cell, art.teachers, &art.stage1_student, ctx.table,
                                             ctx.data.train);
                cells[i].add(ctx.eval_model(st.student));
            }
        }
        for (size_t i = 0; i < labels.size(); ++i) {
            PipelineConfig cell = ctx.base;
            if (labels[i] == "no-distill") cell.stage2_distill_weight = 0.0;
            if (labels[i] == "no-emb") cell.stage2_emb_weight = 0.0;
            if (labels[i] == "no-target") cell.beta2 = 0.0;
            result.rows.push_back(to_row(labels[i], cell.hash(), cells[i]));
        }
    } else if (name == "layer-sweep") {
        const std::vector<int> depths{1, 2, 4};
        std::vector<CellStats> cells(depths.size() * 2);
        for (int s = 0; s < n_seeds; ++s) {
            PipelineConfig cfg = ctx.seeded(s);
            for (size_t d = 0; d < depths.size(); ++d) {
                PipelineConfig cell = cfg;
                cell.student_layers = depths[d];
                auto art = train_pipeline_artifacts(cell, ctx.corpus, ctx.table, ctx.data.train);
                Stage2Result st = run_stage2(cell, art.teachers, &art.stage1_student, ctx.table,
                                             ctx.data.train);
                cells[d].add(ctx.eval_model(st.student));
                FinetuneResult direct =
                    run_finetune(cell, cell.student_model(), nullptr, "", ctx.table,
                                 ctx.data.train, derived_seed(cell.seed, 300));
                cells[depths.size() + d].add(ctx.eval_model(direct.model));
            }
        }
        for (size_t d = 0; d < depths.size(); ++d) {
            PipelineConfig cell = ctx.base;
            cell.student_layers = depths[d];
            result.rows.push_back(
                to_row("tiny-newsrec-" + std::to_string(depths[d]), cell.hash(), cells[d]));
        }
        for (size_t d = 0; d < depths.size(); ++d) {
            PipelineConfig cell = ctx.base;
            cell.student_layers = depths[d];
            result.rows.push_back(to_row("direct-finetune-" + std::to_string(depths[d]),
                                         cell.hash(), cells[depths.size() + d]));
        }
    }

    result.table = rows_table(name, result.rows);
    return result;
}

}  // namespace tinyrec
