// tinyrec: news-recommendation pipeline driver.
//
// Subcommands cover the full workflow: synthesize data, post-train the
// teacher on title-body matching, distill stage 1, finetune the teacher
// ensemble, distill stage 2, train baselines, evaluate, benchmark, and run
// named experiment recipes.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tinyrec/config.hpp"
#include "tinyrec/eval.hpp"
#include "tinyrec/recipes.hpp"
#include "tinyrec/trainer.hpp"

namespace {

using namespace tinyrec;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "pipeline config file (key = value lines)");
    cmd->add_option("--set", args.overrides, "config overrides, key=value (repeatable)");
    cmd->add_option("--out", args.out_dir,
                    "output directory (default: $TINYREC_OUT_DIR, then the working directory)");
}

PipelineConfig load_config(const CommonArgs& args) {
    PipelineConfig cfg;
    if (!args.config_path.empty()) cfg = PipelineConfig::from_file(args.config_path);
    cfg.apply_overrides(args.overrides);
    cfg.validate();
    return cfg;
}

std::string out_dir(const CommonArgs& args) {
    std::string dir = args.out_dir;
    if (dir.empty()) {
        if (const char* env = std::getenv("TINYREC_OUT_DIR")) dir = env;
    }
    if (dir.empty()) dir = ".";
    std::filesystem::create_directories(dir);
    return dir;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << content;
}

std::vector<Impression> load_behaviors(const std::string& path) {
    return parse_mind_behaviors(path);
}

NewsTable load_news(const PipelineConfig& cfg, const std::string& path) {
    Tokenizer tok(cfg.vocab_size);
    return NewsTable(parse_mind_news(path, tok, cfg.max_title_len, cfg.max_body_len));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tinyrec: two-stage news-recommendation distillation pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string corpus_path, news_path, behaviors_path, model_path, teacher_path, student_path;
    std::vector<std::string> teacher_paths;
    std::string recipe_name;
    std::string layers_arg = "1,2,4,12";
    std::string model_kind = "student";
    std::string init_path, init_stage;
    bool no_stage1 = false;
    int seeds = 3;
    int bench_threads = 1;

    auto* synth = app.add_subcommand("synth-data", "generate a synthetic desk-scale dataset");
    add_common(synth, args);

    auto* posttrain = app.add_subcommand("posttrain", "domain-specific post-training (title-body matching)");
    add_common(posttrain, args);
    posttrain->add_option("--corpus", corpus_path, "title<TAB>body corpus file")->required();

    auto* stage1 = app.add_subcommand("distill-stage1", "stage-1 distillation on the matching task");
    add_common(stage1, args);
    stage1->add_option("--teacher", teacher_path, "post-trained teacher checkpoint stem")->required();
    stage1->add_option("--corpus", corpus_path, "title<TAB>body corpus file")->required();

    auto* teachers = app.add_subcommand("finetune-teachers", "finetune M teachers with distinct seeds");
    add_common(teachers, args);
    teachers->add_option("--init", init_path, "post-trained encoder checkpoint stem")->required();
    teachers->add_option("--news", news_path, "MIND news.tsv")->required();
    teachers->add_option("--behaviors", behaviors_path, "MIND behaviors.tsv")->required();

    auto* stage2 = app.add_subcommand("distill-stage2", "stage-2 multi-teacher distillation");
    add_common(stage2, args);
    stage2->add_option("--teachers", teacher_paths, "finetuned teacher checkpoint stems")->required();
    stage2->add_option("--student", student_path, "stage-1 student checkpoint stem");
    stage2->add_flag("--no-stage1", no_stage1, "start the student from scratch (stage ablation)");
    stage2->add_option("--news", news_path, "MIND news.tsv")->required();
    stage2->add_option("--behaviors", behaviors_path, "MIND behaviors.tsv")->required();

    auto* baseline = app.add_subcommand("finetune-baseline", "plain recommendation finetuning");
    add_common(baseline, args);
    baseline->add_option("--model", model_kind, "teacher or student dims")->check(CLI::IsMember({"teacher", "student"}));
    baseline->add_option("--init", init_path, "optional warm-start encoder checkpoint stem");
    baseline->add_option("--init-stage", init_stage, "required tag on the warm start (e.g. posttrained, stage1)");
    baseline->add_option("--news", news_path, "MIND news.tsv")->required();
    baseline->add_option("--behaviors", behaviors_path, "MIND behaviors.tsv")->required();

    auto* eval_cmd = app.add_subcommand("eval", "impression-grouped AUC / MRR / nDCG");
    add_common(eval_cmd, args);
    eval_cmd->add_option("--model", model_path, "model checkpoint stem")->required();
    eval_cmd->add_option("--news", news_path, "MIND news.tsv")->required();
    eval_cmd->add_option("--behaviors", behaviors_path, "MIND behaviors.tsv")->required();

    auto* bench = app.add_subcommand("bench", "news-encoding throughput across depths");
    add_common(bench, args);
    bench->add_option("--layers", layers_arg, "comma-separated layer counts (default 1,2,4,12)");
    bench->add_option("--threads", bench_threads, "encoding threads (default 1)");

    auto* recipe = app.add_subcommand("recipe", "run a named experiment recipe");
    add_common(recipe, args);
    recipe->add_option("--name", recipe_name, "recipe name")->required();
    recipe->add_option("--seeds", seeds, "seeds per cell (default 3)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            const PipelineConfig cfg = load_config(args);
            const std::string dir = out_dir(args);
            Tokenizer tok(cfg.vocab_size);
            SynthData data =
                generate_synthetic_corpus(cfg.synth_spec(), tok, cfg.max_title_len, cfg.max_body_len);
            write_mind_news(dir + "/news.tsv", data.articles);
            write_mind_behaviors(dir + "/behaviors.train.tsv", data.train);
            write_mind_behaviors(dir + "/behaviors.eval.tsv", data.eval);
            write_match_corpus(dir + "/corpus.tsv", data.articles);
            std::cout << "wrote " << data.articles.size() << " articles, " << data.train.size()
                      << " train and " << data.eval.size() << " eval impressions to " << dir
                      << "\n";
        } else if (posttrain->parsed()) {
            const PipelineConfig cfg = load_config(args);
            const std::string dir = out_dir(args);
            Tokenizer tok(cfg.vocab_size);
            MatchCorpus corpus = load_match_corpus(corpus_path, tok, cfg.max_title_len, cfg.max_body_len);
            PosttrainResult res = run_posttrain(cfg, corpus, dir + "/posttrain.log");
            save_news_encoder(dir + "/posttrained", res.encoder);
            std::cout << "posttrained teacher saved to " << dir << "/posttrained (matching accuracy "
                      << res.final_accuracy << ")\n";
        } else if (stage1->parsed()) {
            const PipelineConfig cfg = load_config(args);
            const std::string dir = out_dir(args);
            Tokenizer tok(cfg.vocab_size);
            MatchCorpus corpus = load_match_corpus(corpus_path, tok, cfg.max_title_len, cfg.max_body_len);
            NewsEncoderParams teacher = load_news_encoder(teacher_path);
            Stage1Result res = run_stage1(cfg, teacher, corpus, dir + "/stage1.log");
            save_news_encoder(dir + "/stage1", res.student);
            std::cout << "stage-1 student saved to " << dir << "/stage1 (matching accuracy "
                      << res.initial_accuracy << " -> " << res.final_accuracy << ")\n";
        } else if (teachers->parsed()) {
            const PipelineConfig cfg = load_config(args);
            const std::string dir = out_dir(args);
            NewsTable table = load_news(cfg, news_path);
            auto imps = load_behaviors(behaviors_path);
            NewsEncoderParams posttrained = load_news_encoder(init_path);
            EnsembleResult res = run_teacher_ensemble(cfg, posttrained, table, imps, dir);
            for (size_t i = 0; i < res.teachers.size(); ++i) {
                save_rec_model(dir + "/teacher" + std::to_string(i), res.teachers[i], "finetuned");
                std::cout << "teacher" << i << " val_auc=" << res.val_auc[i] << "\n";
            }
        } else if (stage2->parsed()) {
            const PipelineConfig cfg = load_config(args);
            const std::string dir = out_dir(args);
            NewsTable table = load_news(cfg, news_path);
            auto imps = load_behaviors(behaviors_path);
            std::vector<RecModel> ensemble;
            for (const std::string& stem : teacher_paths) ensemble.push_back(load_rec_model(stem));
            if (student_path.empty() && !no_stage1)
                throw std::runtime_error("distill-stage2: pass --student or --no-stage1");
            Stage2Result res;
            if (no_stage1) {
                res = run_stage2(cfg, ensemble, nullptr, table, imps, dir + "/stage2.log");
            } else {
                NewsEncoderParams student = load_news_encoder(student_path);
                res = run_stage2(cfg, ensemble, &student, table, imps, dir + "/stage2.log");
            }
            save_rec_model(dir + "/stage2", res.student, "stage2");
            std::cout << "stage-2 student saved to " << dir << "/stage2 (val_auc "
                      << res.best_val_auc << ", omega " << res.final_omega << ")\n";
        } else if (baseline->parsed()) {
            const PipelineConfig cfg = load_config(args);
            const std::string dir = out_dir(args);
            NewsTable table = load_news(cfg, news_path);
            auto imps = load_behaviors(behaviors_path);
            const ModelConfig model_cfg =
                model_kind == "teacher" ? cfg.teacher_model() : cfg.student_model();
            FinetuneResult res;
            if (init_path.empty()) {
                res = run_finetune(cfg, model_cfg, nullptr, "", table, imps, cfg.seed,
                                   dir + "/baseline.log");
            } else {
                NewsEncoderParams init = load_news_encoder(init_path);
                res = run_finetune(cfg, model_cfg, &init, init_stage, table, imps, cfg.seed,
                                   dir + "/baseline.log");
            }
            save_rec_model(dir + "/baseline", res.model, "finetuned");
            std::cout << "baseline saved to " << dir << "/baseline (val_auc " << res.best_val_auc
                      << ")\n";
        } else if (eval_cmd->parsed()) {
            const PipelineConfig cfg = load_config(args);
            const std::string dir = out_dir(args);
            NewsTable table = load_news(cfg, news_path);
            auto imps = load_behaviors(behaviors_path);
            RecModel model = load_rec_model(model_path);
            EvalResult res = evaluate(model, imps, table, cfg.eval_threads);
            std::cout << res.to_line() << "\n";
            write_text(dir + "/eval.txt", res.to_line() + "\n");
        } else if (bench->parsed()) {
            const PipelineConfig cfg = load_config(args);
            const std::string dir = out_dir(args);
            std::vector<int> counts;
            std::stringstream ss(layers_arg);
            std::string item;
            while (std::getline(ss, item, ',')) counts.push_back(std::stoi(item));
            BenchOptions opt;
            opt.n_news = 64;
            opt.window_seconds = 0.4;
            opt.threads = bench_threads;
            auto reports = bench_layer_sweep(cfg.teacher_model(), counts, opt);
            const std::string table = bench_table(reports);
            std::cout << table;
            write_text(dir + "/bench.txt", table);
        } else if (recipe->parsed()) {
            const PipelineConfig cfg = load_config(args);
            const std::string dir = out_dir(args);
            RecipeResult res = run_recipe(recipe_name, cfg, seeds);
            std::cout << res.table;
            write_text(dir + "/" + res.name + ".txt", res.table);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
