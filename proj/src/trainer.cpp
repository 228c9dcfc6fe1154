#include "tinyrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "tinyrec/checkpoint.hpp"

namespace tinyrec {

// ===================== logging =====================

double LogRecord::get(const std::string& key) const {
    for (const auto& [k, v] : values)
        if (k == key) return v;
    throw std::out_of_range("LogRecord: no value named " + key);
}

bool LogRecord::has(const std::string& key) const {
    for (const auto& [k, v] : values)
        if (k == key) return true;
    return false;
}

std::string LogRecord::to_line() const {
    std::ostringstream os;
    os.precision(17);
    os << "phase=" << phase << " kind=" << kind;
    if (step >= 0) os << " step=" << step;
    if (epoch >= 0) os << " epoch=" << epoch;
    for (const auto& [k, v] : values) os << " " << k << "=" << v;
    return os.str();
}

LogRecord LogRecord::parse_line(const std::string& line) {
    LogRecord rec;
    std::istringstream is(line);
    std::string item;
    while (is >> item) {
        const size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("LogRecord: malformed item '" + item + "'");
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        if (key == "phase")
            rec.phase = value;
        else if (key == "kind")
            rec.kind = value;
        else if (key == "step")
            rec.step = std::stoll(value);
        else if (key == "epoch")
            rec.epoch = std::stoi(value);
        else
            rec.put(key, std::stod(value));
    }
    return rec;
}

void TrainLog::set_sink(const std::string& path) {
    sink_ = path;
    std::ofstream out(path, std::ios::trunc);  // start fresh
    if (!out) throw std::runtime_error("TrainLog: cannot open " + path);
}

void TrainLog::append(LogRecord rec) {
    rec.phase = phase_;
    if (!sink_.empty()) {
        std::ofstream out(sink_, std::ios::app);
        out << rec.to_line() << "\n";
    }
    records_.push_back(std::move(rec));
}

std::vector<LogRecord> TrainLog::steps() const {
    std::vector<LogRecord> out;
    for (const auto& r : records_)
        if (r.kind == "step") out.push_back(r);
    return out;
}

std::vector<LogRecord> TrainLog::epochs() const {
    std::vector<LogRecord> out;
    for (const auto& r : records_)
        if (r.kind == "epoch") out.push_back(r);
    return out;
}

std::vector<LogRecord> TrainLog::read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("TrainLog: cannot open " + path);
    std::vector<LogRecord> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(LogRecord::parse_line(line));
    return out;
}

// ===================== shared helpers =====================

std::pair<std::vector<Impression>, std::vector<Impression>> split_validation(
    const std::vector<Impression>& impressions, double val_fraction, RandomSource& rng) {
    std::vector<int> order(impressions.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const auto n_val = static_cast<size_t>(std::floor(val_fraction * static_cast<double>(order.size())));
    std::pair<std::vector<Impression>, std::vector<Impression>> out;
    for (size_t i = 0; i < order.size(); ++i) {
        const Impression& imp = impressions[static_cast<size_t>(order[i])];
        if (i < order.size() - n_val)
            out.first.push_back(imp);
        else
            out.second.push_back(imp);
    }
    return out;
}

namespace {

AdamConfig adam_config(const PipelineConfig& cfg, double lr) {
    return {lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
}

// Linear warmup to the base rate, then linear decay to final_frac of it.
// warmup_frac 0 and final_frac 1 reduce to a constant rate.
double scheduled_lr(double base, int64_t step, int64_t total_steps, double warmup_frac,
                    double final_frac) {
    if (total_steps <= 1) return base;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    if (warmup_frac > 0.0 && t < warmup_frac) return base * (t / warmup_frac);
    const double span = 1.0 - warmup_frac;
    const double progress = span > 0.0 ? (t - warmup_frac) / span : 1.0;
    return base * (1.0 - (1.0 - final_frac) * progress);
}

void apply_freeze(NewsEncoderParams& enc, int freeze_below) {
    if (freeze_below <= 0) return;
    enc.tok_emb.set_requires_grad(false);
    enc.pos_emb.set_requires_grad(false);
    const int upto = std::min<int>(freeze_below, static_cast<int>(enc.blocks.size()));
    for (int i = 0; i < upto; ++i) {
        auto& b = enc.blocks[static_cast<size_t>(i)];
        for (Tensor* t : {&b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo, &b.ln1_g,
                          &b.ln1_b, &b.ffn_w1, &b.ffn_b1, &b.ffn_w2, &b.ffn_b2, &b.ln2_g, &b.ln2_b})
            t->set_requires_grad(false);
    }
}

void freeze_all(RecModel& model) {
    for (auto& nt : model.named_params()) nt.tensor.set_requires_grad(false);
}

[[noreturn]] void abort_divergence(const std::string& phase, int64_t step,
                                   const std::vector<NamedTensor>& params,
                                   const std::string& log_path) {
    std::string dump;
    if (!log_path.empty()) {
        dump = log_path + ".divergence-dump";
        save_checkpoint(dump, params, {{"phase", phase}, {"step", std::to_string(step)}});
    }
    throw std::runtime_error(phase + ": non-finite loss at step " + std::to_string(step) +
                             (dump.empty() ? "" : ", state dumped to " + dump));
}

std::vector<std::vector<double>> snapshot_values(const std::vector<NamedTensor>& params) {
    std::vector<std::vector<double>> snap;
    snap.reserve(params.size());
    for (const auto& nt : params)
        snap.emplace_back(nt.tensor.values().begin(), nt.tensor.values().end());
    return snap;
}

void restore_values(std::vector<NamedTensor> params, const std::vector<std::vector<double>>& snap) {
    for (size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].tensor.values_mut();
        std::copy(snap[i].begin(), snap[i].end(), dst.begin());
    }
}

double log_softmax_at(const std::vector<double>& logits, int pos) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    return logits[static_cast<size_t>(pos)] - mx - std::log(sum);
}

Tensor onehot_rows(int rows, int cols, const std::vector<int>& hot) {
    std::vector<double> data(static_cast<size_t>(rows) * cols, 0.0);
    for (int r = 0; r < rows; ++r)
        data[static_cast<size_t>(r) * cols + static_cast<size_t>(hot[static_cast<size_t>(r)])] = 1.0;
    return Tensor::from({rows, cols}, std::move(data));
}

uint64_t derived_seed(uint64_t base, uint64_t stream) {
    return RandomSource(base).derive(stream).next_u64();
}

using ReprMemo = std::unordered_map<int, Tensor>;

Tensor encode_article(const NewsEncoderParams& enc, const NewsTable& table, int article,
                      ReprMemo* memo) {
    if (memo) {
        auto it = memo->find(article);
        if (it != memo->end()) return it->second;
    }
    Tensor h = encode_news(enc, table.at(article).title);
    if (memo) memo->emplace(article, h);
    return h;
}

SampleForward rec_forward_impl(const RecModel& model, const NewsTable& table,
                               const RecSample& sample, bool want_reprs, ReprMemo* memo) {
    SampleForward out;
    std::vector<Tensor> hist;
    std::vector<char> mask;
    hist.reserve(sample.history.size());
    for (int idx : sample.history) {
        hist.push_back(encode_article(model.news, table, idx, memo));
        mask.push_back(1);
    }
    out.user_repr = encode_user(model.user, hist, mask);
    std::vector<Tensor> scores;
    std::vector<Tensor> cand_reprs;
    for (int idx : sample.candidates) {
        Tensor h = encode_article(model.news, table, idx, memo);
        scores.push_back(score_click(h, out.user_repr));
        cand_reprs.push_back(std::move(h));
    }
    out.logits = concat(scores, 0);
    if (want_reprs) {
        std::vector<Tensor> all = hist;
        for (Tensor& t : cand_reprs) all.push_back(std::move(t));
        out.news_reprs = stack_rows(all);
    }
    return out;
}

}  // namespace

SampleForward rec_forward(const RecModel& model, const NewsTable& table, const RecSample& sample,
                          bool want_reprs) {
    return rec_forward_impl(model, table, sample, want_reprs, nullptr);
}

// ===================== phase 1: post-training =====================

PosttrainResult run_posttrain(const PipelineConfig& cfg, const MatchCorpus& corpus,
                              const std::string& log_path) {
    cfg.validate();
    if (corpus.size() == 0) throw std::invalid_argument("run_posttrain: empty corpus");
    if (static_cast<int>(corpus.size()) < cfg.match_negatives + 1)
        throw std::invalid_argument("run_posttrain: corpus smaller than N+1 articles");

    RandomSource root(cfg.seed);
    auto rng_init = root.derive(11);
    auto rng_data = root.derive(12);
    auto rng_eval = root.derive(13);

    PosttrainResult res;
    res.encoder = NewsEncoderParams::init(cfg.teacher_model(), rng_init);
    apply_freeze(res.encoder, cfg.freeze_below);
    if (!log_path.empty()) res.log.set_sink(log_path);

    Adam opt(res.encoder.trainable_params(cfg.freeze_below), adam_config(cfg, cfg.posttrain_lr));
    const int64_t batches_per_epoch =
        (static_cast<int64_t>(corpus.size()) + cfg.posttrain_batch - 1) / cfg.posttrain_batch;
    const int64_t total_steps = batches_per_epoch * cfg.posttrain_epochs;
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.posttrain_epochs; ++epoch) {
        std::vector<int> order(corpus.size());
        std::iota(order.begin(), order.end(), 0);
        rng_data.shuffle(order);
        double loss_sum = 0.0;
        int n_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.posttrain_batch)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.posttrain_batch));
            std::vector<Tensor> logit_rows;
            for (size_t i = start; i < end; ++i) {
                const MatchSample s =
                    make_match_sample(corpus, order[i], cfg.match_negatives, rng_data);
                logit_rows.push_back(matching_forward(res.encoder, s).logits);
            }
            Tensor loss = matching_loss(stack_rows(logit_rows));
            if (!std::isfinite(loss.item()))
                abort_divergence("posttrain", step, res.encoder.named_params(), log_path);
            backward(loss);
            opt.set_lr(scheduled_lr(cfg.posttrain_lr, step, total_steps, cfg.lr_warmup_frac,
                                    cfg.lr_final_frac));
            opt.step();
            opt.zero_grad();
            loss_sum += loss.item();
            ++n_batches;
            if (step % cfg.log_every == 0) {
                LogRecord rec;
                rec.kind = "step";
                rec.step = step;
                rec.epoch = epoch;
                rec.put("loss", loss.item());
                res.log.append(std::move(rec));
            }
            ++step;
        }
        const double acc = matching_accuracy(res.encoder, corpus, 400, cfg.match_negatives, rng_eval);
        res.epoch_loss.push_back(loss_sum / std::max(1, n_batches));
        res.epoch_accuracy.push_back(acc);
        LogRecord rec;
        rec.kind = "epoch";
        rec.epoch = epoch;
        rec.put("loss", res.epoch_loss.back());
        rec.put("accuracy", acc);
        res.log.append(std::move(rec));
    }
    res.encoder.stage = "posttrained";
    res.final_accuracy = res.epoch_accuracy.empty() ? 0.0 : res.epoch_accuracy.back();
    return res;
}

// ===================== phase 2: stage-1 distillation =====================

Stage1Result run_stage1(const PipelineConfig& cfg, const NewsEncoderParams& teacher,
                        const MatchCorpus& corpus, const std::string& log_path) {
    cfg.validate();
    if (teacher.stage != "posttrained")
        throw std::invalid_argument("run_stage1: teacher checkpoint must be tagged 'posttrained', got '" +
                                    teacher.stage + "'");
    const ModelConfig student_cfg = cfg.student_model();
    if (!teacher.cfg.same_dims(student_cfg))
        throw std::invalid_argument(
            "run_stage1: teacher and student dims differ; the embedding loss needs matching "
            "representation dimensions");
    if (corpus.size() == 0) throw std::invalid_argument("run_stage1: empty corpus");

    RandomSource root(cfg.seed);
    auto rng_init = root.derive(21);
    auto rng_data = root.derive(22);
    auto rng_eval = root.derive(23);

    Stage1Result res;
    res.student = NewsEncoderParams::init(student_cfg, rng_init);
    if (!log_path.empty()) res.log.set_sink(log_path);
    res.initial_accuracy =
        matching_accuracy(res.student, corpus, 400, cfg.match_negatives, rng_eval);

    Adam opt(res.student.trainable_params(cfg.freeze_below), adam_config(cfg, cfg.stage1_lr));
    apply_freeze(res.student, cfg.freeze_below);
    const int64_t batches_per_epoch =
        (static_cast<int64_t>(corpus.size()) + cfg.stage1_batch - 1) / cfg.stage1_batch;
    const int64_t total_steps = batches_per_epoch * cfg.stage1_epochs;
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
        std::vector<int> order(corpus.size());
        std::iota(order.begin(), order.end(), 0);
        rng_data.shuffle(order);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.stage1_batch)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.stage1_batch));
            std::vector<MatchSample> samples;
            for (size_t i = start; i < end; ++i)
                samples.push_back(make_match_sample(corpus, order[i], cfg.match_negatives, rng_data));

            std::vector<Tensor> t_logits, t_titles, t_bodies;
            {
                NoGradGuard ng;
                for (const MatchSample& s : samples) {
                    MatchingOutput out = matching_forward(teacher, s);
                    t_logits.push_back(out.logits);
                    t_titles.push_back(out.title_reprs);
                    t_bodies.push_back(out.body_repr);
                }
            }
            std::vector<Tensor> s_logits, s_titles, s_bodies;
            for (const MatchSample& s : samples) {
                MatchingOutput out = matching_forward(res.student, s);
                s_logits.push_back(out.logits);
                s_titles.push_back(out.title_reprs);
                s_bodies.push_back(out.body_repr);
            }
            Stage1Losses losses = stage1_total_loss(
                stack_rows(t_logits), stack_rows(s_logits), concat(t_titles, 0),
                stack_rows(t_bodies), concat(s_titles, 0), stack_rows(s_bodies), cfg.t1, cfg.beta1,
                cfg.stage1_distill_weight, cfg.stage1_emb_weight);
            if (!std::isfinite(losses.total.item()))
                abort_divergence("stage1", step, res.student.named_params(), log_path);
            backward(losses.total);
            opt.set_lr(scheduled_lr(cfg.stage1_lr, step, total_steps, cfg.lr_warmup_frac,
                                    cfg.lr_final_frac));
            opt.step();
            opt.zero_grad();
            if (step % cfg.log_every == 0) {
                LogRecord rec;
                rec.kind = "step";
                rec.step = step;
                rec.epoch = epoch;
                rec.put("loss", losses.total.item());
                rec.put("distill", losses.distill.item());
                rec.put("emb", losses.emb.item());
                rec.put("target", losses.target.item());
                rec.put("beta1", cfg.beta1);
                rec.put("distill_weight", cfg.stage1_distill_weight);
                rec.put("emb_weight", cfg.stage1_emb_weight);
                res.log.append(std::move(rec));
            }
            ++step;
        }
        const double acc =
            matching_accuracy(res.student, corpus, 400, cfg.match_negatives, rng_eval);
        res.final_accuracy = acc;
        LogRecord rec;
        rec.kind = "epoch";
        rec.epoch = epoch;
        rec.put("accuracy", acc);
        res.log.append(std::move(rec));
    }
    res.student.stage = "stage1";
    return res;
}

// ===================== phase 3: recommendation finetuning =====================

FinetuneResult run_finetune(const PipelineConfig& cfg, const ModelConfig& model_cfg,
                            const NewsEncoderParams* warm_start, const std::string& init_stage,
                            const NewsTable& table, const std::vector<Impression>& train,
                            uint64_t run_seed, const std::string& log_path) {
    cfg.validate();
    model_cfg.validate();
    RandomSource rng(run_seed);

    FinetuneResult res;
    if (warm_start) {
        if (!init_stage.empty() && warm_start->stage != init_stage)
            throw std::invalid_argument("run_finetune: warm start must be tagged '" + init_stage +
                                        "', got '" + warm_start->stage + "'");
        if (!warm_start->cfg.same_dims(model_cfg) || warm_start->cfg.n_layers != model_cfg.n_layers)
            throw std::invalid_argument("run_finetune: warm-start encoder does not match the model config");
        res.model.news = warm_start->clone();
        res.model.news.reinit_head(rng);  // seed-dependent heads, shared transformer
        res.model.user = UserEncoderParams::init(model_cfg.news_dim, model_cfg.query_dim, rng);
    } else {
        res.model = RecModel::init(model_cfg, rng);
    }
    apply_freeze(res.model.news, cfg.freeze_below);
    if (!log_path.empty()) res.log.set_sink(log_path);

    // the split depends only on the experiment seed, so every arm trains and
    // validates on the same impressions
    auto split_rng = RandomSource(cfg.seed).derive(31);
    auto [train_part, val_part] = split_validation(train, cfg.val_fraction, split_rng);

    Adam opt(res.model.trainable_params(cfg.freeze_below), adam_config(cfg, cfg.finetune_lr));
    std::vector<std::vector<double>> best;
    double best_auc = -1.0;
    int64_t step = 0;
    int64_t total_steps = 0;  // fixed after the first epoch's sample build
    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        auto samples = build_rec_samples(train_part, table, cfg.rec_negatives, cfg.history_len, rng);
        rng.shuffle(samples);
        if (epoch == 0)
            total_steps = ((static_cast<int64_t>(samples.size()) + cfg.rec_batch - 1) /
                           cfg.rec_batch) *
                          cfg.finetune_epochs;
        double loss_sum = 0.0;
        int n_batches = 0;
        for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(cfg.rec_batch)) {
            const size_t end = std::min(samples.size(), start + static_cast<size_t>(cfg.rec_batch));
            ReprMemo memo;
            std::vector<Tensor> logit_rows;
            std::vector<int> hot;
            for (size_t i = start; i < end; ++i) {
                logit_rows.push_back(
                    rec_forward_impl(res.model, table, samples[i], false, &memo).logits);
                hot.push_back(samples[i].label_pos);
            }
            Tensor logits = stack_rows(logit_rows);
            Tensor loss = cross_entropy(
                onehot_rows(static_cast<int>(logit_rows.size()), cfg.rec_negatives + 1, hot), logits);
            if (!std::isfinite(loss.item()))
                abort_divergence("finetune", step, res.model.named_params(), log_path);
            backward(loss);
            opt.set_lr(scheduled_lr(cfg.finetune_lr, step, total_steps, cfg.lr_warmup_frac,
                                    cfg.lr_final_frac));
            opt.step();
            opt.zero_grad();
            loss_sum += loss.item();
            ++n_batches;
            if (step % cfg.log_every == 0) {
                LogRecord rec;
                rec.kind = "step";
                rec.step = step;
                rec.epoch = epoch;
                rec.put("loss", loss.item());
                res.log.append(std::move(rec));
            }
            ++step;
        }
        LogRecord rec;
        rec.kind = "epoch";
        rec.epoch = epoch;
        rec.put("loss", loss_sum / std::max(1, n_batches));
        if (!val_part.empty()) {
            const EvalResult ev = evaluate(res.model, val_part, table, cfg.eval_threads);
            rec.put("val_auc", ev.auc);
            if (ev.auc > best_auc) {
                best_auc = ev.auc;
                best = snapshot_values(res.model.named_params());
            }
        }
        res.log.append(std::move(rec));
    }
    if (!best.empty()) restore_values(res.model.named_params(), best);
    res.best_val_auc = best_auc;
    res.model.news.stage = "finetuned";
    return res;
}

EnsembleResult run_teacher_ensemble(const PipelineConfig& cfg,
                                    const NewsEncoderParams& posttrained, const NewsTable& table,
                                    const std::vector<Impression>& train,
                                    const std::string& log_dir) {
    cfg.validate();
    EnsembleResult res;
    for (int i = 0; i < cfg.num_teachers; ++i) {
        const std::string log_path =
            log_dir.empty() ? "" : log_dir + "/teacher" + std::to_string(i) + ".log";
        FinetuneResult ft =
            run_finetune(cfg, cfg.teacher_model(), &posttrained, "posttrained", table, train,
                         derived_seed(cfg.seed, 200 + static_cast<uint64_t>(i)), log_path);
        res.val_auc.push_back(ft.best_val_auc);
        res.teachers.push_back(std::move(ft.model));
    }
    return res;
}

// ===================== phase 4: stage-2 distillation =====================

namespace {

struct TeacherCache {
    std::vector<std::vector<double>> news;  // by article index; empty when unused
    std::vector<std::vector<double>> user;  // by impression index
};

TeacherCache build_teacher_cache(const RecModel& teacher, const NewsTable& table,
                                 const std::vector<Impression>& impressions) {
    NoGradGuard ng;
    TeacherCache cache;
    cache.news.resize(static_cast<size_t>(table.size()));
    std::vector<char> referenced(static_cast<size_t>(table.size()), 0);
    for (const Impression& imp : impressions) {
        for (const std::string& id : imp.history) referenced[static_cast<size_t>(table.require(id))] = 1;
        for (const Candidate& c : imp.candidates) referenced[static_cast<size_t>(table.require(c.news_id))] = 1;
    }
    for (int i = 0; i < table.size(); ++i) {
        if (!referenced[static_cast<size_t>(i)]) continue;
        Tensor h = encode_news(teacher.news, table.at(i).title);
        cache.news[static_cast<size_t>(i)].assign(h.values().begin(), h.values().end());
    }
    const int nd = teacher.news.cfg.news_dim;
    const int L = teacher.news.cfg.history_len;
    cache.user.resize(impressions.size());
    for (size_t ii = 0; ii < impressions.size(); ++ii) {
        const Impression& imp = impressions[ii];
        std::vector<Tensor> hist;
        std::vector<char> mask;
        const size_t start = imp.history.size() > static_cast<size_t>(L)
                                 ? imp.history.size() - static_cast<size_t>(L)
                                 : 0;
        for (size_t h = start; h < imp.history.size(); ++h) {
            const int idx = table.require(imp.history[h]);
            hist.push_back(Tensor::from({nd}, cache.news[static_cast<size_t>(idx)]));
            mask.push_back(1);
        }
        Tensor u = encode_user(teacher.user, hist, mask);
        cache.user[ii].assign(u.values().begin(), u.values().end());
    }
    return cache;
}

}  // namespace

Stage2Result run_stage2(const PipelineConfig& cfg, const std::vector<RecModel>& teachers,
                        const NewsEncoderParams* stage1_student, const NewsTable& table,
                        const std::vector<Impression>& train, const std::string& log_path) {
    cfg.validate();
    if (teachers.empty()) throw std::invalid_argument("run_stage2: teacher ensemble is empty");
    for (const RecModel& t : teachers)
        if (t.news.cfg.news_dim != teachers[0].news.cfg.news_dim)
            throw std::invalid_argument("run_stage2: teachers disagree on representation dims");

    RandomSource root(cfg.seed);
    auto rng_init = root.derive(41);
    auto rng_data = root.derive(42);

    const ModelConfig student_cfg = cfg.student_model();
    Stage2Result res;
    if (stage1_student) {
        if (stage1_student->stage != "stage1")
            throw std::invalid_argument(
                "run_stage2: student warm start must be tagged 'stage1', got '" +
                stage1_student->stage + "' (pass null to skip stage 1)");
        if (!stage1_student->cfg.same_dims(student_cfg) ||
            stage1_student->cfg.n_layers != student_cfg.n_layers)
            throw std::invalid_argument("run_stage2: stage-1 student does not match the model config");
        res.student.news = stage1_student->clone();
        res.student.user = UserEncoderParams::init(student_cfg.news_dim, student_cfg.query_dim, rng_init);
    } else {
        res.student = RecModel::init(student_cfg, rng_init);
    }
    if (!log_path.empty()) res.log.set_sink(log_path);

    // frozen copies of the teachers plus trainable projections and omega
    std::vector<RecModel> frozen;
    frozen.reserve(teachers.size());
    for (const RecModel& t : teachers) {
        RecModel c = t.clone();
        freeze_all(c);
        frozen.push_back(std::move(c));
    }
    TeacherEnsemble ensemble =
        TeacherEnsemble::init(std::move(frozen), student_cfg.news_dim, cfg.omega_init, rng_init);
    std::vector<uint64_t> fingerprints;
    for (const RecModel& t : ensemble.teachers) fingerprints.push_back(params_fingerprint(t.named_params()));

    auto split_rng = RandomSource(cfg.seed).derive(31);
    auto [train_part, val_part] = split_validation(train, cfg.val_fraction, split_rng);

    // teacher outputs never change during this phase; cache them up front
    std::vector<TeacherCache> caches;
    for (const RecModel& t : ensemble.teachers)
        caches.push_back(build_teacher_cache(t, table, train_part));

    const SoftLabelCombine combine = cfg.soft_label_combine == "probs"
                                         ? SoftLabelCombine::kProbs
                                         : SoftLabelCombine::kLogits;
    const int m = ensemble.num_teachers();
    const int teacher_nd = ensemble.teachers[0].news.cfg.news_dim;

    std::vector<Tensor> params = res.student.trainable_params(cfg.freeze_below);
    for (const Tensor& t : ensemble.trainable_params()) params.push_back(t);
    apply_freeze(res.student.news, cfg.freeze_below);
    Adam opt(std::move(params), adam_config(cfg, cfg.stage2_lr));

    std::vector<std::vector<double>> best;
    double best_auc = -1.0;
    int64_t step = 0;
    int64_t total_steps = 0;
    for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
        auto samples = build_rec_samples(train_part, table, cfg.rec_negatives, cfg.history_len, rng_data);
        rng_data.shuffle(samples);
        if (epoch == 0)
            total_steps = ((static_cast<int64_t>(samples.size()) + cfg.rec_batch - 1) /
                           cfg.rec_batch) *
                          cfg.stage2_epochs;
        std::vector<double> w_mean(static_cast<size_t>(m), 0.0);
        int64_t w_count = 0;
        for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(cfg.rec_batch)) {
            const size_t end = std::min(samples.size(), start + static_cast<size_t>(cfg.rec_batch));
            ReprMemo memo;
            std::vector<Tensor> distill_terms, emb_terms, logit_rows;
            std::vector<int> hot;
            double w_sum_err = 0.0;
            std::vector<double> w_batch_mean(static_cast<size_t>(m), 0.0);
            for (size_t si = start; si < end; ++si) {
                const RecSample& s = samples[si];
                // teacher soft labels and per-teacher losses from the caches
                std::vector<Tensor> t_logits;
                std::vector<double> t_ce;
                std::vector<Tensor> t_news, t_user;
                for (int ti = 0; ti < m; ++ti) {
                    const TeacherCache& cache = caches[static_cast<size_t>(ti)];
                    const auto& u = cache.user[static_cast<size_t>(s.impression_index)];
                    std::vector<double> logits;
                    for (int cand : s.candidates) {
                        const auto& h = cache.news[static_cast<size_t>(cand)];
                        double d = 0.0;
                        for (size_t j = 0; j < h.size(); ++j) d += h[j] * u[j];
                        logits.push_back(d);
                    }
                    t_ce.push_back(-log_softmax_at(logits, s.label_pos));
                    const int n_logits = static_cast<int>(logits.size());
                    t_logits.push_back(Tensor::from({n_logits}, std::move(logits)));
                    std::vector<double> rows;
                    rows.reserve((s.history.size() + s.candidates.size()) * static_cast<size_t>(teacher_nd));
                    for (int idx : s.history)
                        rows.insert(rows.end(), cache.news[static_cast<size_t>(idx)].begin(),
                                    cache.news[static_cast<size_t>(idx)].end());
                    for (int idx : s.candidates)
                        rows.insert(rows.end(), cache.news[static_cast<size_t>(idx)].begin(),
                                    cache.news[static_cast<size_t>(idx)].end());
                    const int n_rows = static_cast<int>(s.history.size() + s.candidates.size());
                    t_news.push_back(Tensor::from({n_rows, teacher_nd}, std::move(rows)));
                    t_user.push_back(Tensor::from({teacher_nd}, u));
                }
                Tensor w = teacher_weights(t_ce, ensemble.omega());
                double wsum = 0.0;
                for (int ti = 0; ti < m; ++ti) {
                    wsum += w.values()[static_cast<size_t>(ti)];
                    w_batch_mean[static_cast<size_t>(ti)] += w.values()[static_cast<size_t>(ti)];
                }
                w_sum_err = std::max(w_sum_err, std::abs(wsum - 1.0));

                SampleForward fw = rec_forward_impl(res.student, table, s, true, &memo);
                distill_terms.push_back(
                    stage2_distill_loss(t_logits, w, fw.logits, cfg.t2, combine));
                emb_terms.push_back(stage2_emb_loss(t_news, t_user, ensemble.projections,
                                                    fw.news_reprs, fw.user_repr, w));
                logit_rows.push_back(fw.logits);
                hot.push_back(s.label_pos);
            }
            const int bsz = static_cast<int>(logit_rows.size());
            Tensor distill = mean(concat(distill_terms, 0));
            Tensor emb = mean(concat(emb_terms, 0));
            Tensor target =
                cross_entropy(onehot_rows(bsz, cfg.rec_negatives + 1, hot), stack_rows(logit_rows));
            Stage2Losses losses = stage2_total_loss(distill, emb, target, cfg.beta2,
                                                    cfg.stage2_distill_weight, cfg.stage2_emb_weight);
            if (!std::isfinite(losses.total.item()))
                abort_divergence("stage2", step, res.student.named_params(), log_path);
            backward(losses.total);
            opt.set_lr(scheduled_lr(cfg.stage2_lr, step, total_steps, cfg.lr_warmup_frac,
                                    cfg.lr_final_frac));
            opt.step();
            opt.zero_grad();

            for (int ti = 0; ti < m; ++ti)
                w_mean[static_cast<size_t>(ti)] += w_batch_mean[static_cast<size_t>(ti)];
            w_count += bsz;
            if (step % cfg.log_every == 0) {
                LogRecord rec;
                rec.kind = "step";
                rec.step = step;
                rec.epoch = epoch;
                rec.put("loss", losses.total.item());
                rec.put("distill", losses.distill.item());
                rec.put("emb", losses.emb.item());
                rec.put("target", losses.target.item());
                rec.put("beta2", cfg.beta2);
                rec.put("distill_weight", cfg.stage2_distill_weight);
                rec.put("emb_weight", cfg.stage2_emb_weight);
                rec.put("omega", ensemble.omega_value());
                rec.put("w_sum_err", w_sum_err);
                for (int ti = 0; ti < m; ++ti)
                    rec.put("w_mean" + std::to_string(ti),
                            w_batch_mean[static_cast<size_t>(ti)] / bsz);
                res.log.append(std::move(rec));
            }
            ++step;
        }
        res.mean_teacher_weights.assign(static_cast<size_t>(m), 0.0);
        if (w_count > 0)
            for (int ti = 0; ti < m; ++ti)
                res.mean_teacher_weights[static_cast<size_t>(ti)] =
                    w_mean[static_cast<size_t>(ti)] / static_cast<double>(w_count);
        LogRecord rec;
        rec.kind = "epoch";
        rec.epoch = epoch;
        rec.put("omega", ensemble.omega_value());
        if (!val_part.empty()) {
            const EvalResult ev = evaluate(res.student, val_part, table, cfg.eval_threads);
            rec.put("val_auc", ev.auc);
            if (ev.auc > best_auc) {
                best_auc = ev.auc;
                best = snapshot_values(res.student.named_params());
            }
        }
        res.log.append(std::move(rec));
    }
    if (!best.empty()) restore_values(res.student.named_params(), best);
    res.best_val_auc = best_auc;
    res.final_omega = ensemble.omega_value();
    res.student.news.stage = "stage2";

    for (size_t i = 0; i < fingerprints.size(); ++i)
        if (params_fingerprint(ensemble.teachers[i].named_params()) != fingerprints[i])
            throw std::logic_error("run_stage2: frozen teacher parameters changed");
    return res;
}

}  // namespace tinyrec
