#include "tinyrec/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace tinyrec {

namespace {

using IntField = int PipelineConfig::*;
using DoubleField = double PipelineConfig::*;
using U64Field = uint64_t PipelineConfig::*;
using StringField = std::string PipelineConfig::*;

struct Field {
    const char* name;
    std::variant<IntField, DoubleField, U64Field, StringField> ref;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        {"vocab_size", &PipelineConfig::vocab_size},
        {"d_model", &PipelineConfig::d_model},
        {"n_heads", &PipelineConfig::n_heads},
        {"d_ff", &PipelineConfig::d_ff},
        {"teacher_layers", &PipelineConfig::teacher_layers},
        {"student_layers", &PipelineConfig::student_layers},
        {"max_title_len", &PipelineConfig::max_title_len},
        {"max_body_len", &PipelineConfig::max_body_len},
        {"news_dim", &PipelineConfig::news_dim},
        {"query_dim", &PipelineConfig::query_dim},
        {"history_len", &PipelineConfig::history_len},
        {"adam_beta1", &PipelineConfig::adam_beta1},
        {"adam_beta2", &PipelineConfig::adam_beta2},
        {"adam_eps", &PipelineConfig::adam_eps},
        {"match_negatives", &PipelineConfig::match_negatives},
        {"posttrain_lr", &PipelineConfig::posttrain_lr},
        {"posttrain_epochs", &PipelineConfig::posttrain_epochs},
        {"posttrain_batch", &PipelineConfig::posttrain_batch},
        {"stage1_lr", &PipelineConfig::stage1_lr},
        {"stage1_epochs", &PipelineConfig::stage1_epochs},
        {"stage1_batch", &PipelineConfig::stage1_batch},
        {"t1", &PipelineConfig::t1},
        {"beta1", &PipelineConfig::beta1},
        {"stage1_distill_weight", &PipelineConfig::stage1_distill_weight},
        {"stage1_emb_weight", &PipelineConfig::stage1_emb_weight},
        {"rec_negatives", &PipelineConfig::rec_negatives},
        {"finetune_lr", &PipelineConfig::finetune_lr},
        {"finetune_epochs", &PipelineConfig::finetune_epochs},
        {"rec_batch", &PipelineConfig::rec_batch},
        {"num_teachers", &PipelineConfig::num_teachers},
        {"stage2_lr", &PipelineConfig::stage2_lr},
        {"stage2_epochs", &PipelineConfig::stage2_epochs},
        {"t2", &PipelineConfig::t2},
        {"beta2", &PipelineConfig::beta2},
        {"omega_init", &PipelineConfig::omega_init},
        {"stage2_distill_weight", &PipelineConfig::stage2_distill_weight},
        {"stage2_emb_weight", &PipelineConfig::stage2_emb_weight},
        {"soft_label_combine", &PipelineConfig::soft_label_combine},
        {"lr_warmup_frac", &PipelineConfig::lr_warmup_frac},
        {"lr_final_frac", &PipelineConfig::lr_final_frac},
        {"seed", &PipelineConfig::seed},
        {"freeze_below", &PipelineConfig::freeze_below},
        {"val_fraction", &PipelineConfig::val_fraction},
        {"eval_threads", &PipelineConfig::eval_threads},
        {"log_every", &PipelineConfig::log_every},
        {"synth_articles", &PipelineConfig::synth_articles},
        {"synth_topics", &PipelineConfig::synth_topics},
        {"synth_words_per_topic", &PipelineConfig::synth_words_per_topic},
        {"synth_content_words", &PipelineConfig::synth_content_words},
        {"synth_title_tokens", &PipelineConfig::synth_title_tokens},
        {"synth_body_tokens", &PipelineConfig::synth_body_tokens},
        {"synth_users", &PipelineConfig::synth_users},
        {"synth_train_impressions", &PipelineConfig::synth_train_impressions},
        {"synth_eval_impressions", &PipelineConfig::synth_eval_impressions},
        {"synth_candidates", &PipelineConfig::synth_candidates},
        {"synth_history_min", &PipelineConfig::synth_history_min},
        {"synth_history_max", &PipelineConfig::synth_history_max},
        {"synth_click_noise", &PipelineConfig::synth_click_noise},
    };
    return f;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

ModelConfig PipelineConfig::teacher_model() const {
    ModelConfig m;
    m.vocab_size = vocab_size;
    m.d_model = d_model;
    m.n_heads = n_heads;
    m.d_ff = d_ff;
    m.n_layers = teacher_layers;
    m.max_title_len = max_title_len;
    m.max_body_len = max_body_len;
    m.news_dim = news_dim;
    m.query_dim = query_dim;
    m.history_len = history_len;
    return m;
}

ModelConfig PipelineConfig::student_model() const {
    ModelConfig m = teacher_model();
    m.n_layers = student_layers;
    return m;
}

SynthSpec PipelineConfig::synth_spec() const {
    SynthSpec s;
    s.n_articles = synth_articles;
    s.n_topics = synth_topics;
    s.words_per_topic = synth_words_per_topic;
    s.content_words = synth_content_words;
    s.title_tokens = synth_title_tokens;
    s.body_tokens = synth_body_tokens;
    s.n_users = synth_users;
    s.n_train_impressions = synth_train_impressions;
    s.n_eval_impressions = synth_eval_impressions;
    s.n_candidates = synth_candidates;
    s.history_min = synth_history_min;
    s.history_max = synth_history_max;
    s.click_noise = synth_click_noise;
    s.seed = seed;
    return s;
}

void PipelineConfig::validate() const {
    teacher_model().validate();
    student_model().validate();
    if (match_negatives < 1 || rec_negatives < 1)
        throw std::invalid_argument("config: negative sampling ratios must be >= 1");
    if (num_teachers < 1) throw std::invalid_argument("config: num_teachers must be >= 1");
    if (t1 <= 0.0 || t2 <= 0.0) throw std::invalid_argument("config: temperatures must be positive");
    if (omega_init <= 0.0) throw std::invalid_argument("config: omega_init must be positive");
    if (posttrain_epochs < 0 || stage1_epochs < 0 || finetune_epochs < 0 || stage2_epochs < 0)
        throw std::invalid_argument("config: epoch counts must be non-negative");
    if (posttrain_batch < 1 || stage1_batch < 1 || rec_batch < 1)
        throw std::invalid_argument("config: batch sizes must be >= 1");
    if (val_fraction < 0.0 || val_fraction > 0.9)
        throw std::invalid_argument("config: val_fraction must lie in [0, 0.9]");
    if (soft_label_combine != "logits" && soft_label_combine != "probs")
        throw std::invalid_argument("config: soft_label_combine must be 'logits' or 'probs'");
    if (freeze_below < 0) throw std::invalid_argument("config: freeze_below must be >= 0");
    if (eval_threads < 1) throw std::invalid_argument("config: eval_threads must be >= 1");
    if (lr_warmup_frac < 0.0 || lr_warmup_frac >= 1.0 || lr_final_frac <= 0.0 ||
        lr_final_frac > 1.0)
        throw std::invalid_argument("config: bad learning-rate schedule fractions");
    if (synth_click_noise < 0.0 || synth_click_noise >= 0.5)
        throw std::invalid_argument("config: synth_click_noise must lie in [0, 0.5)");
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    for (const Field& f : fields()) {
        if (key != f.name) continue;
        try {
            std::visit(
                [&](auto member) {
                    using T = std::remove_reference_t<decltype(this->*member)>;
                    if constexpr (std::is_same_v<T, int>) {
                        size_t used = 0;
                        this->*member = std::stoi(value, &used);
                        if (used != value.size()) throw std::invalid_argument(value);
                    } else if constexpr (std::is_same_v<T, double>) {
                        size_t used = 0;
                        this->*member = std::stod(value, &used);
                        if (used != value.size()) throw std::invalid_argument(value);
                    } else if constexpr (std::is_same_v<T, uint64_t>) {
                        size_t used = 0;
                        this->*member = std::stoull(value, &used);
                        if (used != value.size()) throw std::invalid_argument(value);
                    } else {
                        this->*member = value;
                    }
                },
                f.ref);
        } catch (const std::exception&) {
            throw std::invalid_argument("config: bad value '" + value + "' for key '" + key + "'");
        }
        return;
    }
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

void PipelineConfig::apply_overrides(const std::vector<std::string>& key_value_pairs) {
    for (const std::string& kv : key_value_pairs) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: override '" + kv + "' is not key=value");
        set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    PipelineConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) + " of " + path +
                                     " is not key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

std::string PipelineConfig::canonical() const {
    std::vector<std::string> lines;
    for (const Field& f : fields()) {
        std::ostringstream os;
        os << f.name << "=";
        std::visit(
            [&](auto member) {
                using T = std::remove_reference_t<decltype(this->*member)>;
                if constexpr (std::is_same_v<T, double>) {
                    os.precision(17);
                    os << this->*member;
                } else {
                    os << this->*member;
                }
            },
            f.ref);
        lines.push_back(os.str());
    }
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const std::string& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

uint64_t PipelineConfig::hash() const {
    const std::string c = canonical();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : c) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> PipelineConfig::known_keys() {
    std::vector<std::string> out;
    for (const Field& f : fields()) out.push_back(f.name);
    return out;
}

}  // namespace tinyrec
