#include "tinyrec/distill.hpp"

#include <cmath>
#include <stdexcept>

namespace tinyrec {

Tensor soft_distill_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                         double temperature) {
    if (temperature <= 0.0)
        throw std::invalid_argument("soft_distill_loss: temperature must be positive");
    if (teacher_logits.shape() != student_logits.shape())
        throw std::invalid_argument("soft_distill_loss: logit shapes differ");
    const int axis = teacher_logits.rank() - 1;
    Tensor target = softmax(scale(detach(teacher_logits), 1.0 / temperature), axis);
    Tensor loss = cross_entropy(target, scale(student_logits, 1.0 / temperature));
    return scale(loss, temperature * temperature);
}

Tensor stage1_emb_loss(const Tensor& teacher_title_reprs, const Tensor& teacher_body_reprs,
                       const Tensor& student_title_reprs, const Tensor& student_body_reprs) {
    return add(mse(detach(teacher_title_reprs), student_title_reprs),
               mse(detach(teacher_body_reprs), student_body_reprs));
}

Stage1Losses stage1_total_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                               const Tensor& teacher_title_reprs, const Tensor& teacher_body_reprs,
                               const Tensor& student_title_reprs, const Tensor& student_body_reprs,
                               double t1, double beta1, double distill_weight, double emb_weight) {
    Stage1Losses out;
    out.distill = soft_distill_loss(teacher_logits, student_logits, t1);
    out.emb = stage1_emb_loss(teacher_title_reprs, teacher_body_reprs, student_title_reprs,
                              student_body_reprs);
    const int rows = student_logits.rank() == 2 ? student_logits.dim(0) : 1;
    const int cols = student_logits.rank() == 2 ? student_logits.dim(1) : student_logits.dim(0);
    std::vector<double> onehot(static_cast<size_t>(rows) * cols, 0.0);
    for (int r = 0; r < rows; ++r) onehot[static_cast<size_t>(r) * cols] = 1.0;
    out.target = cross_entropy(Tensor::from(student_logits.shape(), std::move(onehot)),
                               student_logits);
    out.total = add(add(scale(out.distill, distill_weight), scale(out.emb, emb_weight)),
                    scale(out.target, beta1));
    return out;
}

Tensor teacher_weights(const std::vector<double>& per_teacher_ce, const Tensor& omega) {
    if (per_teacher_ce.empty())
        throw std::invalid_argument("teacher_weights: need at least one teacher");
    if (omega.size() != 1)
        throw std::invalid_argument("teacher_weights: omega must be a scalar tensor");
    if (omega.values()[0] <= 0.0)
        throw std::invalid_argument("teacher_weights: omega must be positive");
    std::vector<double> neg(per_teacher_ce.size());
    for (size_t i = 0; i < per_teacher_ce.size(); ++i) {
        if (!(per_teacher_ce[i] >= 0.0))
            throw std::invalid_argument("teacher_weights: losses must be non-negative");
        neg[i] = -per_teacher_ce[i];
    }
    const int m = static_cast<int>(neg.size());
    Tensor neg_ce = Tensor::from({m}, std::move(neg));
    return softmax(scale_by(neg_ce, omega), 0);
}

Tensor stage2_distill_loss(const std::vector<Tensor>& teacher_logits, const Tensor& weights,
                           const Tensor& student_logits, double t2, SoftLabelCombine combine) {
    if (t2 <= 0.0) throw std::invalid_argument("stage2_distill_loss: temperature must be positive");
    const int m = static_cast<int>(teacher_logits.size());
    if (m == 0) throw std::invalid_argument("stage2_distill_loss: no teachers");
    if (weights.rank() != 1 || weights.dim(0) != m)
        throw std::invalid_argument("stage2_distill_loss: weight count does not match teachers");
    for (const Tensor& t : teacher_logits)
        if (t.shape() != student_logits.shape())
            throw std::invalid_argument("stage2_distill_loss: logit shapes differ");
    const int axis = student_logits.rank() - 1;

    Tensor target;
    if (combine == SoftLabelCombine::kLogits) {
        Tensor combined;
        for (int i = 0; i < m; ++i) {
            Tensor term = scale_by(detach(teacher_logits[static_cast<size_t>(i)]),
                                   slice(weights, 0, i, 1));
            combined = i == 0 ? term : add(combined, term);
        }
        target = softmax(scale(combined, 1.0 / t2), axis);
    } else {
        Tensor combined;
        for (int i = 0; i < m; ++i) {
            Tensor p = softmax(scale(detach(teacher_logits[static_cast<size_t>(i)]), 1.0 / t2), axis);
            Tensor term = scale_by(p, slice(weights, 0, i, 1));
            combined = i == 0 ? term : add(combined, term);
        }
        target = combined;  // convex combination of distributions
    }
    Tensor loss = cross_entropy(target, scale(student_logits, 1.0 / t2));
    return scale(loss, t2 * t2);
}

Tensor project_teacher_rep(const Tensor& w, const Tensor& b, const Tensor& rep) {
    if (rep.rank() == 1) {
        Tensor out = add_bias(matmul(reshape(rep, {1, rep.dim(0)}), w), b);
        return reshape(out, {w.dim(1)});
    }
    return add_bias(matmul(rep, w), b);
}

TeacherProjection TeacherProjection::init(int teacher_dim, int student_dim, RandomSource& rng) {
    TeacherProjection p;
    p.news_w = Tensor::randn({teacher_dim, student_dim}, rng, 0.02, true);
    p.news_b = Tensor::zeros({student_dim}, true);
    p.user_w = Tensor::randn({teacher_dim, student_dim}, rng, 0.02, true);
    p.user_b = Tensor::zeros({student_dim}, true);
    return p;
}

std::vector<NamedTensor> TeacherProjection::named_params(int teacher_index) const {
    const std::string base = "proj" + std::to_string(teacher_index) + ".";
    return {{base + "news_w", news_w},
            {base + "news_b", news_b},
            {base + "user_w", user_w},
            {base + "user_b", user_b}};
}

std::vector<Tensor> TeacherProjection::trainable_params() const {
    return {news_w, news_b, user_w, user_b};
}

Tensor stage2_emb_loss(const std::vector<Tensor>& teacher_news_reprs,
                       const std::vector<Tensor>& teacher_user_reprs,
                       const std::vector<TeacherProjection>& projections,
                       const Tensor& student_news_reprs, const Tensor& student_user_repr,
                       const Tensor& weights) {
    const size_t m = teacher_news_reprs.size();
    if (m == 0) throw std::invalid_argument("stage2_emb_loss: no teachers");
    if (teacher_user_reprs.size() != m || projections.size() != m ||
        weights.dim(0) != static_cast<int>(m))
        throw std::invalid_argument("stage2_emb_loss: teacher/projection/weight counts differ");

    Tensor total;
    for (size_t i = 0; i < m; ++i) {
        const TeacherProjection& proj = projections[i];
        Tensor news_term = mse(project_teacher_rep(proj.news_w, proj.news_b,
                                                   detach(teacher_news_reprs[i])),
                               student_news_reprs);
        Tensor user_term = mse(project_teacher_rep(proj.user_w, proj.user_b,
                                                   detach(teacher_user_reprs[i])),
                               student_user_repr);
        Tensor term = scale_by(add(news_term, user_term),
                               slice(weights, 0, static_cast<int>(i), 1));
        total = i == 0 ? term : add(total, term);
    }
    return total;
}

Stage2Losses stage2_total_loss(const Tensor& distill, const Tensor& emb, const Tensor& target,
                               double beta2, double distill_weight, double emb_weight) {
    Stage2Losses out;
    out.distill = distill;
    out.emb = emb;
    out.target = target;
    out.total = add(add(scale(distill, distill_weight), scale(emb, emb_weight)),
                    scale(target, beta2));
    return out;
}

TeacherEnsemble TeacherEnsemble::init(std::vector<RecModel> teachers, int student_news_dim,
                                      double omega_init, RandomSource& rng) {
    if (teachers.empty()) throw std::invalid_argument("TeacherEnsemble: need at least one teacher");
    if (omega_init <= 0.0) throw std::invalid_argument("TeacherEnsemble: omega must start positive");
    TeacherEnsemble e;
    e.student_news_dim = student_news_dim;
    for (const RecModel& t : teachers)
        e.projections.push_back(
            TeacherProjection::init(t.news.cfg.news_dim, student_news_dim, rng));
    e.teachers = std::move(teachers);
    // inverse softplus, so omega() starts exactly at omega_init
    const double rho0 = std::log(std::expm1(omega_init));
    e.rho = Tensor::from({1}, {rho0}, true);
    return e;
}

Tensor TeacherEnsemble::omega() const { return softplus(rho); }

double TeacherEnsemble::omega_value() const {
    NoGradGuard ng;
    return softplus(rho).item();
}

std::vector<Tensor> TeacherEnsemble::trainable_params() const {
    std::vector<Tensor> out;
    for (const TeacherProjection& p : projections)
        for (const Tensor& t : p.trainable_params()) out.push_back(t);
    out.push_back(rho);
    return out;
}

}  // namespace tinyrec
