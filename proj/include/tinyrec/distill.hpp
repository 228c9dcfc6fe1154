#pragma once

#include <vector>

#include "tinyrec/encoders.hpp"

namespace tinyrec {

// Tempered soft-label loss: T^2 * CE(softmax(teacher/T), student/T). The
// teacher side is detached; gradients reach only the student logits.
Tensor soft_distill_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                         double temperature);

// MSE(title reprs) + MSE(body reprs), teacher side detached. Shapes must
// match, which pins the student news dimension to the teacher's.
Tensor stage1_emb_loss(const Tensor& teacher_title_reprs, const Tensor& teacher_body_reprs,
                       const Tensor& student_title_reprs, const Tensor& student_body_reprs);

struct Stage1Losses {
    Tensor distill, emb, target, total;
};

// total = dw*distill + ew*emb + beta1*CE(student, one-hot positive). The
// ablation weights dw/ew default to the paper's implicit 1.
Stage1Losses stage1_total_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                               const Tensor& teacher_title_reprs, const Tensor& teacher_body_reprs,
                               const Tensor& student_title_reprs, const Tensor& student_body_reprs,
                               double t1, double beta1, double distill_weight = 1.0,
                               double emb_weight = 1.0);

// Per-sample teacher weights: softmax over -ce_i * omega. The CE values are
// treated as constants; omega stays differentiable.
Tensor teacher_weights(const std::vector<double>& per_teacher_ce, const Tensor& omega);

enum class SoftLabelCombine {
    kLogits,  // weighted sum of raw scores, then tempered softmax
    kProbs,   // weighted sum of tempered teacher distributions
};

// T^2 * CE(combine(teacher logits, w)/T, student/T). Gradients flow into the
// weights (and through them into omega) but never into the teacher logits.
Tensor stage2_distill_loss(const std::vector<Tensor>& teacher_logits, const Tensor& weights,
                           const Tensor& student_logits, double t2,
                           SoftLabelCombine combine = SoftLabelCombine::kLogits);

// Affine map W*rep + b; rep may be [d_in] or [rows, d_in].
Tensor project_teacher_rep(const Tensor& w, const Tensor& b, const Tensor& rep);

// Per-teacher dense layers that move teacher representations into the
// student's space.
struct TeacherProjection {
    Tensor news_w, news_b, user_w, user_b;

    static TeacherProjection init(int teacher_dim, int student_dim, RandomSource& rng);
    std::vector<NamedTensor> named_params(int teacher_index) const;
    std::vector<Tensor> trainable_params() const;
};

// sum_i w_i * (MSE(proj_news_i(teacher news), student news) +
//              MSE(proj_user_i(teacher user), student user))
Tensor stage2_emb_loss(const std::vector<Tensor>& teacher_news_reprs,
                       const std::vector<Tensor>& teacher_user_reprs,
                       const std::vector<TeacherProjection>& projections,
                       const Tensor& student_news_reprs, const Tensor& student_user_repr,
                       const Tensor& weights);

struct Stage2Losses {
    Tensor distill, emb, target, total;
};

Stage2Losses stage2_total_loss(const Tensor& distill, const Tensor& emb, const Tensor& target,
                               double beta2, double distill_weight = 1.0, double emb_weight = 1.0);

// M finetuned teachers (frozen), their projections, and the shared weighting
// parameter omega = softplus(rho) > 0.
struct TeacherEnsemble {
    std::vector<RecModel> teachers;
    std::vector<TeacherProjection> projections;
    Tensor rho;
    int student_news_dim = 0;

    static TeacherEnsemble init(std::vector<RecModel> teachers, int student_news_dim,
                                double omega_init, RandomSource& rng);
    int num_teachers() const { return static_cast<int>(teachers.size()); }
    Tensor omega() const;  // graph node, differentiable w.r.t. rho
    double omega_value() const;
    std::vector<Tensor> trainable_params() const;  // projections + rho, never the teachers
};

}  // namespace tinyrec
