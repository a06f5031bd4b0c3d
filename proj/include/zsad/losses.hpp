#pragma once

#include "zsad/common.hpp"
#include "zsad/prompts.hpp"

namespace zsad {

// Probability floor applied before every log in the loss functions.
inline constexpr double kProbClamp = 1e-7;

// Focal loss over a two-channel probability map (normal, abnormal) against a
// binary mask: mean over pixels of -alpha_t (1-p_t)^gamma log(p_t), where p_t
// is the predicted probability of the true class and alpha_t = alpha on
// anomalous pixels, 1-alpha on normal ones. Probabilities are clamped at
// kProbClamp before the log.
double focal_loss(const Matrix& pred_normal, const Matrix& pred_abnormal, const Mask& target,
                  double gamma, double alpha);

// Same value, plus d(loss)/d(pred) for both channels treated as independent
// inputs. Callers exploiting p_n = 1 - p_a fold the two gradients themselves.
double focal_loss_grad(const Matrix& pred_normal, const Matrix& pred_abnormal,
                       const Mask& target, double gamma, double alpha, Matrix* grad_normal,
                       Matrix* grad_abnormal);

// Soft Dice loss of the anomaly channel against a binary mask:
// 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps).
double dice_loss(const Matrix& pred_abnormal, const Mask& target, double eps);

double dice_loss_grad(const Matrix& pred_abnormal, const Mask& target, double eps,
                      Matrix* grad_abnormal);

// Cross-entropy of the temperature-softmax likelihood of a global embedding
// against an image-level label (the global-objective ablation).
double global_ce_loss(const Vec& embedding, const TextPrototypes& prototypes, double tau,
                      int label);

double global_ce_loss_grad(const Vec& embedding, const TextPrototypes& prototypes, double tau,
                           int label, Vec* grad_normal_proto, Vec* grad_abnormal_proto);

} // namespace zsad
