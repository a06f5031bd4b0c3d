#include "zsad/losses.hpp"

#include <cmath>

#include "zsad/errors.hpp"
#include "zsad/scoring.hpp"

namespace zsad {

namespace {

void check_map_vs_mask(const Matrix& pred, const Mask& target, const char* op) {
    if (pred.rows != target.height || pred.cols != target.width) {
        throw InputError(std::string(op) + ": prediction " + std::to_string(pred.rows) + "x" +
                         std::to_string(pred.cols) + " vs mask " + std::to_string(target.height) +
                         "x" + std::to_string(target.width));
    }
}

// Per-pixel focal term and its derivative in the true-class probability.
// loss = -a * (1-p)^gamma * log(max(p, clamp))
double focal_term(double p, double a, double gamma, double* dloss_dp) {
    const double q = p < kProbClamp ? kProbClamp : p;
    const double one_minus = 1.0 - p;
    const double pow_term = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
    const double loss = -a * pow_term * std::log(q);
    if (dloss_dp != nullptr) {
        double d = 0.0;
        if (gamma > 0.0) {
            d += gamma * std::pow(one_minus, gamma - 1.0) * std::log(q);
        }
        if (p >= kProbClamp) {
            d -= pow_term / q;
        }
        *dloss_dp = a * d;
    }
    return loss;
}

} // namespace

double focal_loss(const Matrix& pred_normal, const Matrix& pred_abnormal, const Mask& target,
                  double gamma, double alpha) {
    return focal_loss_grad(pred_normal, pred_abnormal, target, gamma, alpha, nullptr, nullptr);
}

double focal_loss_grad(const Matrix& pred_normal, const Matrix& pred_abnormal,
                       const Mask& target, double gamma, double alpha, Matrix* grad_normal,
                       Matrix* grad_abnormal) {
    check_map_vs_mask(pred_abnormal, target, "focal_loss");
    check_map_vs_mask(pred_normal, target, "focal_loss");
    if (grad_normal != nullptr) *grad_normal = Matrix(target.height, target.width, 0.0);
    if (grad_abnormal != nullptr) *grad_abnormal = Matrix(target.height, target.width, 0.0);

    const double inv_n = 1.0 / static_cast<double>(target.data.size());
    double total = 0.0;
    for (std::size_t i = 0; i < target.data.size(); ++i) {
        const bool anomalous = target.data[i] != 0;
        const double p_t = anomalous ? pred_abnormal.data[i] : pred_normal.data[i];
        const double a_t = anomalous ? alpha : 1.0 - alpha;
        double d = 0.0;
        total += focal_term(p_t, a_t, gamma, &d);
        if (anomalous) {
            if (grad_abnormal != nullptr) grad_abnormal->data[i] = d * inv_n;
        } else {
            if (grad_normal != nullptr) grad_normal->data[i] = d * inv_n;
        }
    }
    return total * inv_n;
}

double dice_loss(const Matrix& pred_abnormal, const Mask& target, double eps) {
    return dice_loss_grad(pred_abnormal, target, eps, nullptr);
}

double dice_loss_grad(const Matrix& pred_abnormal, const Mask& target, double eps,
                      Matrix* grad_abnormal) {
    check_map_vs_mask(pred_abnormal, target, "dice_loss");

    double intersection = 0.0;
    double pred_sum = 0.0;
    double target_sum = 0.0;
    for (std::size_t i = 0; i < target.data.size(); ++i) {
        const double p = pred_abnormal.data[i];
        pred_sum += p;
        if (target.data[i] != 0) {
            intersection += p;
            target_sum += 1.0;
        }
    }
    const double numer = 2.0 * intersection + eps;
    const double denom = pred_sum + target_sum + eps;
    const double loss = 1.0 - numer / denom;

    if (grad_abnormal != nullptr) {
        *grad_abnormal = Matrix(target.height, target.width, 0.0);
        const double inv_d2 = 1.0 / (denom * denom);
        for (std::size_t i = 0; i < target.data.size(); ++i) {
            const double t = target.data[i] != 0 ? 1.0 : 0.0;
            grad_abnormal->data[i] = -(2.0 * t * denom - numer) * inv_d2;
        }
    }
    return loss;
}

double global_ce_loss(const Vec& embedding, const TextPrototypes& prototypes, double tau,
                      int label) {
    return global_ce_loss_grad(embedding, prototypes, tau, label, nullptr, nullptr);
}

double global_ce_loss_grad(const Vec& embedding, const TextPrototypes& prototypes, double tau,
                           int label, Vec* grad_normal_proto, Vec* grad_abnormal_proto) {
    if (label != 0 && label != 1) throw InputError("global_ce_loss: label must be 0 or 1");
    const ClassLikelihood p = class_likelihood(embedding, prototypes, tau);
    const double p_true = label == 1 ? p.abnormal : p.normal;
    const double q = p_true < kProbClamp ? kProbClamp : p_true;
    const double loss = -std::log(q);

    if (grad_normal_proto != nullptr || grad_abnormal_proto != nullptr) {
        // d(-log p_y)/d l_a with l = (s_a - s_n)/tau: p_a - y; zero inside the clamp.
        double dl_a = 0.0;
        if (p_true >= kProbClamp) dl_a = p.abnormal - static_cast<double>(label);
        const Vec unit = l2_normalize(embedding);
        if (grad_abnormal_proto != nullptr) {
            grad_abnormal_proto->assign(unit.size(), 0.0);
            for (std::size_t i = 0; i < unit.size(); ++i) {
                (*grad_abnormal_proto)[i] = dl_a * unit[i] / tau;
            }
        }
        if (grad_normal_proto != nullptr) {
            grad_normal_proto->assign(unit.size(), 0.0);
            for (std::size_t i = 0; i < unit.size(); ++i) {
                (*grad_normal_proto)[i] = -dl_a * unit[i] / tau;
            }
        }
    }
    return loss;
}

} // namespace zsad
