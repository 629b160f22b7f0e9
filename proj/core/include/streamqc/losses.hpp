#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace streamqc {
namespace losses {

// Objective weights. Channel weights follow the 12-channel layout: discharge
// 3.0, stage 2.5, seasonal 1.5, everything else (statics, scale embeddings,
// ranks) 1.0.
struct LossWeights {
    double w_discharge = 3.0;
    double w_stage = 2.5;
    double w_seasonal = 1.5;
    double w_static = 1.0;
    double mix_temporal = 0.6;
    double mix_variance = 0.4;
    double mix_scale = 0.3;
    double mix_diversity = 0.05;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    double finetune_focal = 1.5;
    double finetune_physics = 0.1;
    double rank_target = 10.0;
    double lambda_rank = 1.0;
    double lambda_rc = 1.0;
};

// Epoch argument of the fine-tuning lambda schedules (1-based; distinct from
// the numeric epsilon guard in normalization).
struct EpochIndex {
    int epoch = 1;
};

// Per-channel weight vector for a T x F tensor in the standard layout.
Eigen::VectorXd layout_weights(const LossWeights& w, int num_channels);

struct LossValue {
    double value = 0.0;
    Eigen::MatrixXd grad;  // d value / d pred, same shape as pred
};

// (1/T) sum_t sum_f w_f (pred - target)^2
LossValue weighted_recon_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                              const Eigen::VectorXd& channel_weights);

// Mean over t of the weighted squared difference between predicted and target
// first differences, restricted to `columns` (the dynamic Q/H channels).
LossValue temporal_consistency_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                                    const Eigen::VectorXd& channel_weights,
                                    const std::vector<int>& columns);

// sum_f (Var(pred_f) - Var(target_f))^2 with population variance.
LossValue variance_preservation_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

// (1/T) sum over the scale-embedding columns of squared error.
LossValue scale_consistency_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                                 const std::vector<int>& scale_columns);

// Count of singular values above 1e-3 * sigma_max (0 for an all-zero input).
int effective_rank(const Eigen::MatrixXd& m);

// -entropy(attention) + lambda_rank * max(0, rank_target - effective_rank(H)).
// Entropy is the mean row entropy of the row-stochastic attention matrix.
double diversity_loss(const Eigen::MatrixXd& attention, const Eigen::MatrixXd& hidden,
                      const LossWeights& w);

double pretrain_combined(double recon, double temporal, double variance, double scale,
                         double diversity, const LossWeights& w);

struct FocalResult {
    double value = 0.0;
    Eigen::VectorXd grad;  // d value / d probability
};

// Focal loss with the true-class probability convention: the modulating
// factor is (1 - p_t)^gamma with p_t = p for positives and 1 - p for
// negatives; alpha_t is alpha for positives and 1 - alpha for negatives.
// Probabilities are clamped to [1e-6, 1 - 1e-6] for log stability.
FocalResult focal_loss(const Eigen::VectorXd& probabilities,
                       const std::vector<std::uint8_t>& labels, double alpha = 0.25,
                       double gamma = 2.0);

// MSE over masked (anomalous) timesteps against the clean target; 0 when the
// mask is empty (clean windows are legal fine-tuning inputs).
double corruption_recon_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& clean,
                             const std::vector<std::uint8_t>& mask);

// MSE over unmasked timesteps against the observed values; 0 when everything
// is masked.
double clean_preservation_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& observed,
                               const std::vector<std::uint8_t>& mask);

// (1/(T-1)) sum ReLU(-dQ * dH) + lambda_rc * mean(d_rc).
double physics_loss(const std::vector<double>& pred_q, const std::vector<double>& pred_h,
                    const std::vector<double>& rating_deviation, double lambda_rc);

// lambda_c = 0.25 * min(1, epoch/3), lambda_p = 0.05 * min(1, epoch/3).
std::pair<double, double> lambda_schedules(EpochIndex epoch);

// 1.5 * focal + lambda_c * corrupt + lambda_p * preserve + 0.1 * physics.
double finetune_combined(double focal, double corrupt, double preserve, double physics,
                         EpochIndex epoch, const LossWeights& w);

}  // namespace losses
}  // namespace streamqc
