#include "streamqc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "streamqc/types.hpp"

namespace streamqc {
namespace losses {

Eigen::VectorXd layout_weights(const LossWeights& w, int num_channels) {
    Eigen::VectorXd out = Eigen::VectorXd::Constant(num_channels, w.w_static);
    if (kChanDischarge < num_channels) out(kChanDischarge) = w.w_discharge;
    if (kChanStage < num_channels) out(kChanStage) = w.w_stage;
    if (kChanSeasonalQ < num_channels) out(kChanSeasonalQ) = w.w_seasonal;
    if (kChanSeasonalH < num_channels) out(kChanSeasonalH) = w.w_seasonal;
    return out;
}

namespace {

void check_shapes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* who) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch");
    }
}

}  // namespace

LossValue weighted_recon_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                              const Eigen::VectorXd& channel_weights) {
    check_shapes(pred, target, "weighted_recon_loss");
    const double T = static_cast<double>(pred.rows());
    LossValue out;
    out.grad = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
    for (int f = 0; f < pred.cols(); ++f) {
        const double w = channel_weights(f);
        const Eigen::VectorXd err = pred.col(f) - target.col(f);
        out.value += w * err.squaredNorm() / T;
        out.grad.col(f) = (2.0 * w / T) * err;
    }
    return out;
}

LossValue temporal_consistency_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                                    const Eigen::VectorXd& channel_weights,
                                    const std::vector<int>& columns) {
    check_shapes(pred, target, "temporal_consistency_loss");
    const Eigen::Index T = pred.rows();
    LossValue out;
    out.grad = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
    if (T < 2) return out;
    const double denom = static_cast<double>(T - 1);
    for (const int f : columns) {
        const double w = channel_weights(f);
        for (Eigen::Index t = 0; t + 1 < T; ++t) {
            const double dp = pred(t + 1, f) - pred(t, f);
            const double dt = target(t + 1, f) - target(t, f);
            const double d = dp - dt;
            out.value += w * d * d / denom;
            out.grad(t + 1, f) += 2.0 * w * d / denom;
            out.grad(t, f) -= 2.0 * w * d / denom;
        }
    }
    return out;
}

LossValue variance_preservation_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    check_shapes(pred, target, "variance_preservation_loss");
    const double T = static_cast<double>(pred.rows());
    LossValue out;
    out.grad = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
    for (int f = 0; f < pred.cols(); ++f) {
        const double mp = pred.col(f).mean();
        const double mt = target.col(f).mean();
        const double vp = (pred.col(f).array() - mp).square().sum() / T;
        const double vt = (target.col(f).array() - mt).square().sum() / T;
        const double d = vp - vt;
        out.value += d * d;
        // dVar/dpred_t = (2/T)(pred_t - mean)
        out.grad.col(f) = (2.0 * d) * (2.0 / T) * (pred.col(f).array() - mp).matrix();
    }
    return out;
}

LossValue scale_consistency_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                                 const std::vector<int>& scale_columns) {
    check_shapes(pred, target, "scale_consistency_loss");
    const double T = static_cast<double>(pred.rows());
    LossValue out;
    out.grad = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
    for (const int f : scale_columns) {
        const Eigen::VectorXd err = pred.col(f) - target.col(f);
        out.value += err.squaredNorm() / T;
        out.grad.col(f) = (2.0 / T) * err;
    }
    return out;
}

int effective_rank(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0.0) return 0;
    const double cutoff = 1e-3 * sv(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) ++rank;
    }
    return rank;
}

double diversity_loss(const Eigen::MatrixXd& attention, const Eigen::MatrixXd& hidden,
                      const LossWeights& w) {
    double entropy = 0.0;
    for (Eigen::Index i = 0; i < attention.rows(); ++i) {
        for (Eigen::Index j = 0; j < attention.cols(); ++j) {
            const double a = attention(i, j);
            if (a > 0.0) entropy -= a * std::log(a);
        }
    }
    if (attention.rows() > 0) entropy /= static_cast<double>(attention.rows());
    const double rank_gap =
        std::max(0.0, w.rank_target - static_cast<double>(effective_rank(hidden)));
    return -entropy + w.lambda_rank * rank_gap;
}

double pretrain_combined(double recon, double temporal, double variance, double scale,
                         double diversity, const LossWeights& w) {
    return recon + w.mix_temporal * temporal + w.mix_variance * variance + w.mix_scale * scale +
           w.mix_diversity * diversity;
}

FocalResult focal_loss(const Eigen::VectorXd& probabilities,
                       const std::vector<std::uint8_t>& labels, double alpha, double gamma) {
    if (static_cast<std::size_t>(probabilities.size()) != labels.size()) {
        throw std::invalid_argument("focal_loss: size mismatch");
    }
    const Eigen::Index T = probabilities.size();
    FocalResult out;
    out.grad = Eigen::VectorXd::Zero(T);
    if (T == 0) return out;
    constexpr double kClip = 1e-6;
    for (Eigen::Index t = 0; t < T; ++t) {
        const double p = std::clamp(probabilities(t), kClip, 1.0 - kClip);
        const bool clipped = probabilities(t) < kClip || probabilities(t) > 1.0 - kClip;
        double loss, dloss;
        if (labels[t]) {
            // -alpha (1-p)^g ln p
            const double u = 1.0 - p;
            loss = -alpha * std::pow(u, gamma) * std::log(p);
            dloss = alpha * (gamma * std::pow(u, gamma - 1.0) * std::log(p) -
                             std::pow(u, gamma) / p);
        } else {
            // -(1-alpha) p^g ln(1-p)
            loss = -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
            dloss = -(1.0 - alpha) * (gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - p) -
                                      std::pow(p, gamma) / (1.0 - p));
        }
        out.value += loss / static_cast<double>(T);
        out.grad(t) = clipped ? 0.0 : dloss / static_cast<double>(T);
    }
    return out;
}

double corruption_recon_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& clean,
                             const std::vector<std::uint8_t>& mask) {
    check_shapes(pred, clean, "corruption_recon_loss");
    if (static_cast<std::size_t>(pred.rows()) != mask.size()) {
        throw std::invalid_argument("corruption_recon_loss: mask size mismatch");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index t = 0; t < pred.rows(); ++t) {
        if (!mask[static_cast<std::size_t>(t)]) continue;
        sum += (pred.row(t) - clean.row(t)).squaredNorm();
        ++count;
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double clean_preservation_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& observed,
                               const std::vector<std::uint8_t>& mask) {
    check_shapes(pred, observed, "clean_preservation_loss");
    if (static_cast<std::size_t>(pred.rows()) != mask.size()) {
        throw std::invalid_argument("clean_preservation_loss: mask size mismatch");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index t = 0; t < pred.rows(); ++t) {
        if (mask[static_cast<std::size_t>(t)]) continue;
        sum += (pred.row(t) - observed.row(t)).squaredNorm();
        ++count;
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double physics_loss(const std::vector<double>& pred_q, const std::vector<double>& pred_h,
                    const std::vector<double>& rating_deviation, double lambda_rc) {
    if (pred_q.size() != pred_h.size()) {
        throw std::invalid_argument("physics_loss: Q/H size mismatch");
    }
    double coupling = 0.0;
    const std::size_t T = pred_q.size();
    if (T >= 2) {
        for (std::size_t t = 0; t + 1 < T; ++t) {
            const double dq = pred_q[t + 1] - pred_q[t];
            const double dh = pred_h[t + 1] - pred_h[t];
            coupling += std::max(0.0, -dq * dh);
        }
        coupling /= static_cast<double>(T - 1);
    }
    double d_rc = 0.0;
    if (!rating_deviation.empty()) {
        for (const double d : rating_deviation) d_rc += d;
        d_rc /= static_cast<double>(rating_deviation.size());
    }
    return coupling + lambda_rc * d_rc;
}

std::pair<double, double> lambda_schedules(EpochIndex epoch) {
    if (epoch.epoch < 1) throw std::invalid_argument("lambda_schedules: epoch must be >= 1");
    const double ramp = std::min(1.0, static_cast<double>(epoch.epoch) / 3.0);
    return {0.25 * ramp, 0.05 * ramp};
}

double finetune_combined(double focal, double corrupt, double preserve, double physics,
                         EpochIndex epoch, const LossWeights& w) {
    const auto [lambda_c, lambda_p] = lambda_schedules(epoch);
    return w.finetune_focal * focal + lambda_c * corrupt + lambda_p * preserve +
           w.finetune_physics * physics;
}

}  // namespace losses
}  // namespace streamqc
