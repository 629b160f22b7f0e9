#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "streamqc/rng.hpp"

namespace streamqc {
namespace detect {

// Detection-feature layout identifier; trained heads declare the layout they
// were fitted on and refuse to score a different one.
inline constexpr const char* kFeatureLayoutVersion = "detfeat-v1";

// Two-hidden-layer MLP scoring head (in -> 128 -> 64 -> 1) with GELU
// activations and dropout after each hidden activation.
struct MlpHead {
    Eigen::MatrixXd w1;  // h1 x in
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // h2 x h1
    Eigen::VectorXd b2;
    Eigen::VectorXd w_out;  // h2
    double b_out = 0.0;
    double dropout_p = 0.2;

    int input_dim() const { return static_cast<int>(w1.cols()); }

    static MlpHead initialized(int input_dim, int hidden1, int hidden2, std::uint64_t seed);
};

double gelu(double x);
double gelu_derivative(double x);

// Deterministic inference pass (no dropout): per-row probability.
Eigen::VectorXd mlp_forward(const Eigen::MatrixXd& features, const MlpHead& head);

// Monte Carlo dropout: `passes` stochastic forward passes; per-row mean and
// population standard deviation of the probabilities.
struct McResult {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;
};
McResult mlp_forward_mc(const Eigen::MatrixXd& features, const MlpHead& head, int passes,
                        Rng& rng);

// Training-mode forward with cached intermediates. dropout_rng == nullptr
// disables dropout (used by gradient checks).
struct ForwardCache {
    Eigen::MatrixXd input;
    Eigen::MatrixXd z1, a1, drop1;  // pre-activation, post-GELU, post-dropout
    Eigen::MatrixXd z2, a2, drop2;
    Eigen::MatrixXd mask1, mask2;  // inverted-dropout multipliers
    Eigen::VectorXd logits;
    Eigen::VectorXd probs;
};
ForwardCache mlp_forward_train(const Eigen::MatrixXd& features, const MlpHead& head,
                               Rng* dropout_rng);

struct HeadGradients {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
    Eigen::VectorXd w_out;
    double b_out = 0.0;
};

// Exact backpropagation. dloss_dlogit is dL/dz for the output logit of each
// row (the caller chains the loss's probability gradient through the sigmoid).
HeadGradients mlp_backward(const ForwardCache& cache, const MlpHead& head,
                           const Eigen::VectorXd& dloss_dlogit);

// flag iff p >= threshold
std::vector<std::uint8_t> threshold_flags(const Eigen::VectorXd& probabilities, double threshold);

struct TrainSample {
    Eigen::MatrixXd features;          // T x input_dim
    std::vector<std::uint8_t> labels;  // T
};

struct HeadTrainConfig {
    int batch_windows = 256;
    double learning_rate = 1e-3;  // cosine-decayed over max_epochs
    int max_epochs = 50;
    int patience = 5;  // early stop on held-out F1
    double val_fraction = 0.2;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    double threshold = 0.5;
    std::uint64_t seed = 1;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_f1 = 0.0;
};

struct TrainedHead {
    MlpHead head;
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_f1 = 0.0;
    std::vector<std::string> warnings;
};

// Minibatch gradient descent on focal loss with early stopping on held-out
// F1. Throws std::invalid_argument on an empty dataset; an all-one-class
// dataset trains anyway with a warning.
TrainedHead train_head(const std::vector<TrainSample>& data, MlpHead head,
                       const HeadTrainConfig& config);

// Self-describing JSON serialization (layout version, dims, hyperparameters,
// training-corpus fingerprint).
std::string head_to_json(const MlpHead& head, const HeadTrainConfig& config,
                         const std::string& corpus_fingerprint);
MlpHead head_from_json(const std::string& text);

}  // namespace detect
}  // namespace streamqc
