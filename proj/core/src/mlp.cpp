#include "streamqc/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "streamqc/losses.hpp"

namespace streamqc {
namespace detect {

using nlohmann::json;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

MlpHead MlpHead::initialized(int input_dim, int hidden1, int hidden2, std::uint64_t seed) {
    Rng rng(seed);
    auto he_matrix = [&](int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        const double scale = std::sqrt(2.0 / static_cast<double>(cols));
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) m(i, j) = rng.normal() * scale;
        }
        return m;
    };
    MlpHead head;
    head.w1 = he_matrix(hidden1, input_dim);
    head.b1 = Eigen::VectorXd::Zero(hidden1);
    head.w2 = he_matrix(hidden2, hidden1);
    head.b2 = Eigen::VectorXd::Zero(hidden2);
    head.w_out = he_matrix(1, hidden2).row(0).transpose();
    head.b_out = 0.0;
    return head;
}

namespace {

void check_finite(const MlpHead& head) {
    const bool ok = head.w1.allFinite() && head.b1.allFinite() && head.w2.allFinite() &&
                    head.b2.allFinite() && head.w_out.allFinite() && std::isfinite(head.b_out);
    if (!ok) throw std::invalid_argument("mlp: non-finite parameters");
}

inline double sigmoid(double z) {
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

ForwardCache mlp_forward_train(const Eigen::MatrixXd& features, const MlpHead& head,
                               Rng* dropout_rng) {
    check_finite(head);
    if (features.cols() != head.w1.cols()) {
        throw std::invalid_argument("mlp_forward: feature dimension mismatch");
    }
    ForwardCache c;
    c.input = features;
    const Eigen::Index T = features.rows();
    const double keep = 1.0 - head.dropout_p;

    auto dropout_mask = [&](Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Ones(rows, cols);
        if (dropout_rng != nullptr && head.dropout_p > 0.0) {
            for (Eigen::Index i = 0; i < rows; ++i) {
                for (Eigen::Index j = 0; j < cols; ++j) {
                    m(i, j) = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
                }
            }
        }
        return m;
    };

    c.z1 = (features * head.w1.transpose()).rowwise() + head.b1.transpose();
    c.a1 = c.z1.unaryExpr([](double x) { return gelu(x); });
    c.mask1 = dropout_mask(T, c.a1.cols());
    c.drop1 = c.a1.cwiseProduct(c.mask1);

    c.z2 = (c.drop1 * head.w2.transpose()).rowwise() + head.b2.transpose();
    c.a2 = c.z2.unaryExpr([](double x) { return gelu(x); });
    c.mask2 = dropout_mask(T, c.a2.cols());
    c.drop2 = c.a2.cwiseProduct(c.mask2);

    c.logits = (c.drop2 * head.w_out).array() + head.b_out;
    c.probs = c.logits.unaryExpr([](double z) { return sigmoid(z); });
    return c;
}

Eigen::VectorXd mlp_forward(const Eigen::MatrixXd& features, const MlpHead& head) {
    return mlp_forward_train(features, head, nullptr).probs;
}

McResult mlp_forward_mc(const Eigen::MatrixXd& features, const MlpHead& head, int passes,
                        Rng& rng) {
    if (passes < 1) throw std::invalid_argument("mlp_forward_mc: passes must be >= 1");
    const Eigen::Index T = features.rows();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(T);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(T);
    for (int p = 0; p < passes; ++p) {
        const Eigen::VectorXd probs = mlp_forward_train(features, head, &rng).probs;
        sum += probs;
        sum_sq += probs.cwiseProduct(probs);
    }
    McResult out;
    out.mean = sum / static_cast<double>(passes);
    out.stddev = (sum_sq / static_cast<double>(passes) - out.mean.cwiseProduct(out.mean))
                     .cwiseMax(0.0)
                     .cwiseSqrt();
    return out;
}

HeadGradients mlp_backward(const ForwardCache& c, const MlpHead& head,
                           const Eigen::VectorXd& dloss_dlogit) {
    HeadGradients g;
    // output layer
    g.w_out = c.drop2.transpose() * dloss_dlogit;
    g.b_out = dloss_dlogit.sum();

    // hidden layer 2
    Eigen::MatrixXd d_drop2 = dloss_dlogit * head.w_out.transpose();  // T x h2
    Eigen::MatrixXd d_z2 = d_drop2.cwiseProduct(c.mask2).cwiseProduct(
        c.z2.unaryExpr([](double x) { return gelu_derivative(x); }));
    g.w2 = d_z2.transpose() * c.drop1;
    g.b2 = d_z2.colwise().sum().transpose();

    // hidden layer 1
    Eigen::MatrixXd d_drop1 = d_z2 * head.w2;  // T x h1
    Eigen::MatrixXd d_z1 = d_drop1.cwiseProduct(c.mask1).cwiseProduct(
        c.z1.unaryExpr([](double x) { return gelu_derivative(x); }));
    g.w1 = d_z1.transpose() * c.input;
    g.b1 = d_z1.colwise().sum().transpose();
    return g;
}

std::vector<std::uint8_t> threshold_flags(const Eigen::VectorXd& probabilities,
                                          double threshold) {
    std::vector<std::uint8_t> flags(static_cast<std::size_t>(probabilities.size()), 0);
    for (Eigen::Index t = 0; t < probabilities.size(); ++t) {
        flags[static_cast<std::size_t>(t)] = probabilities(t) >= threshold ? 1 : 0;
    }
    return flags;
}

namespace {

double micro_f1(const std::vector<std::uint8_t>& flags, const std::vector<std::uint8_t>& labels) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (flags[i] && labels[i]) ++tp;
        if (flags[i] && !labels[i]) ++fp;
        if (!flags[i] && labels[i]) ++fn;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

}  // namespace

TrainedHead train_head(const std::vector<TrainSample>& data, MlpHead head,
                       const HeadTrainConfig& config) {
    if (data.empty()) throw std::invalid_argument("train_head: empty dataset");
    TrainedHead out;

    bool any_pos = false, any_neg = false;
    for (const auto& s : data) {
        for (const auto y : s.labels) (y ? any_pos : any_neg) = true;
    }
    if (!any_pos || !any_neg) {
        out.warnings.push_back("dataset contains a single class, training proceeds");
    }

    // Seeded split into train / held-out validation windows.
    Rng rng(config.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(
                                    0, static_cast<std::int64_t>(i) - 1))]);
    }
    std::size_t n_val =
        static_cast<std::size_t>(std::floor(config.val_fraction * static_cast<double>(data.size())));
    if (n_val == 0 && data.size() > 1) n_val = 1;
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val),
                                       order.end());
    if (train_idx.empty()) train_idx = val_idx;

    auto evaluate_val = [&](const MlpHead& h) {
        std::vector<std::uint8_t> flags, labels;
        for (const std::size_t i : val_idx.empty() ? train_idx : val_idx) {
            const Eigen::VectorXd probs = mlp_forward(data[i].features, h);
            const auto f = threshold_flags(probs, config.threshold);
            flags.insert(flags.end(), f.begin(), f.end());
            labels.insert(labels.end(), data[i].labels.begin(), data[i].labels.end());
        }
        return micro_f1(flags, labels);
    };

    MlpHead best = head;
    double best_f1 = -1.0;
    int best_epoch = 0;
    int since_best = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        // cosine-decayed step size
        const double progress = static_cast<double>(epoch - 1) /
                                static_cast<double>(std::max(1, config.max_epochs));
        const double lr = config.learning_rate * 0.5 * (1.0 + std::cos(M_PI * progress));

        for (std::size_t i = train_idx.size(); i > 1; --i) {
            std::swap(train_idx[i - 1], train_idx[static_cast<std::size_t>(rng.uniform_int(
                                            0, static_cast<std::int64_t>(i) - 1))]);
        }

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(config.batch_windows)) {
            const std::size_t end = std::min(
                train_idx.size(), start + static_cast<std::size_t>(config.batch_windows));
            Eigen::Index rows = 0;
            for (std::size_t i = start; i < end; ++i) rows += data[train_idx[i]].features.rows();
            Eigen::MatrixXd feats(rows, head.input_dim());
            std::vector<std::uint8_t> labels;
            labels.reserve(static_cast<std::size_t>(rows));
            Eigen::Index at = 0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = data[train_idx[i]];
                feats.middleRows(at, s.features.rows()) = s.features;
                labels.insert(labels.end(), s.labels.begin(), s.labels.end());
                at += s.features.rows();
            }

            ForwardCache cache = mlp_forward_train(feats, head, &rng);
            const auto focal =
                losses::focal_loss(cache.probs, labels, config.focal_alpha, config.focal_gamma);
            epoch_loss += focal.value;
            ++batches;

            // chain through the sigmoid: dL/dz = dL/dp * p(1-p)
            Eigen::VectorXd dlogit =
                focal.grad.cwiseProduct(cache.probs.cwiseProduct(
                    (1.0 - cache.probs.array()).matrix()));
            const HeadGradients g = mlp_backward(cache, head, dlogit);
            head.w1 -= lr * g.w1;
            head.b1 -= lr * g.b1;
            head.w2 -= lr * g.w2;
            head.b2 -= lr * g.b2;
            head.w_out -= lr * g.w_out;
            head.b_out -= lr * g.b_out;
        }

        const double val_f1 = evaluate_val(head);
        out.history.push_back({epoch, batches ? epoch_loss / static_cast<double>(batches) : 0.0,
                               val_f1});
        if (val_f1 > best_f1) {
            best_f1 = val_f1;
            best = head;
            best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }

    out.head = std::move(best);
    out.best_epoch = best_epoch;
    out.best_val_f1 = best_f1;
    return out;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows.at(i).at(j).get<double>();
    }
    return m;
}

}  // namespace

std::string head_to_json(const MlpHead& head, const HeadTrainConfig& config,
                         const std::string& corpus_fingerprint) {
    json j;
    j["feature_layout"] = kFeatureLayoutVersion;
    j["dims"] = {head.w1.cols(), head.w1.rows(), head.w2.rows()};
    j["dropout_p"] = head.dropout_p;
    j["w1"] = matrix_to_json(head.w1);
    j["b1"] = std::vector<double>(head.b1.data(), head.b1.data() + head.b1.size());
    j["w2"] = matrix_to_json(head.w2);
    j["b2"] = std::vector<double>(head.b2.data(), head.b2.data() + head.b2.size());
    j["w_out"] = std::vector<double>(head.w_out.data(), head.w_out.data() + head.w_out.size());
    j["b_out"] = head.b_out;
    j["hyper"]["batch_windows"] = config.batch_windows;
    j["hyper"]["learning_rate"] = config.learning_rate;
    j["hyper"]["max_epochs"] = config.max_epochs;
    j["hyper"]["patience"] = config.patience;
    j["hyper"]["focal_alpha"] = config.focal_alpha;
    j["hyper"]["focal_gamma"] = config.focal_gamma;
    j["hyper"]["threshold"] = config.threshold;
    j["hyper"]["seed"] = config.seed;
    j["corpus_fingerprint"] = corpus_fingerprint;
    return j.dump(2);
}

MlpHead head_from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.at("feature_layout").get<std::string>() != kFeatureLayoutVersion) {
        throw std::runtime_error("head file declares an unsupported feature layout");
    }
    MlpHead head;
    head.w1 = matrix_from_json(j.at("w1"));
    head.w2 = matrix_from_json(j.at("w2"));
    const auto b1 = j.at("b1").get<std::vector<double>>();
    const auto b2 = j.at("b2").get<std::vector<double>>();
    const auto wo = j.at("w_out").get<std::vector<double>>();
    head.b1 = Eigen::Map<const Eigen::VectorXd>(b1.data(), static_cast<Eigen::Index>(b1.size()));
    head.b2 = Eigen::Map<const Eigen::VectorXd>(b2.data(), static_cast<Eigen::Index>(b2.size()));
    head.w_out = Eigen::Map<const Eigen::VectorXd>(wo.data(), static_cast<Eigen::Index>(wo.size()));
    head.b_out = j.at("b_out").get<double>();
    head.dropout_p = j.at("dropout_p").get<double>();
    check_finite(head);
    return head;
}

}  // namespace detect
}  // namespace streamqc
