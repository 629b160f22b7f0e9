#include <doctest.h>

#include <cmath>

#include "streamqc/losses.hpp"
#include "streamqc/mlp.hpp"

using namespace streamqc;
using namespace streamqc::detect;

namespace {

Eigen::MatrixXd random_features(int rows, int cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-2.0, 2.0);
    }
    return m;
}

// focal loss of the head output against labels, as a function of parameters
double head_loss(const Eigen::MatrixXd& feats, const MlpHead& head,
                 const std::vector<std::uint8_t>& labels) {
    const auto cache = mlp_forward_train(feats, head, nullptr);
    return losses::focal_loss(cache.probs, labels).value;
}

}  // namespace

TEST_CASE("gelu matches its derivative numerically") {
    for (const double x : {-3.0, -1.0, -0.1, 0.0, 0.5, 2.0}) {
        const double h = 1e-6;
        const double fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
        CHECK(gelu_derivative(x) == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("zero weights produce sigmoid(b_out) everywhere") {
    MlpHead head = MlpHead::initialized(11, 128, 64, 1);
    head.w1.setZero();
    head.b1.setZero();
    head.w2.setZero();
    head.b2.setZero();
    head.w_out.setZero();
    head.b_out = 0.3;
    Rng rng(3);
    const auto feats = random_features(20, 11, rng);
    const auto probs = mlp_forward(feats, head);
    const double expected = 1.0 / (1.0 + std::exp(-0.3));
    for (int t = 0; t < probs.size(); ++t) CHECK(probs(t) == doctest::Approx(expected));
}

TEST_CASE("eval mode is deterministic") {
    const MlpHead head = MlpHead::initialized(11, 128, 64, 5);
    Rng rng(4);
    const auto feats = random_features(30, 11, rng);
    const auto a = mlp_forward(feats, head);
    const auto b = mlp_forward(feats, head);
    CHECK(a == b);
}

TEST_CASE("mc dropout") {
    const MlpHead head = MlpHead::initialized(11, 128, 64, 6);
    Rng rng(5);
    const auto feats = random_features(20, 11, rng);
    SUBCASE("dropout_p = 0 gives zero uncertainty") {
        MlpHead no_drop = head;
        no_drop.dropout_p = 0.0;
        Rng mc(1);
        const auto r = mlp_forward_mc(feats, no_drop, 10, mc);
        for (int t = 0; t < r.stddev.size(); ++t) CHECK(r.stddev(t) == doctest::Approx(0.0));
    }
    SUBCASE("the mean estimate tightens roughly as 1/sqrt(N)") {
        // spread of repeated mean estimates at N and 16N passes
        auto spread = [&](int passes, std::uint64_t seed0) {
            std::vector<double> means;
            for (int rep = 0; rep < 12; ++rep) {
                Rng mc(seed0 + rep);
                means.push_back(mlp_forward_mc(feats, head, passes, mc).mean(0));
            }
            double m = 0.0;
            for (const double v : means) m += v;
            m /= means.size();
            double var = 0.0;
            for (const double v : means) var += (v - m) * (v - m);
            return std::sqrt(var / means.size());
        };
        const double s10 = spread(10, 100);
        const double s160 = spread(160, 500);
        // 16x the passes should shrink the spread by ~4; allow generous slack
        CHECK(s160 < s10 / 1.8);
    }
    SUBCASE("uncertainty is non-negative and present per timestep") {
        Rng mc(7);
        const auto r = mlp_forward_mc(feats, head, 10, mc);
        CHECK(r.mean.size() == feats.rows());
        CHECK(r.stddev.size() == feats.rows());
        for (int t = 0; t < r.stddev.size(); ++t) CHECK(r.stddev(t) >= 0.0);
    }
}

TEST_CASE("analytic backprop matches central finite differences") {
    // small head keeps the FD sweep fast; dropout disabled
    MlpHead head = MlpHead::initialized(5, 8, 6, 9);
    head.dropout_p = 0.0;
    Rng rng(10);
    const int T = 12;
    const auto feats = random_features(T, 5, rng);
    std::vector<std::uint8_t> labels(T);
    for (auto& y : labels) y = rng.bernoulli(0.4);

    for (int point = 0; point < 10; ++point) {
        // random parameter perturbation per check point
        MlpHead h = head;
        auto jitter = [&](Eigen::MatrixXd& m) {
            for (int i = 0; i < m.rows(); ++i) {
                for (int j = 0; j < m.cols(); ++j) m(i, j) += rng.uniform(-0.2, 0.2);
            }
        };
        jitter(h.w1);
        jitter(h.w2);
        for (int i = 0; i < h.b1.size(); ++i) h.b1(i) += rng.uniform(-0.2, 0.2);
        for (int i = 0; i < h.b2.size(); ++i) h.b2(i) += rng.uniform(-0.2, 0.2);
        for (int i = 0; i < h.w_out.size(); ++i) h.w_out(i) += rng.uniform(-0.2, 0.2);
        h.b_out += rng.uniform(-0.2, 0.2);

        const auto cache = mlp_forward_train(feats, h, nullptr);
        const auto focal = losses::focal_loss(cache.probs, labels);
        const Eigen::VectorXd dlogit = focal.grad.cwiseProduct(
            cache.probs.cwiseProduct((1.0 - cache.probs.array()).matrix()));
        const auto grads = mlp_backward(cache, h, dlogit);

        const double step = 1e-6;
        double worst = 0.0;
        auto check_param = [&](double* slot, double analytic) {
            const double saved = *slot;
            *slot = saved + step;
            const double up = head_loss(feats, h, labels);
            *slot = saved - step;
            const double dn = head_loss(feats, h, labels);
            *slot = saved;
            const double fd = (up - dn) / (2.0 * step);
            const double denom = std::max({std::fabs(fd), std::fabs(analytic), 1e-8});
            worst = std::max(worst, std::fabs(fd - analytic) / denom);
        };
        // sample a spread of parameters from every tensor
        for (int i = 0; i < h.w1.rows(); i += 3) {
            for (int j = 0; j < h.w1.cols(); j += 2) {
                check_param(&h.w1(i, j), grads.w1(i, j));
            }
        }
        for (int i = 0; i < h.w2.rows(); i += 2) check_param(&h.w2(i, 0), grads.w2(i, 0));
        for (int i = 0; i < h.b1.size(); i += 2) check_param(&h.b1(i), grads.b1(i));
        for (int i = 0; i < h.b2.size(); i += 2) check_param(&h.b2(i), grads.b2(i));
        for (int i = 0; i < h.w_out.size(); ++i) check_param(&h.w_out(i), grads.w_out(i));
        check_param(&h.b_out, grads.b_out);
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("threshold flags") {
    Eigen::VectorXd p(3);
    p << 0.5, 0.2, 0.9;
    const auto at_half = threshold_flags(p, 0.5);
    CHECK(at_half == std::vector<std::uint8_t>{1, 0, 1});  // >= convention
    CHECK(threshold_flags(p, 1.1) == std::vector<std::uint8_t>{0, 0, 0});
    CHECK(threshold_flags(p, 0.0) == std::vector<std::uint8_t>{1, 1, 1});
}

TEST_CASE("train_head behaviors") {
    Rng rng(21);
    SUBCASE("empty dataset is rejected") {
        CHECK_THROWS_AS(train_head({}, MlpHead::initialized(4, 8, 6, 1), {}),
                        std::invalid_argument);
    }
    SUBCASE("linearly separable toy features reach F1 = 1.0") {
        // feature 0 alone separates the classes
        std::vector<TrainSample> data;
        for (int w = 0; w < 30; ++w) {
            TrainSample s;
            s.features = Eigen::MatrixXd(40, 4);
            s.labels.resize(40);
            for (int t = 0; t < 40; ++t) {
                const bool pos = rng.bernoulli(0.4);
                s.labels[t] = pos;
                s.features(t, 0) = pos ? rng.uniform(1.0, 2.0) : rng.uniform(-2.0, -1.0);
                for (int c = 1; c < 4; ++c) s.features(t, c) = rng.uniform(-1.0, 1.0);
            }
            data.push_back(std::move(s));
        }
        MlpHead head = MlpHead::initialized(4, 16, 8, 2);
        head.dropout_p = 0.0;
        HeadTrainConfig cfg;
        cfg.max_epochs = 200;
        cfg.patience = 200;
        cfg.learning_rate = 0.5;
        cfg.batch_windows = 8;
        cfg.seed = 3;
        const auto trained = train_head(data, head, cfg);
        // training-set F1 at the end
        std::vector<std::uint8_t> flags, labels;
        for (const auto& s : data) {
            const auto f = threshold_flags(mlp_forward(s.features, trained.head), 0.5);
            flags.insert(flags.end(), f.begin(), f.end());
            labels.insert(labels.end(), s.labels.begin(), s.labels.end());
        }
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < flags.size(); ++i) {
            if (flags[i] && labels[i]) ++tp;
            if (flags[i] && !labels[i]) ++fp;
            if (!flags[i] && labels[i]) ++fn;
        }
        const double f1 = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        CHECK(f1 == doctest::Approx(1.0));
    }
    SUBCASE("all-zero labels warn and converge toward p = 0") {
        std::vector<TrainSample> data;
        for (int w = 0; w < 10; ++w) {
            TrainSample s;
            s.features = random_features(30, 4, rng);
            s.labels.assign(30, 0);
            data.push_back(std::move(s));
        }
        MlpHead head = MlpHead::initialized(4, 8, 6, 4);
        head.dropout_p = 0.0;
        HeadTrainConfig cfg;
        cfg.max_epochs = 120;
        cfg.patience = 120;
        cfg.learning_rate = 0.5;
        cfg.batch_windows = 4;
        const auto trained = train_head(data, head, cfg);
        REQUIRE(!trained.warnings.empty());
        CHECK(trained.warnings[0].find("single class") != std::string::npos);
        double max_p = 0.0;
        for (const auto& s : data) {
            const auto probs = mlp_forward(s.features, trained.head);
            max_p = std::max(max_p, probs.maxCoeff());
        }
        CHECK(max_p < 0.2);
    }
}

TEST_CASE("head JSON serialization round-trips") {
    const MlpHead head = MlpHead::initialized(11, 128, 64, 77);
    HeadTrainConfig cfg;
    const std::string text = head_to_json(head, cfg, "fingerprint123");
    const MlpHead back = head_from_json(text);
    CHECK(back.w1 == head.w1);
    CHECK(back.w2 == head.w2);
    CHECK(back.b1 == head.b1);
    CHECK(back.w_out == head.w_out);
    CHECK(back.b_out == head.b_out);
    CHECK(back.dropout_p == head.dropout_p);
    CHECK(text.find("fingerprint123") != std::string::npos);
    CHECK(text.find(kFeatureLayoutVersion) != std::string::npos);
}

TEST_CASE("non-finite parameters are rejected") {
    MlpHead head = MlpHead::initialized(4, 8, 6, 1);
    head.w1(0, 0) = std::numeric_limits<double>::quiet_NaN();
    Rng rng(1);
    const auto feats = random_features(5, 4, rng);
    CHECK_THROWS_AS(mlp_forward(feats, head), std::invalid_argument);
}
