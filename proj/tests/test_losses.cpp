#include <doctest.h>

#include <cmath>
#include <functional>

#include "streamqc/losses.hpp"
#include "streamqc/rng.hpp"
#include "streamqc/types.hpp"

using namespace streamqc;
using namespace streamqc::losses;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
    }
    return m;
}

// central finite differences over every element of pred
double max_grad_rel_error(const std::function<double(const Eigen::MatrixXd&)>& f,
                          const Eigen::MatrixXd& pred, const Eigen::MatrixXd& grad) {
    const double h = 1e-6;
    double worst = 0.0;
    for (int i = 0; i < pred.rows(); ++i) {
        for (int j = 0; j < pred.cols(); ++j) {
            Eigen::MatrixXd up = pred, dn = pred;
            up(i, j) += h;
            dn(i, j) -= h;
            const double fd = (f(up) - f(dn)) / (2.0 * h);
            const double g = grad(i, j);
            const double denom = std::max({std::fabs(fd), std::fabs(g), 1e-8});
            worst = std::max(worst, std::fabs(fd - g) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("weighted reconstruction loss") {
    Rng rng(1);
    SUBCASE("zero at pred == target") {
        const auto t = random_matrix(8, 3, rng);
        const Eigen::VectorXd w = Eigen::VectorXd::Ones(3);
        CHECK(weighted_recon_loss(t, t, w).value == 0.0);
    }
    SUBCASE("single element, w = 3, err = 2 -> 12") {
        Eigen::MatrixXd pred(1, 1), target(1, 1);
        pred << 3.0;
        target << 1.0;
        Eigen::VectorXd w(1);
        w << 3.0;
        CHECK(weighted_recon_loss(pred, target, w).value == doctest::Approx(12.0));
    }
    SUBCASE("gradient matches finite differences") {
        const auto target = random_matrix(6, 4, rng);
        const auto pred = random_matrix(6, 4, rng);
        Eigen::VectorXd w(4);
        w << 3.0, 2.5, 1.5, 1.0;
        const auto loss = weighted_recon_loss(pred, target, w);
        const double err = max_grad_rel_error(
            [&](const Eigen::MatrixXd& p) { return weighted_recon_loss(p, target, w).value; },
            pred, loss.grad);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("temporal consistency loss") {
    Rng rng(2);
    Eigen::VectorXd w(2);
    w << 3.0, 2.5;
    const std::vector<int> cols = {0, 1};
    SUBCASE("shift invariance: pred = target + constant") {
        const auto target = random_matrix(10, 2, rng);
        Eigen::MatrixXd pred = target;
        pred.array() += 5.0;
        CHECK(temporal_consistency_loss(pred, target, w, cols).value ==
              doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("one extra unit step contributes w * 2 / (T-1)") {
        const int T = 10;
        Eigen::MatrixXd target = Eigen::MatrixXd::Zero(T, 2);
        Eigen::MatrixXd pred = target;
        pred(4, 0) += 1.0;  // two affected difference terms on channel 0
        CHECK(temporal_consistency_loss(pred, target, w, cols).value ==
              doctest::Approx(3.0 * 2.0 / (T - 1)));
    }
    SUBCASE("gradient matches finite differences") {
        const auto target = random_matrix(9, 2, rng);
        const auto pred = random_matrix(9, 2, rng);
        const auto loss = temporal_consistency_loss(pred, target, w, cols);
        const double err = max_grad_rel_error(
            [&](const Eigen::MatrixXd& p) {
                return temporal_consistency_loss(p, target, w, cols).value;
            },
            pred, loss.grad);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("variance preservation loss") {
    Rng rng(3);
    SUBCASE("zero at pred == target") {
        const auto t = random_matrix(12, 3, rng);
        CHECK(variance_preservation_loss(t, t).value == doctest::Approx(0.0));
    }
    SUBCASE("mean-collapsed prediction pays sum of squared variances") {
        const auto target = random_matrix(20, 2, rng);
        Eigen::MatrixXd pred(20, 2);
        double expected = 0.0;
        for (int c = 0; c < 2; ++c) {
            const double m = target.col(c).mean();
            pred.col(c).setConstant(m);
            const double var = (target.col(c).array() - m).square().sum() / 20.0;
            expected += var * var;
        }
        CHECK(variance_preservation_loss(pred, target).value == doctest::Approx(expected));
    }
    SUBCASE("gradient matches finite differences") {
        const auto target = random_matrix(7, 3, rng);
        const auto pred = random_matrix(7, 3, rng);
        const auto loss = variance_preservation_loss(pred, target);
        const double err = max_grad_rel_error(
            [&](const Eigen::MatrixXd& p) { return variance_preservation_loss(p, target).value; },
            pred, loss.grad);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("scale consistency loss") {
    Rng rng(4);
    const std::vector<int> scale_cols = {1};
    SUBCASE("zero at pred == target") {
        const auto t = random_matrix(6, 3, rng);
        CHECK(scale_consistency_loss(t, t, scale_cols).value == 0.0);
    }
    SUBCASE("one-channel error e contributes e^2 / T") {
        const int T = 8;
        Eigen::MatrixXd target = Eigen::MatrixXd::Zero(T, 3);
        Eigen::MatrixXd pred = target;
        pred(2, 1) = 0.7;
        CHECK(scale_consistency_loss(pred, target, scale_cols).value ==
              doctest::Approx(0.49 / T));
    }
    SUBCASE("gradient matches finite differences") {
        const auto target = random_matrix(6, 3, rng);
        const auto pred = random_matrix(6, 3, rng);
        const auto loss = scale_consistency_loss(pred, target, scale_cols);
        const double err = max_grad_rel_error(
            [&](const Eigen::MatrixXd& p) {
                return scale_consistency_loss(p, target, scale_cols).value;
            },
            pred, loss.grad);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("diversity loss") {
    LossWeights w;
    w.lambda_rank = 1.0;
    SUBCASE("uniform rows maximize entropy (most negative first term)") {
        const int n = 8;
        Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
        Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) onehot(i, i) = 1.0;
        const Eigen::MatrixXd full_rank_h = Eigen::MatrixXd::Identity(12, 12);
        const double lu = diversity_loss(uniform, full_rank_h, w);
        const double lo = diversity_loss(onehot, full_rank_h, w);
        CHECK(lu < lo);
        CHECK(lu == doctest::Approx(-std::log(static_cast<double>(n))));
        CHECK(lo == doctest::Approx(0.0));  // one-hot rows have zero entropy
    }
    SUBCASE("rank penalty counts missing singular values (SVD oracle)") {
        // H with exactly 3 nonzero singular values -> penalty lambda * 7
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(12, 12);
        h(0, 0) = 5.0;
        h(1, 1) = 2.0;
        h(2, 2) = 1.0;
        CHECK(effective_rank(h) == 3);
        const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(4, 4, 0.25);
        const double expected_entropy = std::log(4.0);
        CHECK(diversity_loss(uniform, h, w) ==
              doctest::Approx(-expected_entropy + 1.0 * 7.0));
    }
    SUBCASE("all-zero hidden matrix counts rank 0") {
        CHECK(effective_rank(Eigen::MatrixXd::Zero(4, 4)) == 0);
    }
    SUBCASE("diversity lower bound is -log(T) for row-stochastic attention") {
        Rng rng(6);
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::MatrixXd a = random_matrix(6, 6, rng, 0.01, 1.0);
            for (int i = 0; i < 6; ++i) a.row(i) /= a.row(i).sum();
            const double l = diversity_loss(a, Eigen::MatrixXd::Identity(12, 12), w);
            CHECK(l >= -std::log(6.0) - 1e-12);
        }
    }
}

TEST_CASE("combined pretraining objective") {
    LossWeights w;
    CHECK(pretrain_combined(0, 0, 0, 0, 0, w) == 0.0);
    CHECK(pretrain_combined(1, 1, 1, 1, 1, w) == doctest::Approx(2.35));
    // linearity in each term
    CHECK(pretrain_combined(2, 0, 0, 0, 0, w) == doctest::Approx(2.0));
    CHECK(pretrain_combined(0, 2, 0, 0, 0, w) == doctest::Approx(1.2));
}

TEST_CASE("focal loss") {
    SUBCASE("perfect predictions drive the loss to ~0") {
        Eigen::VectorXd p(4);
        p << 1.0 - 1e-9, 1e-9, 1.0 - 1e-9, 1e-9;
        const std::vector<std::uint8_t> y = {1, 0, 1, 0};
        CHECK(focal_loss(p, y).value < 1e-8);
    }
    SUBCASE("single positive at p = 0.5 evaluates to 0.25 * 0.25 * ln 2") {
        Eigen::VectorXd p(1);
        p << 0.5;
        const std::vector<std::uint8_t> y = {1};
        CHECK(focal_loss(p, y).value == doctest::Approx(0.25 * 0.25 * std::log(2.0)));
    }
    SUBCASE("confident false positives are expensive, not free") {
        Eigen::VectorXd p(1);
        const std::vector<std::uint8_t> y = {0};
        p << 0.9;
        const double high = focal_loss(p, y).value;
        p << 0.1;
        const double low = focal_loss(p, y).value;
        CHECK(high > low);
    }
    SUBCASE("gradient matches finite differences on interior points") {
        Rng rng(7);
        for (int trial = 0; trial < 10; ++trial) {
            const int T = 16;
            Eigen::VectorXd p(T);
            std::vector<std::uint8_t> y(T);
            for (int t = 0; t < T; ++t) {
                p(t) = rng.uniform(0.05, 0.95);
                y[t] = rng.bernoulli(0.3);
            }
            const auto loss = focal_loss(p, y);
            const double h = 1e-6;
            for (int t = 0; t < T; ++t) {
                Eigen::VectorXd up = p, dn = p;
                up(t) += h;
                dn(t) -= h;
                const double fd = (focal_loss(up, y).value - focal_loss(dn, y).value) / (2 * h);
                const double denom = std::max({std::fabs(fd), std::fabs(loss.grad(t)), 1e-8});
                CHECK(std::fabs(fd - loss.grad(t)) / denom < 1e-6);
            }
        }
    }
}

TEST_CASE("masked losses") {
    Rng rng(8);
    const auto clean = random_matrix(10, 3, rng);
    const auto pred = random_matrix(10, 3, rng);
    SUBCASE("empty mask returns 0 by convention") {
        const std::vector<std::uint8_t> mask(10, 0);
        CHECK(corruption_recon_loss(pred, clean, mask) == 0.0);
    }
    SUBCASE("full mask reduces to plain MSE against clean") {
        const std::vector<std::uint8_t> mask(10, 1);
        double expected = 0.0;
        for (int t = 0; t < 10; ++t) expected += (pred.row(t) - clean.row(t)).squaredNorm();
        CHECK(corruption_recon_loss(pred, clean, mask) == doctest::Approx(expected / 10.0));
        CHECK(clean_preservation_loss(pred, clean, mask) == 0.0);  // nothing clean remains
    }
    SUBCASE("half mask equals the hand-computed mean") {
        std::vector<std::uint8_t> mask(10, 0);
        for (int t = 0; t < 5; ++t) mask[t] = 1;
        double expected = 0.0;
        for (int t = 0; t < 5; ++t) expected += (pred.row(t) - clean.row(t)).squaredNorm();
        CHECK(corruption_recon_loss(pred, clean, mask) == doctest::Approx(expected / 5.0));
    }
    SUBCASE("mask partition identity recomposes the full MSE") {
        for (int trial = 0; trial < 20; ++trial) {
            const auto target = random_matrix(12, 2, rng);
            const auto p = random_matrix(12, 2, rng);
            std::vector<std::uint8_t> mask(12);
            std::size_t on = 0;
            for (auto& m : mask) {
                m = rng.bernoulli(0.4);
                on += m;
            }
            const double corrupt = corruption_recon_loss(p, target, mask);
            const double preserve = clean_preservation_loss(p, target, mask);
            double full = 0.0;
            for (int t = 0; t < 12; ++t) full += (p.row(t) - target.row(t)).squaredNorm();
            CHECK(corrupt * static_cast<double>(on) +
                      preserve * static_cast<double>(12 - on) ==
                  doctest::Approx(full).epsilon(1e-9));
        }
    }
}

TEST_CASE("physics loss") {
    SUBCASE("co-monotone Q and H incur no coupling penalty") {
        const std::vector<double> q = {1, 2, 3, 4, 5};
        const std::vector<double> h = {1, 1.5, 2, 2.5, 3};
        CHECK(physics_loss(q, h, {}, 1.0) == 0.0);
    }
    SUBCASE("one opposed step contributes 1/(T-1)") {
        const std::vector<double> q = {1, 2, 1, 1, 1};  // step 2: dq = -1
        const std::vector<double> h = {1, 1, 2, 2, 2};  // step 2: dh = +1
        CHECK(physics_loss(q, h, {}, 0.0) == doctest::Approx(1.0 / 4.0));
    }
    SUBCASE("lambda_rc scales the mean rating deviation") {
        const std::vector<double> q = {1, 2};
        const std::vector<double> h = {1, 2};
        CHECK(physics_loss(q, h, {0.2, 0.4}, 2.0) == doctest::Approx(2.0 * 0.3));
    }
}

TEST_CASE("lambda schedules and the combined fine-tuning objective") {
    const auto [c1, p1] = lambda_schedules({1});
    CHECK(c1 == doctest::Approx(0.25 / 3.0));
    CHECK(p1 == doctest::Approx(0.05 / 3.0));
    const auto [c3, p3] = lambda_schedules({3});
    CHECK(c3 == doctest::Approx(0.25));
    CHECK(p3 == doctest::Approx(0.05));
    const auto [c10, p10] = lambda_schedules({10});
    CHECK(c10 == doctest::Approx(0.25));
    CHECK(p10 == doctest::Approx(0.05));
    CHECK_THROWS(lambda_schedules({0}));

    LossWeights w;
    CHECK(finetune_combined(0, 0, 0, 0, {5}, w) == 0.0);
    CHECK(finetune_combined(1, 1, 1, 1, {5}, w) == doctest::Approx(1.9));
    CHECK(finetune_combined(2, 0, 0, 0, {5}, w) == doctest::Approx(3.0));
}

TEST_CASE("layout weights match the 12-channel layout") {
    LossWeights w;
    const Eigen::VectorXd lw = layout_weights(w, kNumChannels);
    CHECK(lw(kChanDischarge) == 3.0);
    CHECK(lw(kChanStage) == 2.5);
    CHECK(lw(kChanSeasonalQ) == 1.5);
    CHECK(lw(kChanSeasonalH) == 1.5);
    CHECK(lw(kChanLatitude) == 1.0);
    CHECK(lw(kChanScaleQ) == 1.0);
}

TEST_CASE("non-negativity of every loss except diversity") {
    Rng rng(19);
    for (int trial = 0; trial < 25; ++trial) {
        const auto a = random_matrix(8, 3, rng);
        const auto b = random_matrix(8, 3, rng);
        const Eigen::VectorXd w = Eigen::VectorXd::Ones(3);
        CHECK(weighted_recon_loss(a, b, w).value >= 0.0);
        CHECK(temporal_consistency_loss(a, b, w, {0, 1}).value >= 0.0);
        CHECK(variance_preservation_loss(a, b).value >= 0.0);
        CHECK(scale_consistency_loss(a, b, {2}).value >= 0.0);
        std::vector<std::uint8_t> mask(8);
        for (auto& m : mask) m = rng.bernoulli(0.5);
        CHECK(corruption_recon_loss(a, b, mask) >= 0.0);
        CHECK(clean_preservation_loss(a, b, mask) >= 0.0);
    }
}
