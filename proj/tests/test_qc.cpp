#include <doctest.h>

#include <cmath>

#include "streamqc/qc.hpp"
#include "streamqc/rng.hpp"

using namespace streamqc;
using namespace streamqc::qc;

namespace {

HourlySeries series_of(std::vector<double> q, std::vector<double> h) {
    HourlySeries s;
    s.site_id = "t";
    s.start_hour = parse_iso8601_utc_hour("2020-06-01T00:00:00Z");  // all June
    s.discharge = std::move(q);
    s.stage = std::move(h);
    s.flags.assign(s.discharge.size(), kFlagNone);
    return s;
}

}  // namespace

TEST_CASE("monthly outlier flags") {
    SUBCASE("constant series has zero flags (sigma = 0 months skipped)") {
        const auto s = series_of(std::vector<double>(200, 10.0), std::vector<double>(200, 2.0));
        const auto clim = compute_monthly_climatology(s);
        const auto r = monthly_outlier_flags(s, clim);
        for (const auto f : r.flags) CHECK(f == kFlagNone);
    }
    SUBCASE("a 5-sigma point in a Gaussian month is exactly the flagged point") {
        Rng rng(21);
        std::vector<double> q(600), h(600, 2.0);
        for (auto& v : q) v = rng.normal(100.0, 5.0);
        auto s = series_of(q, h);
        auto clim = compute_monthly_climatology(s);
        // place one value exactly 5 climatological sigmas above the mean,
        // then refresh the climatology (the outlier inflates sigma slightly
        // but stays beyond 4 sigma by construction)
        const int m = 5;  // June
        s.discharge[300] = clim.mu_q[m] + 5.0 * clim.sigma_q[m];
        clim = compute_monthly_climatology(s);
        const auto r = monthly_outlier_flags(s, clim);
        // verify against a direct comparison oracle
        for (std::size_t t = 0; t < s.size(); ++t) {
            const bool expected =
                std::fabs(s.discharge[t] - clim.mu_q[m]) > 4.0 * clim.sigma_q[m];
            CHECK((r.flags[t] != 0) == expected);
        }
        CHECK(r.flags[300] != 0);
    }
    SUBCASE("a value at exactly mu + 4 sigma is not flagged (strict inequality)") {
        // hand-built climatology: mean 10, sigma 2
        auto s = series_of({18.0}, {2.0});
        MonthlyClimatology clim;
        for (int m = 0; m < 12; ++m) {
            clim.count[m] = 10;
            clim.mu_q[m] = 10.0;
            clim.sigma_q[m] = 2.0;
            clim.mu_h[m] = 2.0;
            clim.sigma_h[m] = 0.0;
        }
        const auto r = monthly_outlier_flags(s, clim);
        CHECK(r.flags[0] == kFlagNone);  // |18-10| = 8 == 4*2 exactly
        s.discharge[0] = 18.0000001;
        const auto r2 = monthly_outlier_flags(s, clim);
        CHECK(r2.flags[0] != kFlagNone);
    }
}

TEST_CASE("rate-of-change flags") {
    SUBCASE("strictly constant series yields theta 0 and zero flags") {
        const auto s = series_of(std::vector<double>(300, 50.0), std::vector<double>(300, 2.0));
        const auto r = rate_of_change_flags(s);
        CHECK(r.theta == 0.0);
        for (const auto f : r.flags) CHECK(f == kFlagNone);
    }
    SUBCASE("999 small-change pairs and one 500% jump flags exactly that pair") {
        // a 100/101 sawtooth produces exactly two identical small change
        // values, so the p99 sits on them bit-exactly and only the gross
        // jump exceeds it
        std::vector<double> q;
        for (int i = 0; i < 1000; ++i) q.push_back(i % 2 == 0 ? 100.0 : 101.0);
        const std::size_t jump_at = q.size();
        q.push_back(606.0);  // |606-101|/101 = 5.0 exactly
        const auto s = series_of(q, std::vector<double>(q.size(), 2.0));
        const auto r = rate_of_change_flags(s);
        std::size_t flagged = 0;
        for (std::size_t t = 0; t < r.flags.size(); ++t) {
            if (r.flags[t] != kFlagNone) {
                ++flagged;
                CHECK(t == jump_at);
            }
        }
        CHECK(flagged == 1);
    }
    SUBCASE("all changes equal yields zero flags (nothing exceeds its own p99)") {
        // doubling steps give changes of exactly 1.0 everywhere
        std::vector<double> q;
        q.push_back(10.0);
        for (int i = 0; i < 200; ++i) q.push_back(q.back() * 2.0);
        const auto s = series_of(q, std::vector<double>(q.size(), 2.0));
        const auto r = rate_of_change_flags(s);
        for (const auto f : r.flags) CHECK(f == kFlagNone);
    }
    SUBCASE("fewer than 100 pairs falls back to the supplied global theta") {
        std::vector<double> q(50, 10.0);
        q[25] = 100.0;
        const auto s = series_of(q, std::vector<double>(q.size(), 2.0));
        const auto r = rate_of_change_flags(s, {}, 0.5);
        CHECK(r.used_fallback);
        CHECK(r.flags[25] != kFlagNone);
    }
}

TEST_CASE("rating fit recovers synthetic power laws") {
    const double a_true = 2.0, b_true = 1.5, h0_true = 1.0;
    Rng rng(77);
    std::vector<double> q(500), h(500);
    for (std::size_t i = 0; i < q.size(); ++i) {
        h[i] = h0_true + rng.uniform(0.2, 4.0);
        q[i] = a_true * std::pow(h[i] - h0_true, b_true);
    }

    SUBCASE("exact data recovers parameters within 1%") {
        RatingFitOptions opt;
        const auto fit = fit_rating_robust(q, h, opt, 123);
        REQUIRE(fit.has_value());
        CHECK(std::fabs(fit->a - a_true) / a_true < 0.01);
        CHECK(std::fabs(fit->b - b_true) / b_true < 0.01);
        CHECK(std::fabs(fit->h0 - h0_true) / h0_true < 0.01);
        CHECK(fit->resid_std < 1e-6);
    }
    SUBCASE("10% gross outliers still recover within 5%") {
        auto qq = q;
        for (std::size_t i = 0; i < qq.size(); i += 10) {
            qq[i] *= rng.uniform(5.0, 50.0);
        }
        RatingFitOptions opt;
        const auto fit = fit_rating_robust(qq, h, opt, 123);
        REQUIRE(fit.has_value());
        CHECK(std::fabs(fit->a - a_true) / a_true < 0.05);
        CHECK(std::fabs(fit->b - b_true) / b_true < 0.05);
        CHECK(std::fabs(fit->h0 - h0_true) / h0_true < 0.05);
    }
    SUBCASE("all-equal discharge is degenerate") {
        const std::vector<double> q_const(300, 7.0);
        std::vector<double> h_var(300);
        for (std::size_t i = 0; i < h_var.size(); ++i) h_var[i] = 1.0 + 0.01 * i;
        RatingFitOptions opt;
        CHECK(!fit_rating_robust(q_const, h_var, opt, 1).has_value());
    }
    SUBCASE("too few pairs is rejected") {
        RatingFitOptions opt;
        const std::vector<double> q2(q.begin(), q.begin() + 100);
        const std::vector<double> h2(h.begin(), h.begin() + 100);
        CHECK(!fit_rating_robust(q2, h2, opt, 1).has_value());
    }
    SUBCASE("deterministic given the seed") {
        RatingFitOptions opt;
        const auto f1 = fit_rating_robust(q, h, opt, 5);
        const auto f2 = fit_rating_robust(q, h, opt, 5);
        REQUIRE(f1.has_value());
        REQUIRE(f2.has_value());
        CHECK(f1->a == f2->a);
        CHECK(f1->b == f2->b);
        CHECK(f1->h0 == f2->h0);
    }
}

TEST_CASE("rating flags") {
    RatingFit fit;
    fit.a = 2.0;
    fit.b = 1.5;
    fit.h0 = 1.0;
    fit.resid_std = 0.05;
    std::vector<double> h = {2.0, 3.0, 0.5};
    std::vector<double> q(3);
    q[0] = 2.0 * std::pow(1.0, 1.5);             // on the curve
    q[1] = 2.0 * std::pow(2.0, 1.5) * std::exp(0.15);  // 3 resid_std off
    q[2] = 1.0;                                   // H below H0
    const auto s = series_of(q, h);
    const auto r = rating_flags(s, fit);
    CHECK(r.flags[0] == kFlagNone);
    CHECK(r.flags[1] != kFlagNone);
    CHECK(r.flags[2] != kFlagNone);  // implausible: H <= H0
}

TEST_CASE("range flags use closed intervals") {
    TrainingExtrema e;
    e.q_max = 100.0;
    e.h_min = 2.0;
    e.h_max = 8.0;
    const auto s = series_of({200.0, -1.0, 50.0, 201.0}, {9.0, 3.0, 9.5, 1.0});
    const auto r = range_flags(s, e);
    CHECK(r.flags[0] == kFlagNone);  // Q exactly at 2*Qmax and H exactly at max+1
    CHECK(r.flags[1] != kFlagNone);  // negative discharge
    CHECK(r.flags[2] != kFlagNone);  // H = 9.5 > 8 + 1
    CHECK(r.flags[3] != kFlagNone);  // Q just above the bound
    // H = 8 + 1.5 exceeds the margin by 0.5 ft
    const auto s2 = series_of({50.0}, {9.5});
    CHECK(range_flags(s2, e).flags[0] != kFlagNone);
}

TEST_CASE("recession constant estimation") {
    SUBCASE("exact exponential decay inverts to k within 1e-9") {
        std::vector<double> q(60, kMissing);
        for (int t = 0; t < 48; ++t) q[t] = 100.0 * std::exp(-0.02 * t);
        const auto k = estimate_recession_k(q, 48);
        REQUIRE(k.has_value());
        CHECK(std::fabs(*k - 0.02) < 1e-9);
    }
    SUBCASE("constant pre-gap discharge gives k = 0") {
        std::vector<double> q(48, 25.0);
        const auto k = estimate_recession_k(q, 48);
        REQUIRE(k.has_value());
        CHECK(*k == 0.0);
    }
    SUBCASE("rising pre-gap discharge clamps to k = 0") {
        std::vector<double> q(48);
        for (int t = 0; t < 48; ++t) q[t] = 10.0 + t;
        const auto k = estimate_recession_k(q, 48);
        REQUIRE(k.has_value());
        CHECK(*k == 0.0);
    }
    SUBCASE("short pre-gap run falls back to the site median recession") {
        // two clean recession segments elsewhere in the series
        std::vector<double> q(300, kMissing);
        for (int t = 0; t < 24; ++t) q[t] = 50.0 * std::exp(-0.01 * t);
        for (int t = 100; t < 124; ++t) q[t] = 80.0 * std::exp(-0.03 * (t - 100));
        // only 3 valid hours right before the gap
        q[200] = 10.0;
        q[201] = 9.0;
        q[202] = 8.0;
        const auto k = estimate_recession_k(q, 203);
        REQUIRE(k.has_value());
        // median of {0.01, 0.03}
        CHECK(*k == doctest::Approx(0.02).epsilon(1e-6));
    }
    SUBCASE("no pre-gap data and no recession segments -> unavailable") {
        std::vector<double> q(100, kMissing);
        CHECK(!estimate_recession_k(q, 50).has_value());
    }
}

TEST_CASE("gap filling") {
    SUBCASE("3-hour gap fills linearly: 11.5, 13.0, 14.5") {
        std::vector<double> q = {10.0, kMissing, kMissing, kMissing, 16.0};
        std::vector<double> h = {2.0, kMissing, kMissing, kMissing, 2.4};
        const auto r = fill_gaps(series_of(q, h));
        CHECK(r.series.discharge[1] == doctest::Approx(11.5));
        CHECK(r.series.discharge[2] == doctest::Approx(13.0));
        CHECK(r.series.discharge[3] == doctest::Approx(14.5));
        CHECK(r.series.stage[2] == doctest::Approx(2.2));
        for (int t = 1; t <= 3; ++t) CHECK((r.series.flags[t] & kFlagFillLinear) != 0);
        CHECK(r.stats.linear_hours == 3);
    }
    SUBCASE("10-hour gap uses the recession model for discharge") {
        // 48 h of exact decay with k = 0.01 before the gap
        std::vector<double> q, h;
        for (int t = 0; t < 48; ++t) {
            q.push_back(100.0 * std::exp(-0.01 * t));
            h.push_back(3.0);
        }
        const double q0 = q.back();  // value at the left edge of the gap
        for (int t = 0; t < 10; ++t) {
            q.push_back(kMissing);
            h.push_back(kMissing);
        }
        q.push_back(50.0);
        h.push_back(3.0);
        const auto r = fill_gaps(series_of(q, h));
        // fill at +10 h from the anchor: q0 * exp(-0.1)
        CHECK(r.series.discharge[57] == doctest::Approx(q0 * std::exp(-0.1)).epsilon(1e-6));
        // continuity at the left endpoint: fill(t0+1) = q0 * exp(-k)
        CHECK(r.series.discharge[48] == doctest::Approx(q0 * std::exp(-0.01)).epsilon(1e-9));
        for (int t = 48; t < 58; ++t) CHECK((r.series.flags[t] & kFlagFillRecession) != 0);
        CHECK(r.stats.recession_hours == 10);
        // stage filled linearly inside the recession gap
        CHECK(r.series.stage[52] == doctest::Approx(3.0));
    }
    SUBCASE("30-hour gap is excluded with zero fills") {
        std::vector<double> q(100, 20.0), h(100, 2.0);
        for (int t = 30; t < 60; ++t) {
            q[t] = kMissing;
            h[t] = kMissing;
        }
        const auto r = fill_gaps(series_of(q, h));
        CHECK(r.stats.excluded_hours == 30);
        CHECK(r.stats.linear_hours == 0);
        CHECK(r.stats.recession_hours == 0);
        for (int t = 30; t < 60; ++t) {
            CHECK((r.series.flags[t] & kFlagExcluded) != 0);
            CHECK(is_missing(r.series.discharge[t]));
        }
    }
    SUBCASE("flagged outliers are converted to gaps before filling") {
        std::vector<double> q = {10.0, 999.0, 12.0};
        std::vector<double> h = {2.0, 2.1, 2.2};
        auto s = series_of(q, h);
        s.flags[1] |= kFlagOutlier;
        const auto r = fill_gaps(s);
        CHECK(r.series.discharge[1] == doctest::Approx(11.0));  // linear between neighbors
        CHECK((r.series.flags[1] & kFlagFillLinear) != 0);
    }
    SUBCASE("gaps touching the series boundary are excluded") {
        std::vector<double> q = {kMissing, kMissing, 10.0, 11.0, kMissing};
        std::vector<double> h = {kMissing, kMissing, 2.0, 2.1, kMissing};
        const auto r = fill_gaps(series_of(q, h));
        CHECK((r.series.flags[0] & kFlagExcluded) != 0);
        CHECK((r.series.flags[4] & kFlagExcluded) != 0);
        CHECK(r.stats.excluded_hours == 3);
    }
    SUBCASE("fill accounting identity on randomized gap patterns") {
        Rng rng(31);
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t n = 200 + static_cast<std::size_t>(rng.uniform_int(0, 400));
            std::vector<double> q(n), h(n);
            for (std::size_t t = 0; t < n; ++t) {
                q[t] = 50.0 + 10.0 * std::sin(0.01 * static_cast<double>(t));
                h[t] = 2.0 + 0.1 * std::sin(0.01 * static_cast<double>(t));
            }
            std::size_t t = 0;
            while (t < n) {
                if (rng.uniform() < 0.02) {
                    const std::size_t len =
                        static_cast<std::size_t>(rng.uniform_int(1, 40));
                    for (std::size_t p = t; p < std::min(n, t + len); ++p) {
                        q[p] = kMissing;
                        h[p] = kMissing;
                    }
                    t += len;
                } else {
                    ++t;
                }
            }
            const auto r = fill_gaps(series_of(q, h));
            CHECK(r.stats.linear_hours + r.stats.recession_hours + r.stats.excluded_hours ==
                  r.stats.total_gap_hours);
            // no fill overwrites an observed value
            for (std::size_t p = 0; p < n; ++p) {
                if (!is_missing(q[p])) CHECK(r.series.discharge[p] == q[p]);
            }
        }
    }
}

TEST_CASE("completeness filter boundaries") {
    auto make = [](std::size_t valid, std::size_t total) {
        std::vector<double> q(total, 10.0), h(total, 2.0);
        for (std::size_t t = valid; t < total; ++t) {
            q[t] = kMissing;
            h[t] = kMissing;
        }
        return series_of(q, h);
    };
    CHECK(completeness_filter(make(950, 1000)));   // 95%
    CHECK(!completeness_filter(make(899, 1000)));  // 89.9%
    CHECK(completeness_filter(make(900, 1000)));   // exactly 90%
}

TEST_CASE("run_site_qc is deterministic and accounts flags") {
    Rng rng(55);
    std::vector<double> q(2000), h(2000);
    for (std::size_t t = 0; t < q.size(); ++t) {
        q[t] = 100.0 * std::exp(0.3 * std::sin(0.005 * static_cast<double>(t)) +
                                rng.normal(0.0, 0.05));
        h[t] = 1.0 + std::pow(q[t] / 2.0, 1.0 / 1.5);
    }
    q[500] = 10000.0;  // gross spike
    const auto s = series_of(q, h);
    const auto r1 = run_site_qc(s, {}, 42);
    const auto r2 = run_site_qc(s, {}, 42);
    CHECK(r1.completeness == r2.completeness);
    CHECK(r1.outlier_count == r2.outlier_count);
    CHECK(r1.filled.discharge == r2.filled.discharge);
    CHECK(r1.accepted);
    CHECK(r1.fill_stats.linear_hours + r1.fill_stats.recession_hours +
              r1.fill_stats.excluded_hours ==
          r1.fill_stats.total_gap_hours);
    // the spike was flagged and replaced
    CHECK(r1.filled.discharge[500] != 10000.0);
}
