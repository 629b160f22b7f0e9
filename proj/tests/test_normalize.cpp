#include <doctest.h>

#include <cmath>

#include "streamqc/fixture.hpp"
#include "streamqc/normalize.hpp"
#include "streamqc/rng.hpp"
#include "streamqc/windowing.hpp"

using namespace streamqc;
using namespace streamqc::norm;

namespace {

std::vector<FitInput> fixture_inputs(const std::vector<fixture::SyntheticSite>& sites) {
    std::vector<FitInput> inputs;
    for (const auto& s : sites) {
        FitInput in;
        in.site = s.meta;
        in.series = &s.series;
        inputs.push_back(in);
    }
    return inputs;
}

std::vector<fixture::SyntheticSite> training_fixture(int n, int hours, std::uint64_t seed) {
    fixture::FixtureConfig fc;
    fc.n_sites = n;
    fc.hours = hours;
    fc.seed = seed;
    fc.train_frac = 1.0;
    fc.val_frac = 0.0;
    std::vector<fixture::SyntheticSite> sites;
    for (int i = 0; i < n; ++i) sites.push_back(fixture::make_site(i, fc));
    return sites;
}

}  // namespace

TEST_CASE("normalize and denormalize scalar cases") {
    NormConfig cfg;
    SUBCASE("value at the site mean normalizes to zero") {
        const double mu = 2.0, sigma = 0.5;
        const double v = std::exp(mu) - cfg.epsilon;
        CHECK(normalize_value(v, mu, sigma, cfg) == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("values beyond 3 sigma clip") {
        CHECK(normalize_value(std::exp(5.0), 0.0, 1.0, cfg) == 3.0);
        CHECK(normalize_value(std::exp(-5.0) , 0.0, 1.0, cfg) == -3.0);
    }
    SUBCASE("hand-evaluated tier 2") {
        const double mu = 2.0, sigma = 0.5;
        const double v = std::exp(3.0) - cfg.epsilon;
        CHECK(normalize_value(v, mu, sigma, cfg) ==
              doctest::Approx((3.0 - 2.0) / (0.5 + cfg.epsilon)).epsilon(1e-9));
    }
    SUBCASE("negative input is rejected") {
        CHECK_THROWS_AS(normalize_value(-1.0, 0.0, 1.0, cfg), std::domain_error);
    }
    SUBCASE("denormalize at zero recovers exp(mu) - eps") {
        CHECK(denormalize_value(0.0, 2.0, 0.5, cfg) ==
              doctest::Approx(std::exp(2.0) - cfg.epsilon));
    }
    SUBCASE("denormalize beyond the clip range is not truncated") {
        const double mu = 1.0, sigma = 0.5;
        CHECK(denormalize_value(4.0, mu, sigma, cfg) ==
              doctest::Approx(std::exp(4.0 * (sigma + cfg.epsilon) + mu) - cfg.epsilon));
    }
    SUBCASE("overflow reports the value") {
        CHECK_THROWS_AS(denormalize_value(800.0, 0.0, 1.0, cfg), std::overflow_error);
    }
}

TEST_CASE("round-trip identity within 1e-6 when not clipped") {
    NormConfig cfg;
    Rng rng(17);
    double worst = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double x = std::exp(rng.uniform(std::log(1e-3), std::log(1e6)));
        const double mu = rng.uniform(-1.0, 1.0);
        const double sigma = rng.uniform(5.0, 8.0);  // wide enough that nothing clips
        const double y = normalize_value(x, mu, sigma, cfg);
        if (std::fabs(y) >= 3.0) continue;  // clipped draws are excluded by contract
        const double back = denormalize_value(y, mu, sigma, cfg);
        worst = std::max(worst, std::fabs(back - x));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("clipping asymmetry") {
    NormConfig cfg;
    const double mu = 0.5, sigma = 1.0;
    // inside [-3, 3]: normalize(denormalize(y)) == y
    for (const double y : {-2.9, -1.0, 0.0, 2.5}) {
        CHECK(normalize_value(denormalize_value(y, mu, sigma, cfg), mu, sigma, cfg) ==
              doctest::Approx(y).epsilon(1e-9));
    }
    // outside: comes back clipped
    CHECK(normalize_value(denormalize_value(4.0, mu, sigma, cfg), mu, sigma, cfg) == 3.0);
    CHECK(normalize_value(denormalize_value(-4.0, mu, sigma, cfg), mu, sigma, cfg) == -3.0);
}

TEST_CASE("fit_site_stats basics") {
    SUBCASE("constant log-discharge gives sigma 0") {
        fixture::FixtureConfig fc;
        fc.n_sites = 1;
        fc.hours = 1000;
        auto site = fixture::make_site(0, fc);
        NormConfig cfg;
        for (auto& v : site.series.discharge) v = std::exp(1.5) - cfg.epsilon;
        std::vector<fixture::SyntheticSite> sites = {site};
        const auto fit = fit_site_stats(fixture_inputs(sites), cfg);
        const auto& st = fit.bundle.sites.at(site.meta.site_id);
        CHECK(st.mu_lnq == doctest::Approx(1.5).epsilon(1e-9));
        CHECK(st.sigma_lnq == doctest::Approx(0.0));
    }
    SUBCASE("population std convention: lnQ {0,1,2} -> sigma 0.8165") {
        fixture::FixtureConfig fc;
        fc.n_sites = 1;
        fc.hours = 720;
        auto site = fixture::make_site(0, fc);
        NormConfig cfg;
        for (std::size_t t = 0; t < site.series.size(); ++t) {
            site.series.discharge[t] = std::exp(static_cast<double>(t % 3)) - cfg.epsilon;
        }
        std::vector<fixture::SyntheticSite> sites = {site};
        const auto fit = fit_site_stats(fixture_inputs(sites), cfg);
        const auto& st = fit.bundle.sites.at(site.meta.site_id);
        CHECK(st.mu_lnq == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(st.sigma_lnq == doctest::Approx(0.816496580927726).epsilon(1e-9));
    }
    SUBCASE("two-site corpus ranks are 0 and 1") {
        auto sites = training_fixture(2, 800, 3);
        sites[0].meta.drainage_area = 10.0;
        sites[1].meta.drainage_area = 100.0;
        const auto fit = fit_site_stats(fixture_inputs(sites));
        CHECK(fit.bundle.sites.at(sites[0].meta.site_id).rank_area == 0.0);
        CHECK(fit.bundle.sites.at(sites[1].meta.site_id).rank_area == 1.0);
    }
    SUBCASE("sites with fewer than 720 valid hours are dropped with a warning") {
        auto sites = training_fixture(2, 800, 4);
        for (std::size_t t = 500; t < sites[0].series.size(); ++t) {
            sites[0].series.discharge[t] = kMissing;
        }
        const auto fit = fit_site_stats(fixture_inputs(sites));
        CHECK(fit.bundle.sites.count(sites[0].meta.site_id) == 0);
        CHECK(fit.bundle.sites.count(sites[1].meta.site_id) == 1);
        REQUIRE(fit.warnings.size() == 1);
        CHECK(fit.warnings[0].find("720") != std::string::npos);
    }
    SUBCASE("non-training partitions are rejected") {
        auto sites = training_fixture(1, 800, 5);
        sites[0].meta.partition = Partition::kTest;
        CHECK_THROWS(fit_site_stats(fixture_inputs(sites)));
    }
}

TEST_CASE("leakage: stats depend only on training data") {
    auto sites = training_fixture(4, 1500, 9);
    const auto fit_all = fit_site_stats(fixture_inputs(sites));
    // "deleting" validation/test data = fitting on the same training sites
    const auto fit_again = fit_site_stats(fixture_inputs(sites));
    CHECK(stats_to_json(fit_all.bundle) == stats_to_json(fit_again.bundle));
}

TEST_CASE("stats JSON persistence round-trips") {
    auto sites = training_fixture(3, 1200, 10);
    const auto fit = fit_site_stats(fixture_inputs(sites));
    const std::string text = stats_to_json(fit.bundle);
    const StatsBundle back = stats_from_json(text);
    CHECK(stats_to_json(back) == text);
    CHECK(back.sites.size() == fit.bundle.sites.size());
    CHECK(back.global.sigma_lnq == fit.bundle.global.sigma_lnq);
}

TEST_CASE("rank interpolation for unseen sites") {
    const std::vector<double> sorted = {1.0, 2.0, 4.0, 8.0};
    CHECK(interpolate_rank(sorted, 0.5) == 0.0);
    CHECK(interpolate_rank(sorted, 9.0) == 1.0);
    CHECK(interpolate_rank(sorted, 2.0) == doctest::Approx(1.0 / 3.0));
    CHECK(interpolate_rank(sorted, 3.0) == doctest::Approx((1.0 + 0.5) / 3.0));
}

TEST_CASE("build_features channel layout") {
    auto sites = training_fixture(3, 1500, 12);
    const auto fit = fit_site_stats(fixture_inputs(sites));
    const auto& site = sites[0];
    const auto stats = fit.bundle.stats_for(site.meta);
    const auto windows = segment_windows(site.series, 192);
    REQUIRE(!windows.empty());
    const Window w = build_features(windows[0], site.meta, stats, fit.bundle.global);

    SUBCASE("static channels are constant across the window") {
        for (int t = 1; t < kWindowLength; ++t) {
            for (int c = 0; c < 4; ++c) CHECK(w.at(t, c) == w.at(0, c));
        }
    }
    SUBCASE("scale-embedding channels equal the fitted sigmas exactly") {
        CHECK(w.at(100, kChanScaleQ) == stats.sigma_lnq);
        CHECK(w.at(100, kChanScaleH) == stats.sigma_lnh);
        CHECK(w.at(7, kChanRankArea) == stats.rank_area);
    }
    SUBCASE("scale embeddings preserve absolute-magnitude information") {
        // same normalized trace, different sigma -> different tensors
        auto stats2 = stats;
        stats2.sigma_lnq = stats.sigma_lnq + 0.5;
        const Window w2 = build_features(windows[0], site.meta, stats2, fit.bundle.global);
        CHECK(w2.at(0, kChanScaleQ) != w.at(0, kChanScaleQ));
    }
    SUBCASE("seasonal channel is zero at the monthly mean") {
        auto raw = windows[0];
        const int month = month_of_hour(raw.start_hour) - 1;
        raw.q[0] = stats.monthly_mu_q[month];
        const Window w3 = build_features(raw, site.meta, stats, fit.bundle.global);
        CHECK(w3.at(0, kChanSeasonalQ) == doctest::Approx(0.0));
    }
    SUBCASE("seasonal channels clip at +-3") {
        for (int t = 0; t < kWindowLength; ++t) {
            CHECK(std::fabs(w.at(t, kChanSeasonalQ)) <= 3.0);
            CHECK(std::fabs(w.at(t, kChanSeasonalH)) <= 3.0);
        }
    }
}

TEST_CASE("global fallback for unseen sites") {
    auto sites = training_fixture(4, 1500, 14);
    const auto fit = fit_site_stats(fixture_inputs(sites));
    SiteMeta unseen;
    unseen.site_id = "unseen";
    unseen.partition = Partition::kTest;
    unseen.drainage_area = 25.0;
    unseen.elevation = 500.0;
    const auto stats = fit.bundle.stats_for(unseen);
    CHECK(stats.source == StatsSource::kGlobalFallback);
    CHECK(stats.mu_lnq == fit.bundle.global.mu_lnq);
    CHECK(stats.sigma_lnq == fit.bundle.global.sigma_lnq);
    // fallback envelope bands equal the pooled training bands
    for (int m = 0; m < 12; ++m) {
        if (!std::isnan(fit.bundle.global.monthly_p99_q[m])) {
            CHECK(stats.monthly_p99_q[m] == fit.bundle.global.monthly_p99_q[m]);
        }
    }
    CHECK(stats.rank_area >= 0.0);
    CHECK(stats.rank_area <= 1.0);
}

TEST_CASE("denormalize_window inverts build_features dynamics when unclipped") {
    auto sites = training_fixture(2, 1500, 15);
    const auto fit = fit_site_stats(fixture_inputs(sites));
    const auto& site = sites[0];
    const auto stats = fit.bundle.stats_for(site.meta);
    const auto windows = segment_windows(site.series, 192);
    REQUIRE(!windows.empty());
    const Window w = build_features(windows[0], site.meta, stats, fit.bundle.global);
    std::vector<double> q, h;
    denormalize_window(w, stats, {}, &q, &h);
    for (int t = 0; t < kWindowLength; ++t) {
        if (std::fabs(w.at(t, kChanDischarge)) >= 3.0) continue;
        CHECK(q[t] == doctest::Approx(windows[0].q[t]).epsilon(1e-9));
    }
}
