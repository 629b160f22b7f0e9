#include "streamqc/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "streamqc/mathutil.hpp"
#include "streamqc/qc.hpp"

namespace streamqc {
namespace norm {

using nlohmann::json;

double normalize_value(double physical, double mu, double sigma, const NormConfig& config) {
    if (std::isnan(physical)) return kMissing;
    if (physical < 0.0) {
        throw std::domain_error("normalize_value: negative input " + std::to_string(physical));
    }
    const double x1 = std::log(physical + config.epsilon);
    const double x2 = (x1 - mu) / (sigma + config.epsilon);
    return std::clamp(x2, -config.clip_tau, config.clip_tau);
}

double denormalize_value(double ynorm, double mu, double sigma, const NormConfig& config) {
    if (std::isnan(ynorm)) return kMissing;
    const double v = std::exp(ynorm * (sigma + config.epsilon) + mu) - config.epsilon;
    if (!std::isfinite(v)) {
        throw std::overflow_error("denormalize_value: overflow at ynorm = " +
                                  std::to_string(ynorm));
    }
    return v;
}

double normalize_static(double value, double mean, double stddev, const NormConfig& config) {
    return (value - mean) / (stddev + config.epsilon);
}

double denormalize_static(double ynorm, double mean, double stddev, const NormConfig& config) {
    return ynorm * (stddev + config.epsilon) + mean;
}

double interpolate_rank(const std::vector<double>& sorted_values, double value) {
    const std::size_t n = sorted_values.size();
    if (n <= 1) return 0.5;
    if (value <= sorted_values.front()) return 0.0;
    if (value >= sorted_values.back()) return 1.0;
    const auto it = std::upper_bound(sorted_values.begin(), sorted_values.end(), value);
    const std::size_t hi = static_cast<std::size_t>(it - sorted_values.begin());
    const std::size_t lo = hi - 1;
    const double span = sorted_values[hi] - sorted_values[lo];
    const double frac = span > 0.0 ? (value - sorted_values[lo]) / span : 0.0;
    return (static_cast<double>(lo) + frac) / static_cast<double>(n - 1);
}

SiteStats StatsBundle::stats_for(const SiteMeta& site) const {
    const auto it = sites.find(site.site_id);
    if (it != sites.end()) return it->second;
    SiteStats s;
    s.mu_lnq = global.mu_lnq;
    s.sigma_lnq = global.sigma_lnq;
    s.mu_lnh = global.mu_lnh;
    s.sigma_lnh = global.sigma_lnh;
    s.monthly_mu_q = global.monthly_mu_q;
    s.monthly_sigma_q = global.monthly_sigma_q;
    s.monthly_mu_h = global.monthly_mu_h;
    s.monthly_sigma_h = global.monthly_sigma_h;
    s.monthly_p1_q = global.monthly_p1_q;
    s.monthly_p99_q = global.monthly_p99_q;
    s.monthly_p1_h = global.monthly_p1_h;
    s.monthly_p99_h = global.monthly_p99_h;
    s.rank_area = interpolate_rank(global.sorted_areas, site.drainage_area);
    s.rank_elev = interpolate_rank(global.sorted_elevs, site.elevation);
    s.source = StatsSource::kGlobalFallback;
    return s;
}

namespace {

bool valid_step(const HourlySeries& s, std::size_t t) {
    const bool excluded = t < s.flags.size() && (s.flags[t] & kFlagExcluded) != 0;
    return !excluded && !is_missing(s.discharge[t]) && !is_missing(s.stage[t]);
}

struct MonthlyAccum {
    std::array<std::vector<double>, 12> q, h;

    void add(const HourlySeries& s) {
        for (std::size_t t = 0; t < s.size(); ++t) {
            if (!valid_step(s, t)) continue;
            const int m = month_of_hour(s.hour_at(t)) - 1;
            q[m].push_back(s.discharge[t]);
            h[m].push_back(s.stage[t]);
        }
    }

    template <typename Stats>
    void finalize(Stats* out) const {
        for (int m = 0; m < 12; ++m) {
            if (q[m].empty()) {
                out->monthly_mu_q[m] = out->monthly_sigma_q[m] = kMissing;
                out->monthly_mu_h[m] = out->monthly_sigma_h[m] = kMissing;
                out->monthly_p1_q[m] = out->monthly_p99_q[m] = kMissing;
                out->monthly_p1_h[m] = out->monthly_p99_h[m] = kMissing;
                continue;
            }
            out->monthly_mu_q[m] = mean_of(q[m]);
            out->monthly_sigma_q[m] = population_std(q[m]);
            out->monthly_mu_h[m] = mean_of(h[m]);
            out->monthly_sigma_h[m] = population_std(h[m]);
            std::vector<double> qs = q[m], hs = h[m];
            std::sort(qs.begin(), qs.end());
            std::sort(hs.begin(), hs.end());
            out->monthly_p1_q[m] = quantile_sorted(qs, 0.01);
            out->monthly_p99_q[m] = quantile_sorted(qs, 0.99);
            out->monthly_p1_h[m] = quantile_sorted(hs, 0.01);
            out->monthly_p99_h[m] = quantile_sorted(hs, 0.99);
        }
    }
};

}  // namespace

FitResult fit_site_stats(const std::vector<FitInput>& training_sites, const NormConfig& config) {
    FitResult out;
    out.bundle.config = config;

    struct PerSite {
        SiteMeta meta;
        SiteStats stats;
    };
    std::vector<PerSite> fitted;
    MonthlyAccum pooled_monthly;
    std::vector<double> pooled_changes;

    for (const auto& input : training_sites) {
        if (input.site.partition != Partition::kTrain) {
            throw std::invalid_argument("fit_site_stats: site '" + input.site.site_id +
                                        "' is not in the training partition");
        }
        const HourlySeries& s = *input.series;
        std::vector<double> lnq, lnh;
        for (std::size_t t = 0; t < s.size(); ++t) {
            if (!valid_step(s, t)) continue;
            if (s.discharge[t] < 0.0 || s.stage[t] < 0.0) continue;  // post-QC guard
            lnq.push_back(std::log(s.discharge[t] + config.epsilon));
            lnh.push_back(std::log(s.stage[t] + config.epsilon));
        }
        if (lnq.size() < 720) {
            out.warnings.push_back("site '" + input.site.site_id + "' has " +
                                   std::to_string(lnq.size()) +
                                   " valid hours (< 720), stats rejected");
            continue;
        }
        PerSite ps;
        ps.meta = input.site;
        ps.stats.mu_lnq = mean_of(lnq);
        ps.stats.sigma_lnq = population_std(lnq);
        ps.stats.mu_lnh = mean_of(lnh);
        ps.stats.sigma_lnh = population_std(lnh);
        MonthlyAccum site_monthly;
        site_monthly.add(s);
        site_monthly.finalize(&ps.stats);
        ps.stats.source = StatsSource::kSiteSpecific;
        fitted.push_back(std::move(ps));

        pooled_monthly.add(s);
        const auto changes = qc::fractional_discharge_changes(s);
        pooled_changes.insert(pooled_changes.end(), changes.begin(), changes.end());
    }

    if (fitted.empty()) {
        out.warnings.push_back("no usable training sites, global statistics are empty");
        return out;
    }

    // Cross-site ordinal ranks, min-max normalized over the training sites.
    const std::size_t n = fitted.size();
    std::vector<double> areas(n), elevs(n);
    for (std::size_t i = 0; i < n; ++i) {
        areas[i] = fitted[i].meta.drainage_area;
        elevs[i] = fitted[i].meta.elevation;
    }
    const std::vector<double> area_ranks = average_ranks(areas);
    const std::vector<double> elev_ranks = average_ranks(elevs);
    for (std::size_t i = 0; i < n; ++i) {
        if (n == 1) {
            fitted[i].stats.rank_area = 0.5;
            fitted[i].stats.rank_elev = 0.5;
        } else {
            fitted[i].stats.rank_area = (area_ranks[i] - 1.0) / static_cast<double>(n - 1);
            fitted[i].stats.rank_elev = (elev_ranks[i] - 1.0) / static_cast<double>(n - 1);
        }
    }

    GlobalStats& g = out.bundle.global;
    std::vector<double> mus_q(n), sigmas_q(n), mus_h(n), sigmas_h(n);
    std::array<std::vector<double>, 4> statics;
    for (std::size_t i = 0; i < n; ++i) {
        mus_q[i] = fitted[i].stats.mu_lnq;
        sigmas_q[i] = fitted[i].stats.sigma_lnq;
        mus_h[i] = fitted[i].stats.mu_lnh;
        sigmas_h[i] = fitted[i].stats.sigma_lnh;
        statics[0].push_back(fitted[i].meta.latitude);
        statics[1].push_back(fitted[i].meta.longitude);
        statics[2].push_back(fitted[i].meta.drainage_area);
        statics[3].push_back(fitted[i].meta.elevation);
    }
    // Equal-site-weight mixture moments: the global mean is the mean of
    // per-site means and the global variance is mean(sigma_s^2) + var(mu_s),
    // i.e. the population std over all training timesteps with every site
    // weighted equally.
    auto mixture = [](const std::vector<double>& mus, const std::vector<double>& sigmas,
                      double* mu_out, double* sigma_out) {
        const double mu = mean_of(mus);
        double within = 0.0, between = 0.0;
        for (std::size_t i = 0; i < mus.size(); ++i) {
            within += sigmas[i] * sigmas[i];
            between += (mus[i] - mu) * (mus[i] - mu);
        }
        *mu_out = mu;
        *sigma_out = std::sqrt((within + between) / static_cast<double>(mus.size()));
    };
    mixture(mus_q, sigmas_q, &g.mu_lnq, &g.sigma_lnq);
    mixture(mus_h, sigmas_h, &g.mu_lnh, &g.sigma_lnh);
    pooled_monthly.finalize(&g);
    for (int f = 0; f < 4; ++f) {
        g.static_mean[f] = mean_of(statics[f]);
        g.static_std[f] = population_std(statics[f]);
    }
    g.sorted_areas = areas;
    std::sort(g.sorted_areas.begin(), g.sorted_areas.end());
    g.sorted_elevs = elevs;
    std::sort(g.sorted_elevs.begin(), g.sorted_elevs.end());
    g.roc_theta = pooled_changes.empty() ? 0.0 : quantile_of(pooled_changes, 0.99);

    for (auto& ps : fitted) {
        out.bundle.sites.emplace(ps.meta.site_id, ps.stats);
    }
    return out;
}

Window build_features(const RawWindow& raw, const SiteMeta& site, const SiteStats& stats,
                      const GlobalStats& global, const NormConfig& config) {
    if (raw.q.size() != static_cast<std::size_t>(kWindowLength)) {
        throw std::invalid_argument("build_features: raw window must have 576 timesteps");
    }
    Window w;
    w.site_id = raw.site_id;
    w.start_hour = raw.start_hour;
    w.chan.assign(static_cast<std::size_t>(kWindowLength) * kNumChannels, 0.0);
    w.observation_mask.assign(kWindowLength, 1);

    const std::array<double, 4> static_vals = {site.latitude, site.longitude,
                                               site.drainage_area, site.elevation};
    std::array<double, 4> static_norm{};
    for (int f = 0; f < 4; ++f) {
        static_norm[f] =
            normalize_static(static_vals[f], global.static_mean[f], global.static_std[f], config);
    }

    for (int t = 0; t < kWindowLength; ++t) {
        const bool valid = raw.valid.empty() ? (!is_missing(raw.q[t]) && !is_missing(raw.h[t]))
                                             : raw.valid[t] != 0;
        w.observation_mask[t] = valid ? 1 : 0;
        w.at(t, kChanLatitude) = static_norm[0];
        w.at(t, kChanLongitude) = static_norm[1];
        w.at(t, kChanDrainageArea) = static_norm[2];
        w.at(t, kChanElevation) = static_norm[3];
        w.at(t, kChanScaleQ) = stats.sigma_lnq;
        w.at(t, kChanScaleH) = stats.sigma_lnh;
        w.at(t, kChanRankArea) = stats.rank_area;
        w.at(t, kChanRankElev) = stats.rank_elev;
        if (!valid) continue;

        w.at(t, kChanDischarge) = normalize_value(raw.q[t], stats.mu_lnq, stats.sigma_lnq, config);
        w.at(t, kChanStage) = normalize_value(raw.h[t], stats.mu_lnh, stats.sigma_lnh, config);

        const int m = month_of_hour(raw.start_hour + t) - 1;
        auto seasonal = [&](double v, double mu, double sigma) {
            if (std::isnan(mu) || std::isnan(sigma) || sigma <= 0.0) return 0.0;
            return std::clamp((v - mu) / sigma, -config.clip_tau, config.clip_tau);
        };
        w.at(t, kChanSeasonalQ) =
            seasonal(raw.q[t], stats.monthly_mu_q[m], stats.monthly_sigma_q[m]);
        w.at(t, kChanSeasonalH) =
            seasonal(raw.h[t], stats.monthly_mu_h[m], stats.monthly_sigma_h[m]);
    }
    return w;
}

void denormalize_window(const Window& window, const SiteStats& stats, const NormConfig& config,
                        std::vector<double>* q_out, std::vector<double>* h_out) {
    q_out->assign(kWindowLength, kMissing);
    h_out->assign(kWindowLength, kMissing);
    for (int t = 0; t < kWindowLength; ++t) {
        if (!window.observation_mask.empty() && !window.observation_mask[t]) continue;
        (*q_out)[t] =
            denormalize_value(window.at(t, kChanDischarge), stats.mu_lnq, stats.sigma_lnq, config);
        (*h_out)[t] =
            denormalize_value(window.at(t, kChanStage), stats.mu_lnh, stats.sigma_lnh, config);
    }
}

namespace {

json monthly_to_json(const std::array<double, 12>& a) {
    json arr = json::array();
    for (const double v : a) {
        if (std::isnan(v)) {
            arr.push_back(nullptr);
        } else {
            arr.push_back(v);
        }
    }
    return arr;
}

std::array<double, 12> monthly_from_json(const json& arr) {
    std::array<double, 12> out{};
    for (int i = 0; i < 12; ++i) {
        out[i] = arr.at(i).is_null() ? kMissing : arr.at(i).get<double>();
    }
    return out;
}

json site_stats_to_json(const SiteStats& s) {
    json j;
    j["mu_lnq"] = s.mu_lnq;
    j["sigma_lnq"] = s.sigma_lnq;
    j["mu_lnh"] = s.mu_lnh;
    j["sigma_lnh"] = s.sigma_lnh;
    j["monthly_mu_q"] = monthly_to_json(s.monthly_mu_q);
    j["monthly_sigma_q"] = monthly_to_json(s.monthly_sigma_q);
    j["monthly_mu_h"] = monthly_to_json(s.monthly_mu_h);
    j["monthly_sigma_h"] = monthly_to_json(s.monthly_sigma_h);
    j["monthly_p1_q"] = monthly_to_json(s.monthly_p1_q);
    j["monthly_p99_q"] = monthly_to_json(s.monthly_p99_q);
    j["monthly_p1_h"] = monthly_to_json(s.monthly_p1_h);
    j["monthly_p99_h"] = monthly_to_json(s.monthly_p99_h);
    j["rank_area"] = s.rank_area;
    j["rank_elev"] = s.rank_elev;
    j["source"] =
        s.source == StatsSource::kSiteSpecific ? "site_specific" : "global_fallback";
    return j;
}

SiteStats site_stats_from_json(const json& j) {
    SiteStats s;
    s.mu_lnq = j.at("mu_lnq").get<double>();
    s.sigma_lnq = j.at("sigma_lnq").get<double>();
    s.mu_lnh = j.at("mu_lnh").get<double>();
    s.sigma_lnh = j.at("sigma_lnh").get<double>();
    s.monthly_mu_q = monthly_from_json(j.at("monthly_mu_q"));
    s.monthly_sigma_q = monthly_from_json(j.at("monthly_sigma_q"));
    s.monthly_mu_h = monthly_from_json(j.at("monthly_mu_h"));
    s.monthly_sigma_h = monthly_from_json(j.at("monthly_sigma_h"));
    s.monthly_p1_q = monthly_from_json(j.at("monthly_p1_q"));
    s.monthly_p99_q = monthly_from_json(j.at("monthly_p99_q"));
    s.monthly_p1_h = monthly_from_json(j.at("monthly_p1_h"));
    s.monthly_p99_h = monthly_from_json(j.at("monthly_p99_h"));
    s.rank_area = j.at("rank_area").get<double>();
    s.rank_elev = j.at("rank_elev").get<double>();
    s.source = j.at("source").get<std::string>() == "site_specific"
                   ? StatsSource::kSiteSpecific
                   : StatsSource::kGlobalFallback;
    return s;
}

}  // namespace

std::string stats_to_json(const StatsBundle& bundle) {
    json j;
    j["version"] = kStatsFormatVersion;
    j["config"]["epsilon"] = bundle.config.epsilon;
    j["config"]["clip_tau"] = bundle.config.clip_tau;

    json g;
    g["mu_lnq"] = bundle.global.mu_lnq;
    g["sigma_lnq"] = bundle.global.sigma_lnq;
    g["mu_lnh"] = bundle.global.mu_lnh;
    g["sigma_lnh"] = bundle.global.sigma_lnh;
    g["monthly_mu_q"] = monthly_to_json(bundle.global.monthly_mu_q);
    g["monthly_sigma_q"] = monthly_to_json(bundle.global.monthly_sigma_q);
    g["monthly_mu_h"] = monthly_to_json(bundle.global.monthly_mu_h);
    g["monthly_sigma_h"] = monthly_to_json(bundle.global.monthly_sigma_h);
    g["monthly_p1_q"] = monthly_to_json(bundle.global.monthly_p1_q);
    g["monthly_p99_q"] = monthly_to_json(bundle.global.monthly_p99_q);
    g["monthly_p1_h"] = monthly_to_json(bundle.global.monthly_p1_h);
    g["monthly_p99_h"] = monthly_to_json(bundle.global.monthly_p99_h);
    g["static_mean"] = bundle.global.static_mean;
    g["static_std"] = bundle.global.static_std;
    g["sorted_areas"] = bundle.global.sorted_areas;
    g["sorted_elevs"] = bundle.global.sorted_elevs;
    g["roc_theta"] = bundle.global.roc_theta;
    j["global"] = std::move(g);

    json sites = json::object();
    for (const auto& [id, s] : bundle.sites) sites[id] = site_stats_to_json(s);
    j["sites"] = std::move(sites);
    return j.dump(2);
}

StatsBundle stats_from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.at("version").get<std::string>() != kStatsFormatVersion) {
        throw std::runtime_error("unsupported stats file version");
    }
    StatsBundle b;
    b.config.epsilon = j.at("config").at("epsilon").get<double>();
    b.config.clip_tau = j.at("config").at("clip_tau").get<double>();
    const json& g = j.at("global");
    b.global.mu_lnq = g.at("mu_lnq").get<double>();
    b.global.sigma_lnq = g.at("sigma_lnq").get<double>();
    b.global.mu_lnh = g.at("mu_lnh").get<double>();
    b.global.sigma_lnh = g.at("sigma_lnh").get<double>();
    b.global.monthly_mu_q = monthly_from_json(g.at("monthly_mu_q"));
    b.global.monthly_sigma_q = monthly_from_json(g.at("monthly_sigma_q"));
    b.global.monthly_mu_h = monthly_from_json(g.at("monthly_mu_h"));
    b.global.monthly_sigma_h = monthly_from_json(g.at("monthly_sigma_h"));
    b.global.monthly_p1_q = monthly_from_json(g.at("monthly_p1_q"));
    b.global.monthly_p99_q = monthly_from_json(g.at("monthly_p99_q"));
    b.global.monthly_p1_h = monthly_from_json(g.at("monthly_p1_h"));
    b.global.monthly_p99_h = monthly_from_json(g.at("monthly_p99_h"));
    for (int f = 0; f < 4; ++f) {
        b.global.static_mean[f] = g.at("static_mean").at(f).get<double>();
        b.global.static_std[f] = g.at("static_std").at(f).get<double>();
    }
    b.global.sorted_areas = g.at("sorted_areas").get<std::vector<double>>();
    b.global.sorted_elevs = g.at("sorted_elevs").get<std::vector<double>>();
    b.global.roc_theta = g.at("roc_theta").get<double>();
    for (const auto& [id, sj] : j.at("sites").items()) {
        b.sites.emplace(id, site_stats_from_json(sj));
    }
    return b;
}

}  // namespace norm
}  // namespace streamqc
