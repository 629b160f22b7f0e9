#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "streamqc/types.hpp"

namespace streamqc {
namespace norm {

struct NormConfig {
    double epsilon = 1e-8;  // numeric guard inside log / standardization
    double clip_tau = 3.0;  // input clipping bound
};

enum class StatsSource { kSiteSpecific, kGlobalFallback };

// Per-site normalization statistics, scale embeddings and monthly
// climatology, all computed exclusively from the training partition.
struct SiteStats {
    double mu_lnq = 0.0, sigma_lnq = 0.0;
    double mu_lnh = 0.0, sigma_lnh = 0.0;
    // linear-space monthly climatology (index 0 = January); NaN for months
    // with no observations
    std::array<double, 12> monthly_mu_q{}, monthly_sigma_q{};
    std::array<double, 12> monthly_mu_h{}, monthly_sigma_h{};
    // month-specific percentile bands for the seasonal envelope detector
    std::array<double, 12> monthly_p1_q{}, monthly_p99_q{};
    std::array<double, 12> monthly_p1_h{}, monthly_p99_h{};
    double rank_area = 0.5;
    double rank_elev = 0.5;
    StatsSource source = StatsSource::kSiteSpecific;
};

// Corpus-level statistics substituted for sites absent from the training
// partition. mu/sigma are the equal-site-weight mixture moments over all
// training timesteps (mean of per-site means; variance = mean of per-site
// variances + variance of per-site means). Monthly climatology and envelope
// bands pool all training observations.
struct GlobalStats {
    double mu_lnq = 0.0, sigma_lnq = 0.0;
    double mu_lnh = 0.0, sigma_lnh = 0.0;
    std::array<double, 12> monthly_mu_q{}, monthly_sigma_q{};
    std::array<double, 12> monthly_mu_h{}, monthly_sigma_h{};
    std::array<double, 12> monthly_p1_q{}, monthly_p99_q{};
    std::array<double, 12> monthly_p1_h{}, monthly_p99_h{};
    // static feature standardization (lat, lon, drainage area, elevation)
    std::array<double, 4> static_mean{}, static_std{};
    // sorted training-site values for rank interpolation of unseen sites
    std::vector<double> sorted_areas, sorted_elevs;
    // pooled p99 of fractional discharge changes (rate-of-change fallback)
    double roc_theta = 0.0;
};

struct StatsBundle {
    NormConfig config;
    GlobalStats global;
    std::map<std::string, SiteStats> sites;  // training sites only

    // Site-specific stats when the site was fitted; global fallback (with
    // interpolated ranks) otherwise.
    SiteStats stats_for(const SiteMeta& site) const;
    bool has_site(const std::string& site_id) const { return sites.count(site_id) > 0; }
};

struct FitInput {
    SiteMeta site;
    const HourlySeries* series = nullptr;  // QC-filled training series
};

struct FitResult {
    StatsBundle bundle;
    std::vector<std::string> warnings;  // dropped sites etc.
};

// Fits per-site and global statistics from training-partition series only.
// Sites with fewer than 720 valid hours are dropped with a warning.
FitResult fit_site_stats(const std::vector<FitInput>& training_sites,
                         const NormConfig& config = {});

// Tier 1-3: x = clip((ln(v + eps) - mu) / (sigma + eps), -tau, tau).
// Throws std::domain_error on negative input.
double normalize_value(double physical, double mu, double sigma, const NormConfig& config = {});

// Exact inverse without clipping: exp(y * (sigma + eps) + mu) - eps.
// Throws std::overflow_error when the result overflows, naming the value.
double denormalize_value(double ynorm, double mu, double sigma, const NormConfig& config = {});

// Static (never-logged) features standardize linearly and skip the
// exponential on the way back.
double normalize_static(double value, double mean, double stddev, const NormConfig& config = {});
double denormalize_static(double ynorm, double mean, double stddev,
                          const NormConfig& config = {});

// Interpolated ordinal rank of `value` within the sorted training values,
// clamped to [0, 1].
double interpolate_rank(const std::vector<double>& sorted_values, double value);

// Builds the 12-channel feature window from a raw Q/H slice. Channel layout
// is the fixed order declared in types.hpp. Invalid timesteps carry zeros in
// the dynamic channels and a false observation mask.
Window build_features(const RawWindow& raw, const SiteMeta& site, const SiteStats& stats,
                      const GlobalStats& global, const NormConfig& config = {});

// Convenience: physical Q/H recovered from a feature window's dynamic
// channels.
void denormalize_window(const Window& window, const SiteStats& stats, const NormConfig& config,
                        std::vector<double>* q_out, std::vector<double>* h_out);

// Versioned JSON persistence (field names are part of the artifact format).
std::string stats_to_json(const StatsBundle& bundle);
StatsBundle stats_from_json(const std::string& text);

inline constexpr const char* kStatsFormatVersion = "stats-v1";

}  // namespace norm
}  // namespace streamqc
