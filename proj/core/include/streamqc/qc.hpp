#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "streamqc/types.hpp"

namespace streamqc {
namespace qc {

struct QcConfig {
    double outlier_sigma = 4.0;
    double roc_percentile = 0.99;
    int ransac_iters = 1000;
    // Inlier acceptance bound on the absolute log-space residual; a 0.15
    // log-residual corresponds to ~15% relative error in linear space.
    double ransac_inlier_frac = 0.15;
    double rating_resid_mult = 2.0;
    double q_max_mult = 2.0;
    double stage_margin_ft = 1.0;
    int linear_fill_max_h = 6;
    int recession_fill_max_h = 24;
    double completeness_min = 0.90;
};

// Power-law rating Q = a * (H - H0)^b with the log-space residual spread of
// the final inlier set.
struct RatingFit {
    double a = 0.0;
    double b = 0.0;
    double h0 = 0.0;
    double resid_std = 0.0;
};

struct RatingFitOptions {
    int iterations = 1000;
    double inlier_log_threshold = 0.15;
    std::size_t min_pairs = 200;
    double min_inlier_fraction = 0.5;
    bool search_h0 = true;   // when false the datum is pinned at h0_fixed
    double h0_fixed = 0.0;
    double grid_span = 2.0;  // grid covers [min(H)-span, min(H)-near]
    double grid_near = 0.01;
    int grid_steps = 50;
};

// Per-channel linear-space monthly climatology (index 0 = January).
struct MonthlyClimatology {
    std::array<double, 12> mu_q{}, sigma_q{}, mu_h{}, sigma_h{};
    std::array<int, 12> count{};
};

struct FlagResult {
    std::vector<std::uint8_t> flags;  // same length as the series
    std::vector<std::string> warnings;
};

struct TrainingExtrema {
    double q_max = 0.0;
    double h_min = 0.0;
    double h_max = 0.0;
};

struct FillStats {
    std::size_t linear_hours = 0;
    std::size_t recession_hours = 0;
    std::size_t excluded_hours = 0;
    std::size_t total_gap_hours = 0;  // always linear + recession + excluded
};

struct FillResult {
    HourlySeries series;
    FillStats stats;
    std::vector<std::string> warnings;
};

MonthlyClimatology compute_monthly_climatology(const HourlySeries& series);

// Flags |x - mu_month| > outlier_sigma * sigma_month (strict) on either
// channel. Months with zero observations are skipped with a warning; months
// with sigma == 0 contribute no flags.
FlagResult monthly_outlier_flags(const HourlySeries& series, const MonthlyClimatology& clim,
                                 const QcConfig& config = {});

struct RocResult {
    std::vector<std::uint8_t> flags;
    double theta = 0.0;
    bool used_fallback = false;
    std::vector<std::string> warnings;
};

// Site-specific rate-of-change check on discharge. theta is the p99 of
// |Q_t - Q_{t-1}| / Q_{t-1} over valid pairs with Q_{t-1} > 0; a pair
// exceeding theta (strictly) flags the later timestep. Sites with fewer than
// 100 valid pairs fall back to global_theta when provided.
RocResult rate_of_change_flags(const HourlySeries& series, const QcConfig& config = {},
                               std::optional<double> global_theta = std::nullopt);

// Pooled fractional discharge changes across many series (for the corpus
// fallback theta).
std::vector<double> fractional_discharge_changes(const HourlySeries& series);

// RANSAC power-law fit in log space. The datum H0 is searched over a coarse
// grid below min(H) during sampling and refined by golden-section on the
// winning inlier set. Returns nullopt when no model reaches the inlier
// majority or the data is degenerate (constant Q or constant H).
std::optional<RatingFit> fit_rating_robust(const std::vector<double>& q,
                                           const std::vector<double>& h,
                                           const RatingFitOptions& options, std::uint64_t seed);

std::optional<RatingFit> fit_rating(const HourlySeries& series, const QcConfig& config,
                                    std::uint64_t seed);

// Flags points whose log residual exceeds rating_resid_mult * resid_std, and
// points with H <= H0 (implausible under the fitted rating).
FlagResult rating_flags(const HourlySeries& series, const RatingFit& fit,
                        const QcConfig& config = {});

// Range bounds: Q outside [0, q_max_mult * q_max] or H outside
// [h_min - margin, h_max + margin] (closed intervals are inside).
FlagResult range_flags(const HourlySeries& series, const TrainingExtrema& extrema,
                       const QcConfig& config = {});

TrainingExtrema observed_extrema(const HourlySeries& series);

// Recession constant from the 48 h before gap_start: the endpoints of the
// longest strictly-positive observed run give k = -ln(Q1/Q0)/dt, clamped at
// 0. Runs shorter than 6 h fall back to the site median over all >= 6 h
// monotone-decline segments; nullopt when neither source exists.
std::optional<double> estimate_recession_k(const std::vector<double>& q, std::size_t gap_start,
                                           const QcConfig& config = {});

std::optional<double> site_median_recession_k(const std::vector<double>& q);

// Gap filling per the tiered protocol. Timesteps flagged outlier/implausible
// are converted to gaps first. Joint gaps (either channel missing) of up to
// 6 h fill linearly; 6-24 h gaps fill discharge by exponential recession and
// stage linearly; longer gaps, and gaps touching the series boundary, are
// excluded. Fills never overwrite observed values.
FillResult fill_gaps(const HourlySeries& series, const QcConfig& config = {});

// Accept iff the fraction of valid (non-missing, non-excluded) timesteps is
// at least completeness_min.
bool completeness_filter(const HourlySeries& series, const QcConfig& config = {});

double completeness_fraction(const HourlySeries& series);

// Whole-site QC pass: monthly outliers, rate of change, rating validation,
// range bounds, gap conversion + fill, completeness. Deterministic given
// (series, config, seed).
struct SiteQcResult {
    HourlySeries filled;
    FillStats fill_stats;
    bool accepted = false;
    double completeness = 0.0;
    double roc_theta = 0.0;
    bool roc_used_fallback = false;
    std::optional<RatingFit> rating;
    std::size_t outlier_count = 0;
    std::size_t implausible_count = 0;
    std::vector<std::string> warnings;
};

SiteQcResult run_site_qc(const HourlySeries& series, const QcConfig& config, std::uint64_t seed,
                         std::optional<double> global_roc_theta = std::nullopt);

}  // namespace qc
}  // namespace streamqc
