#include "streamqc/qc.hpp"

#include <algorithm>
#include <cmath>

#include "streamqc/mathutil.hpp"
#include "streamqc/rng.hpp"

namespace streamqc {
namespace qc {

MonthlyClimatology compute_monthly_climatology(const HourlySeries& series) {
    MonthlyClimatology clim;
    std::array<std::vector<double>, 12> q_by_month, h_by_month;
    for (std::size_t t = 0; t < series.size(); ++t) {
        const int m = month_of_hour(series.hour_at(t)) - 1;
        if (!is_missing(series.discharge[t])) q_by_month[m].push_back(series.discharge[t]);
        if (!is_missing(series.stage[t])) h_by_month[m].push_back(series.stage[t]);
    }
    for (int m = 0; m < 12; ++m) {
        clim.count[m] = static_cast<int>(std::min(q_by_month[m].size(), h_by_month[m].size()));
        clim.mu_q[m] = q_by_month[m].empty() ? kMissing : mean_of(q_by_month[m]);
        clim.sigma_q[m] = q_by_month[m].empty() ? kMissing : population_std(q_by_month[m]);
        clim.mu_h[m] = h_by_month[m].empty() ? kMissing : mean_of(h_by_month[m]);
        clim.sigma_h[m] = h_by_month[m].empty() ? kMissing : population_std(h_by_month[m]);
    }
    return clim;
}

FlagResult monthly_outlier_flags(const HourlySeries& series, const MonthlyClimatology& clim,
                                 const QcConfig& config) {
    FlagResult out;
    out.flags.assign(series.size(), kFlagNone);
    std::array<bool, 12> warned{};
    for (std::size_t t = 0; t < series.size(); ++t) {
        const int m = month_of_hour(series.hour_at(t)) - 1;
        if (clim.count[m] == 0) {
            if (!warned[m]) {
                warned[m] = true;
                out.warnings.push_back("month " + std::to_string(m + 1) +
                                       " has no climatology, outlier check skipped");
            }
            continue;
        }
        const double q = series.discharge[t];
        const double h = series.stage[t];
        bool flag = false;
        if (!is_missing(q) && !is_missing(clim.mu_q[m]) && clim.sigma_q[m] > 0.0) {
            flag |= std::fabs(q - clim.mu_q[m]) > config.outlier_sigma * clim.sigma_q[m];
        }
        if (!is_missing(h) && !is_missing(clim.mu_h[m]) && clim.sigma_h[m] > 0.0) {
            flag |= std::fabs(h - clim.mu_h[m]) > config.outlier_sigma * clim.sigma_h[m];
        }
        if (flag) out.flags[t] |= kFlagOutlier;
    }
    return out;
}

std::vector<double> fractional_discharge_changes(const HourlySeries& series) {
    std::vector<double> changes;
    for (std::size_t t = 1; t < series.size(); ++t) {
        const double prev = series.discharge[t - 1];
        const double cur = series.discharge[t];
        if (is_missing(prev) || is_missing(cur) || prev <= 0.0) continue;
        changes.push_back(std::fabs(cur - prev) / prev);
    }
    return changes;
}

RocResult rate_of_change_flags(const HourlySeries& series, const QcConfig& config,
                               std::optional<double> global_theta) {
    RocResult out;
    out.flags.assign(series.size(), kFlagNone);
    const std::vector<double> changes = fractional_discharge_changes(series);
    if (changes.size() >= 100) {
        out.theta = quantile_of(changes, config.roc_percentile);
    } else if (global_theta.has_value()) {
        out.theta = *global_theta;
        out.used_fallback = true;
    } else {
        out.warnings.push_back("fewer than 100 valid pairs and no global fallback, "
                               "rate-of-change check skipped");
        return out;
    }
    for (std::size_t t = 1; t < series.size(); ++t) {
        const double prev = series.discharge[t - 1];
        const double cur = series.discharge[t];
        if (is_missing(prev) || is_missing(cur) || prev <= 0.0) continue;
        if (std::fabs(cur - prev) / prev > out.theta) out.flags[t] |= kFlagImplausible;
    }
    return out;
}

namespace {

struct OlsFit {
    double intercept = 0.0;
    double slope = 0.0;
    double sse = 0.0;
    double var_x = 0.0;
    double var_y = 0.0;
};

// OLS of y on x restricted to `idx`, with x = ln(h - h0).
OlsFit ols_log_fit(const std::vector<double>& h, const std::vector<double>& y,
                   const std::vector<std::size_t>& idx, double h0) {
    OlsFit fit;
    const std::size_t n = idx.size();
    double sx = 0.0, sy = 0.0;
    std::vector<double> xs(n);
    for (std::size_t k = 0; k < n; ++k) {
        xs[k] = std::log(h[idx[k]] - h0);
        sx += xs[k];
        sy += y[idx[k]];
    }
    const double mx = sx / static_cast<double>(n);
    const double my = sy / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = xs[k] - mx;
        const double dy = y[idx[k]] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    fit.var_x = sxx / static_cast<double>(n);
    fit.var_y = syy / static_cast<double>(n);
    if (sxx <= 0.0) {
        fit.slope = 0.0;
        fit.intercept = my;
        fit.sse = syy;
        return fit;
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.sse = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = y[idx[k]] - (fit.intercept + fit.slope * xs[k]);
        fit.sse += r * r;
    }
    return fit;
}

}  // namespace

std::optional<RatingFit> fit_rating_robust(const std::vector<double>& q,
                                           const std::vector<double>& h,
                                           const RatingFitOptions& options, std::uint64_t seed) {
    std::vector<std::size_t> pairs;
    for (std::size_t t = 0; t < std::min(q.size(), h.size()); ++t) {
        if (!is_missing(q[t]) && !is_missing(h[t]) && q[t] > 0.0) pairs.push_back(t);
    }
    if (pairs.size() < options.min_pairs) return std::nullopt;

    double min_h = h[pairs.front()];
    for (const std::size_t t : pairs) min_h = std::min(min_h, h[t]);

    std::vector<double> y(q.size(), 0.0);
    for (const std::size_t t : pairs) y[t] = std::log(q[t]);

    const int grid_n = options.search_h0 ? options.grid_steps : 1;
    auto grid_h0 = [&](int k) {
        if (!options.search_h0) return options.h0_fixed;
        const double lo = min_h - options.grid_span;
        const double hi = min_h - options.grid_near;
        return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid_n - 1);
    };

    Rng rng(seed);
    std::size_t best_count = 0;
    double best_h0 = 0.0, best_b = 0.0, best_c = 0.0;

    for (int it = 0; it < options.iterations; ++it) {
        const double h0 = grid_h0(static_cast<int>(rng.uniform_int(0, grid_n - 1)));
        const std::size_t i = pairs[rng.uniform_int(0, static_cast<std::int64_t>(pairs.size()) - 1)];
        const std::size_t j = pairs[rng.uniform_int(0, static_cast<std::int64_t>(pairs.size()) - 1)];
        if (i == j || h[i] <= h0 || h[j] <= h0) continue;
        const double xi = std::log(h[i] - h0);
        const double xj = std::log(h[j] - h0);
        if (std::fabs(xj - xi) < 1e-12) continue;
        const double b = (y[j] - y[i]) / (xj - xi);
        const double c = y[i] - b * xi;
        std::size_t count = 0;
        for (const std::size_t t : pairs) {
            if (h[t] <= h0) continue;
            const double r = y[t] - (c + b * std::log(h[t] - h0));
            if (std::fabs(r) <= options.inlier_log_threshold) ++count;
        }
        if (count > best_count) {
            best_count = count;
            best_h0 = h0;
            best_b = b;
            best_c = c;
        }
    }

    if (best_count * 2 < pairs.size()) return std::nullopt;

    // Inlier set of the winning minimal-sample model.
    std::vector<std::size_t> inliers;
    for (const std::size_t t : pairs) {
        if (h[t] <= best_h0) continue;
        const double r = y[t] - (best_c + best_b * std::log(h[t] - best_h0));
        if (std::fabs(r) <= options.inlier_log_threshold) inliers.push_back(t);
    }
    if (inliers.size() < 3) return std::nullopt;

    double h0 = best_h0;
    if (options.search_h0) {
        // Golden-section refinement of the datum around the winning grid
        // cell, driven by the OLS SSE over the fixed inlier set.
        const double step =
            (options.grid_span - options.grid_near) / static_cast<double>(grid_n - 1);
        double min_h_inlier = h[inliers.front()];
        for (const std::size_t t : inliers) min_h_inlier = std::min(min_h_inlier, h[t]);
        double lo = best_h0 - step;
        double hi = std::min(best_h0 + step, min_h_inlier - 1e-9);
        if (hi > lo) {
            const double gr = 0.6180339887498949;
            double x1 = hi - gr * (hi - lo);
            double x2 = lo + gr * (hi - lo);
            double f1 = ols_log_fit(h, y, inliers, x1).sse;
            double f2 = ols_log_fit(h, y, inliers, x2).sse;
            for (int k = 0; k < 80; ++k) {
                if (f1 <= f2) {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - gr * (hi - lo);
                    f1 = ols_log_fit(h, y, inliers, x1).sse;
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + gr * (hi - lo);
                    f2 = ols_log_fit(h, y, inliers, x2).sse;
                }
            }
            h0 = 0.5 * (lo + hi);
        }
    }

    const OlsFit fit = ols_log_fit(h, y, inliers, h0);
    if (fit.var_y < 1e-18 || fit.var_x < 1e-18) return std::nullopt;  // b indeterminate

    RatingFit result;
    result.a = std::exp(fit.intercept);
    result.b = fit.slope;
    result.h0 = h0;
    result.resid_std = std::sqrt(fit.sse / static_cast<double>(inliers.size()));
    if (!std::isfinite(result.a) || !std::isfinite(result.b)) return std::nullopt;
    return result;
}

std::optional<RatingFit> fit_rating(const HourlySeries& series, const QcConfig& config,
                                    std::uint64_t seed) {
    RatingFitOptions opt;
    opt.iterations = config.ransac_iters;
    opt.inlier_log_threshold = config.ransac_inlier_frac;
    return fit_rating_robust(series.discharge, series.stage, opt, seed);
}

FlagResult rating_flags(const HourlySeries& series, const RatingFit& fit,
                        const QcConfig& config) {
    FlagResult out;
    out.flags.assign(series.size(), kFlagNone);
    const double log_a = std::log(fit.a);
    for (std::size_t t = 0; t < series.size(); ++t) {
        const double q = series.discharge[t];
        const double h = series.stage[t];
        if (is_missing(q) || is_missing(h) || q <= 0.0) continue;
        if (h <= fit.h0) {
            out.flags[t] |= kFlagImplausible;
            continue;
        }
        const double r = std::log(q) - (log_a + fit.b * std::log(h - fit.h0));
        if (std::fabs(r) > config.rating_resid_mult * fit.resid_std) {
            out.flags[t] |= kFlagImplausible;
        }
    }
    return out;
}

TrainingExtrema observed_extrema(const HourlySeries& series) {
    TrainingExtrema e;
    bool first_q = true, first_h = true;
    for (std::size_t t = 0; t < series.size(); ++t) {
        if (!is_missing(series.discharge[t])) {
            e.q_max = first_q ? series.discharge[t] : std::max(e.q_max, series.discharge[t]);
            first_q = false;
        }
        if (!is_missing(series.stage[t])) {
            if (first_h) {
                e.h_min = e.h_max = series.stage[t];
                first_h = false;
            } else {
                e.h_min = std::min(e.h_min, series.stage[t]);
                e.h_max = std::max(e.h_max, series.stage[t]);
            }
        }
    }
    return e;
}

FlagResult range_flags(const HourlySeries& series, const TrainingExtrema& extrema,
                       const QcConfig& config) {
    FlagResult out;
    out.flags.assign(series.size(), kFlagNone);
    const double q_hi = config.q_max_mult * extrema.q_max;
    const double h_lo = extrema.h_min - config.stage_margin_ft;
    const double h_hi = extrema.h_max + config.stage_margin_ft;
    for (std::size_t t = 0; t < series.size(); ++t) {
        const double q = series.discharge[t];
        const double h = series.stage[t];
        if (!is_missing(q) && (q < 0.0 || q > q_hi)) out.flags[t] |= kFlagImplausible;
        if (!is_missing(h) && (h < h_lo || h > h_hi)) out.flags[t] |= kFlagImplausible;
    }
    return out;
}

std::optional<double> site_median_recession_k(const std::vector<double>& q) {
    std::vector<double> ks;
    std::size_t t = 0;
    const std::size_t n = q.size();
    while (t < n) {
        if (is_missing(q[t]) || q[t] <= 0.0) {
            ++t;
            continue;
        }
        // maximal run of positive observed values with non-increasing q
        std::size_t end = t;
        while (end + 1 < n && !is_missing(q[end + 1]) && q[end + 1] > 0.0 &&
               q[end + 1] <= q[end]) {
            ++end;
        }
        const std::size_t len = end - t + 1;
        if (len >= 6 && q[end] < q[t]) {
            ks.push_back(std::log(q[t] / q[end]) / static_cast<double>(end - t));
        }
        t = end + 1;
    }
    if (ks.empty()) return std::nullopt;
    return median_of(std::move(ks));
}

std::optional<double> estimate_recession_k(const std::vector<double>& q, std::size_t gap_start,
                                           const QcConfig& config) {
    (void)config;
    const std::size_t lo = gap_start >= 48 ? gap_start - 48 : 0;
    // longest strictly-positive observed run in [lo, gap_start); ties keep
    // the run closest to the gap
    std::size_t best_start = 0, best_len = 0;
    std::size_t run_start = lo, run_len = 0;
    for (std::size_t t = lo; t < gap_start; ++t) {
        if (!is_missing(q[t]) && q[t] > 0.0) {
            if (run_len == 0) run_start = t;
            ++run_len;
            if (run_len >= best_len) {
                best_len = run_len;
                best_start = run_start;
            }
        } else {
            run_len = 0;
        }
    }
    if (best_len >= 6) {
        const std::size_t t0 = best_start;
        const std::size_t t1 = best_start + best_len - 1;
        const double dt = static_cast<double>(t1 - t0);
        const double k = -std::log(q[t1] / q[t0]) / dt;
        return std::max(0.0, k);  // rising pre-gap limb clamps to constant extension
    }
    const auto fallback = site_median_recession_k(q);
    if (fallback.has_value()) return std::max(0.0, *fallback);
    return std::nullopt;
}

namespace {

// Linear interpolation of every missing stretch of one channel inside
// [g0, g1). Bounding observed values always exist because joint gaps are
// interior and maximal.
void fill_channel_linear(std::vector<double>& v, std::size_t g0, std::size_t g1) {
    std::size_t t = g0;
    while (t < g1) {
        if (!is_missing(v[t])) {
            ++t;
            continue;
        }
        std::size_t lb = t - 1;  // observed: joint gap is interior
        std::size_t rb = t;
        while (is_missing(v[rb])) ++rb;
        for (std::size_t p = t; p < rb; ++p) {
            const double frac =
                static_cast<double>(p - lb) / static_cast<double>(rb - lb);
            v[p] = v[lb] + (v[rb] - v[lb]) * frac;
        }
        t = rb;
    }
}

void fill_channel_recession(std::vector<double>& v, std::size_t g0, std::size_t g1, double k) {
    std::size_t t = g0;
    while (t < g1) {
        if (!is_missing(v[t])) {
            ++t;
            continue;
        }
        const std::size_t lb = t - 1;
        std::size_t rb = t;
        while (rb < g1 && is_missing(v[rb])) ++rb;
        for (std::size_t p = t; p < rb; ++p) {
            v[p] = v[lb] * std::exp(-k * static_cast<double>(p - lb));
        }
        t = rb;
    }
}

}  // namespace

FillResult fill_gaps(const HourlySeries& series, const QcConfig& config) {
    FillResult out;
    out.series = series;
    HourlySeries& s = out.series;
    const std::size_t n = s.size();
    if (s.flags.size() != n) s.flags.assign(n, kFlagNone);

    // flagged outliers / implausible values become gaps before filling
    for (std::size_t t = 0; t < n; ++t) {
        if (s.flags[t] & (kFlagOutlier | kFlagImplausible)) {
            s.discharge[t] = kMissing;
            s.stage[t] = kMissing;
        }
    }

    auto joint_missing = [&](std::size_t t) {
        return is_missing(s.discharge[t]) || is_missing(s.stage[t]);
    };

    std::size_t t = 0;
    while (t < n) {
        if (!joint_missing(t)) {
            ++t;
            continue;
        }
        std::size_t g1 = t;
        while (g1 < n && joint_missing(g1)) ++g1;
        const std::size_t g0 = t;
        const std::size_t len = g1 - g0;
        out.stats.total_gap_hours += len;

        const bool interior = g0 > 0 && g1 < n;
        bool excluded = false;
        if (!interior || len > static_cast<std::size_t>(config.recession_fill_max_h)) {
            excluded = true;
        } else if (len <= static_cast<std::size_t>(config.linear_fill_max_h)) {
            fill_channel_linear(s.discharge, g0, g1);
            fill_channel_linear(s.stage, g0, g1);
            for (std::size_t p = g0; p < g1; ++p) s.flags[p] |= kFlagFillLinear;
            out.stats.linear_hours += len;
        } else {
            const auto k = estimate_recession_k(s.discharge, g0, config);
            if (k.has_value()) {
                fill_channel_recession(s.discharge, g0, g1, *k);
                fill_channel_linear(s.stage, g0, g1);
                for (std::size_t p = g0; p < g1; ++p) s.flags[p] |= kFlagFillRecession;
                out.stats.recession_hours += len;
            } else {
                out.warnings.push_back("no recession estimate for gap at offset " +
                                       std::to_string(g0) + ", excluded");
                excluded = true;
            }
        }
        if (excluded) {
            for (std::size_t p = g0; p < g1; ++p) {
                s.flags[p] |= kFlagExcluded;
                s.discharge[p] = kMissing;
                s.stage[p] = kMissing;
            }
            out.stats.excluded_hours += len;
        }
        t = g1;
    }
    return out;
}

double completeness_fraction(const HourlySeries& series) {
    if (series.size() == 0) return 0.0;
    std::size_t valid = 0;
    for (std::size_t t = 0; t < series.size(); ++t) {
        const bool excluded =
            t < series.flags.size() && (series.flags[t] & kFlagExcluded) != 0;
        if (!excluded && !is_missing(series.discharge[t]) && !is_missing(series.stage[t])) {
            ++valid;
        }
    }
    return static_cast<double>(valid) / static_cast<double>(series.size());
}

bool completeness_filter(const HourlySeries& series, const QcConfig& config) {
    return completeness_fraction(series) >= config.completeness_min;
}

SiteQcResult run_site_qc(const HourlySeries& series, const QcConfig& config, std::uint64_t seed,
                         std::optional<double> global_roc_theta) {
    SiteQcResult out;
    HourlySeries work = series;
    if (work.flags.size() != work.size()) work.flags.assign(work.size(), kFlagNone);

    const MonthlyClimatology clim = compute_monthly_climatology(work);
    const FlagResult outliers = monthly_outlier_flags(work, clim, config);
    const RocResult roc = rate_of_change_flags(work, config, global_roc_theta);
    out.roc_theta = roc.theta;
    out.roc_used_fallback = roc.used_fallback;

    out.rating = fit_rating(work, config, seed);
    FlagResult rating;
    rating.flags.assign(work.size(), kFlagNone);
    if (out.rating.has_value()) {
        rating = rating_flags(work, *out.rating, config);
    } else {
        out.warnings.push_back("rating fit unavailable, rating checks skipped");
    }
    const FlagResult range = range_flags(work, observed_extrema(work), config);

    for (std::size_t t = 0; t < work.size(); ++t) {
        work.flags[t] |= outliers.flags[t] | roc.flags[t] | rating.flags[t] | range.flags[t];
        if (work.flags[t] & kFlagOutlier) ++out.outlier_count;
        if (work.flags[t] & kFlagImplausible) ++out.implausible_count;
    }

    for (const auto& lists : {outliers.warnings, roc.warnings}) {
        out.warnings.insert(out.warnings.end(), lists.begin(), lists.end());
    }

    FillResult filled = fill_gaps(work, config);
    out.warnings.insert(out.warnings.end(), filled.warnings.begin(), filled.warnings.end());
    out.fill_stats = filled.stats;
    out.completeness = completeness_fraction(filled.series);
    out.accepted = out.completeness >= config.completeness_min;
    out.filled = std::move(filled.series);
    return out;
}

}  // namespace qc
}  // namespace streamqc
