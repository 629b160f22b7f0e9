#include "streamqc/labels.hpp"

#include <algorithm>
#include <cmath>

#include "streamqc/mathutil.hpp"
#include "streamqc/qc.hpp"

namespace streamqc {
namespace labels {

WeakLabels weak_labels(const PairedSeries& paired, const WeakLabelConfig& config) {
    const std::size_t n = paired.size();
    WeakLabels out;
    out.mask = AnomalyMask(n);
    out.labeled.assign(n, 0);
    out.magnitude.assign(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        const double qr = paired.discharge_raw[t], qc = paired.discharge_corrected[t];
        const double hr = paired.stage_raw[t], hc = paired.stage_corrected[t];
        if (is_missing(qr) || is_missing(qc) || is_missing(hr) || is_missing(hc)) continue;
        out.labeled[t] = 1;
        const double dq = std::fabs(qc - qr) / (std::fabs(qr) + config.eps);
        const double dh = std::fabs(hc - hr) / (std::fabs(hr) + config.eps);
        out.magnitude[t] = std::max(dq, dh);
        if (out.magnitude[t] > config.rel_threshold) out.mask.flags[t] = 1;
    }
    return out;
}

WindowQualityReport window_quality_filter(const std::vector<double>& q_corrected,
                                          const std::vector<double>& h_corrected,
                                          std::uint64_t seed) {
    WindowQualityReport r;
    const std::size_t n = q_corrected.size();
    if (n == 0 || h_corrected.size() != n) return r;

    std::vector<double> q_valid, h_valid;
    std::size_t valid = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double q = q_corrected[t], h = h_corrected[t];
        if (!is_missing(q) && !is_missing(h) && q > 0.0 && h > 0.0) {
            ++valid;
            q_valid.push_back(q);
            h_valid.push_back(h);
        }
    }
    r.valid_fraction = static_cast<double>(valid) / static_cast<double>(n);
    r.pass_valid = r.valid_fraction >= 0.70;

    if (!h_valid.empty()) {
        const double mu = mean_of(h_valid);
        r.cv_h = mu != 0.0 ? population_std(h_valid) / mu : 0.0;
    }
    r.pass_cv = r.cv_h > 0.10;

    r.spearman_qh = spearman(h_valid, q_valid);
    r.pass_spearman = !std::isnan(r.spearman_qh) && r.spearman_qh > 0.5;

    // RANSAC log-log fit with the datum pinned at zero (log Q = log a + b log H)
    qc::RatingFitOptions opt;
    opt.search_h0 = false;
    opt.h0_fixed = 0.0;
    opt.min_pairs = 30;
    const auto fit = qc::fit_rating_robust(q_corrected, h_corrected, opt, seed);
    if (fit.has_value()) {
        r.rating_b = fit->b;
        r.pass_b = fit->b >= 0.5 && fit->b <= 10.0;
        // R^2 of the fitted line over all valid points
        double sse = 0.0, sst = 0.0, mean_y = 0.0;
        std::size_t m = 0;
        for (std::size_t t = 0; t < n; ++t) {
            const double q = q_corrected[t], h = h_corrected[t];
            if (is_missing(q) || is_missing(h) || q <= 0.0 || h <= 0.0) continue;
            mean_y += std::log(q);
            ++m;
        }
        if (m > 0) {
            mean_y /= static_cast<double>(m);
            const double log_a = std::log(fit->a);
            for (std::size_t t = 0; t < n; ++t) {
                const double q = q_corrected[t], h = h_corrected[t];
                if (is_missing(q) || is_missing(h) || q <= 0.0 || h <= 0.0) continue;
                const double y = std::log(q);
                const double pred = log_a + fit->b * std::log(h);
                sse += (y - pred) * (y - pred);
                sst += (y - mean_y) * (y - mean_y);
            }
            r.rating_r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
        }
        r.pass_r2 = r.rating_r2 >= 0.3;
    } else {
        r.rating_b = kMissing;
        r.rating_r2 = kMissing;
    }

    std::size_t flat = 0;
    for (std::size_t t = 1; t < n; ++t) {
        const double a = h_corrected[t - 1], b = h_corrected[t];
        if (is_missing(a) || is_missing(b)) continue;
        if (std::fabs(b - a) < 0.001) ++flat;
    }
    r.flatline_fraction = static_cast<double>(flat) / static_cast<double>(n);
    r.pass_flatline = r.flatline_fraction < 0.30;

    r.pass = r.pass_cv && r.pass_spearman && r.pass_b && r.pass_r2 && r.pass_valid &&
             r.pass_flatline;
    return r;
}

double station_missing_fraction(const PairedSeries& paired) {
    const std::size_t n = paired.size();
    if (n == 0) return 1.0;
    std::size_t missing = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (is_missing(paired.stage_raw[t]) || is_missing(paired.stage_corrected[t]) ||
            is_missing(paired.discharge_raw[t]) || is_missing(paired.discharge_corrected[t])) {
            ++missing;
        }
    }
    return static_cast<double>(missing) / static_cast<double>(n);
}

bool station_missing_filter(const PairedSeries& paired, const WeakLabelConfig& config) {
    return !(station_missing_fraction(paired) > config.station_missing_max);
}

bool correction_fraction_filter(const std::vector<std::uint8_t>& mask_flags,
                                const WeakLabelConfig& config) {
    if (mask_flags.empty()) return false;
    std::size_t on = 0;
    for (const auto f : mask_flags) on += f != 0;
    const double frac = static_cast<double>(on) / static_cast<double>(mask_flags.size());
    return frac >= config.correction_fraction_lo && frac <= config.correction_fraction_hi;
}

AnomalyMask pattern_labels(const PairedSeries& paired, std::size_t offset, std::size_t length) {
    AnomalyMask out(length);
    if (offset + length > paired.size()) return out;

    // first differences of the discharge hydrographs
    std::vector<double> d_raw(length, kMissing), d_corr(length, kMissing);
    for (std::size_t k = 1; k < length; ++k) {
        const std::size_t t = offset + k;
        if (!is_missing(paired.discharge_raw[t]) && !is_missing(paired.discharge_raw[t - 1])) {
            d_raw[k] = paired.discharge_raw[t] - paired.discharge_raw[t - 1];
        }
        if (!is_missing(paired.discharge_corrected[t]) &&
            !is_missing(paired.discharge_corrected[t - 1])) {
            d_corr[k] = paired.discharge_corrected[t] - paired.discharge_corrected[t - 1];
        }
    }

    std::vector<std::uint8_t> low_corr(length, 0);
    for (std::size_t k = 0; k < length; ++k) {
        const std::size_t lo = k >= 23 ? k - 23 : 0;
        std::vector<double> xs, ys;
        for (std::size_t i = lo; i <= k; ++i) {
            if (!is_missing(d_raw[i]) && !is_missing(d_corr[i])) {
                xs.push_back(d_raw[i]);
                ys.push_back(d_corr[i]);
            }
        }
        if (xs.size() < 3) continue;
        double corr = pearson(xs, ys);
        if (std::isnan(corr)) {
            const bool raw_flat = population_std(xs) == 0.0;
            const bool corr_flat = population_std(ys) == 0.0;
            // one flat side: shapes fully decoupled; both flat: they agree
            corr = (raw_flat != corr_flat) ? 0.0 : 1.0;
        }
        low_corr[k] = corr < 0.5 ? 1 : 0;
    }

    std::vector<std::uint8_t> candidate(length, 0);
    for (std::size_t k = 0; k < length; ++k) {
        const std::size_t t = offset + k;
        const bool differs =
            (!is_missing(paired.discharge_raw[t]) &&
             !is_missing(paired.discharge_corrected[t]) &&
             paired.discharge_raw[t] != paired.discharge_corrected[t]) ||
            (!is_missing(paired.stage_raw[t]) && !is_missing(paired.stage_corrected[t]) &&
             paired.stage_raw[t] != paired.stage_corrected[t]);
        candidate[k] = differs && low_corr[k];
    }

    // keep maximal runs of at least 3 hours
    std::size_t k = 0;
    while (k < length) {
        if (!candidate[k]) {
            ++k;
            continue;
        }
        std::size_t end = k;
        while (end + 1 < length && candidate[end + 1]) ++end;
        if (end - k + 1 >= 3) {
            for (std::size_t p = k; p <= end; ++p) out.flags[p] = 1;
        }
        k = end + 1;
    }
    return out;
}

}  // namespace labels
}  // namespace streamqc
