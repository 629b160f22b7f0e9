#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streamqc/ingest.hpp"
#include "streamqc/types.hpp"

namespace streamqc {
namespace labels {

struct WeakLabelConfig {
    double rel_threshold = 0.01;
    double eps = 1e-8;
    double correction_fraction_lo = 0.10;
    double correction_fraction_hi = 0.40;
    double station_missing_max = 0.05;
};

// Correction-based weak labels. `labeled[t]` marks timesteps where all four
// channels are present; unlabeled timesteps are excluded from every metric.
// `magnitude[t]` carries max(dQ_rel, dH_rel) for labeled timesteps.
struct WeakLabels {
    AnomalyMask mask;
    std::vector<std::uint8_t> labeled;
    std::vector<double> magnitude;
};

// y_t = 1 iff |Q_corr - Q_raw| / (|Q_raw| + eps) > threshold, or likewise for
// stage (strict >).
WeakLabels weak_labels(const PairedSeries& paired, const WeakLabelConfig& config = {});

// The six corrected-record quality criteria. overall pass = all six.
struct WindowQualityReport {
    double cv_h = 0.0;
    double spearman_qh = 0.0;
    double rating_b = 0.0;
    double rating_r2 = 0.0;
    double valid_fraction = 0.0;
    double flatline_fraction = 0.0;
    bool pass_cv = false;
    bool pass_spearman = false;
    bool pass_b = false;
    bool pass_r2 = false;
    bool pass_valid = false;
    bool pass_flatline = false;
    bool pass = false;
};

// Applies the checks to one corrected-series window: CV(H) > 0.10,
// Spearman(H, Q) > 0.5, RANSAC log-log exponent b in [0.5, 10], R^2 >= 0.3,
// valid fraction (Q > 0 and H > 0) >= 0.70, and < 30% of consecutive stage
// differences below 0.001 ft.
WindowQualityReport window_quality_filter(const std::vector<double>& q_corrected,
                                          const std::vector<double>& h_corrected,
                                          std::uint64_t seed);

double station_missing_fraction(const PairedSeries& paired);

// Reject iff the fraction of hours missing any of the four channels exceeds
// station_missing_max (strict >).
bool station_missing_filter(const PairedSeries& paired, const WeakLabelConfig& config = {});

// Accept iff mean(mask) lies in [lo, hi] (closed).
bool correction_fraction_filter(const std::vector<std::uint8_t>& mask_flags,
                                const WeakLabelConfig& config = {});

// Pattern-based label track (pattern-labels-v1, artifact-owned): flags
// maximal runs (>= 3 h) of timesteps where raw and corrected values differ
// AND the trailing 24 h correlation between the first differences of raw and
// corrected discharge drops below 0.5. One-sided zero-variance windows count
// as fully decorrelated; both-flat windows as agreeing.
AnomalyMask pattern_labels(const PairedSeries& paired, std::size_t offset, std::size_t length);

inline constexpr const char* kPatternLabelsVersion = "pattern-labels-v1";

}  // namespace labels
}  // namespace streamqc
