#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "streamqc/types.hpp"

namespace streamqc {
namespace eval {

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct Prf1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate = false;  // a zero-denominator case was forced to 0
    Confusion confusion;
};

// Standard precision/recall/F1 over labeled timesteps. `valid` (optional,
// empty = all valid) restricts the evaluation to labeled timesteps.
Prf1 prf1(const std::vector<std::uint8_t>& flags, const std::vector<std::uint8_t>& labels,
          const std::vector<std::uint8_t>& valid = {});

// AUROC as the Mann-Whitney statistic (ties count 1/2), computed via average
// ranks with integer arithmetic so it matches the O(n^2) pairwise count
// exactly. Degenerate label sets (no positives or no negatives) return 0.5.
double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
             const std::vector<std::uint8_t>& valid = {});

// Percent reduction in absolute error to the clean signal, aggregated per
// contiguous anomalous segment and averaged over segments. Segments with
// zero raw error are skipped; NaN when no usable segment exists.
double error_reduction(const std::vector<double>& raw, const std::vector<double>& clean,
                       const std::vector<double>& recon, const std::vector<std::uint8_t>& mask);

// RMSE over anomalous and clean timesteps separately (NaN for empty sets).
std::pair<double, double> rmse_segments(const std::vector<double>& pred,
                                        const std::vector<double>& truth,
                                        const std::vector<std::uint8_t>& mask);

// Micro PRF1 pooled per anomaly type over single-type-isolation windows.
struct TypedWindow {
    int type_id = -1;
    std::vector<std::uint8_t> flags;
    std::vector<std::uint8_t> labels;
};
std::map<int, Prf1> per_type_f1(const std::vector<TypedWindow>& windows);

// Table-8-style magnitude bins (half-open on the left).
struct MagnitudeBin {
    double lo = 0.0, hi = 0.0;
    std::size_t total = 0;
    std::size_t detected = 0;
    double recall() const {
        return total == 0 ? 0.0 : static_cast<double>(detected) / static_cast<double>(total);
    }
};
std::vector<MagnitudeBin> magnitude_stratified_recall(const std::vector<std::uint8_t>& flags,
                                                      const std::vector<std::uint8_t>& labels,
                                                      const std::vector<double>& magnitude);

// Meteorological seasons in order {DJF, MAM, JJA, SON}.
enum Season : int { kWinter = 0, kSpring = 1, kSummer = 2, kFall = 3 };
int season_of_month(int month);  // 1..12 -> Season
const char* season_name(int season);

struct SeasonalRates {
    std::array<double, 4> rate{};        // flagged fraction per season
    std::array<std::size_t, 4> total{};  // timesteps per season
};
SeasonalRates seasonal_flag_rates(const std::vector<std::uint8_t>& flags, HourStamp start_hour);

// Maximal runs binned into {<6 h, 6-48 h, >48 h}.
std::array<std::size_t, 3> duration_histogram(const std::vector<std::uint8_t>& mask);

struct WilcoxonResult {
    double p_value = 1.0;
    double w_plus = 0.0;
    std::size_t n = 0;   // nonzero differences
    bool exact = false;  // exact distribution (n <= 25) vs normal approximation
};

// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences are
// dropped and tied ranks averaged; the exact null distribution is enumerated
// (via DP over doubled ranks) for n <= 25, with a continuity-corrected normal
// approximation beyond.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace eval
}  // namespace streamqc
