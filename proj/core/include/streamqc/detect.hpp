#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "streamqc/mlp.hpp"
#include "streamqc/normalize.hpp"
#include "streamqc/types.hpp"

namespace streamqc {
namespace detect {

// Per-window output of one detector. flags are always recomputable from
// scores via the detector's documented threshold rule:
//   zscore            score = max |z| over channels,      flag: > 3
//   iqr               score = bracket excess / IQR,       flag: > 0
//   moving_avg        score = |resid| / (3 rolling std),  flag: > 1
//   isolation_forest  score = path-length anomaly score,  flag: top 10% (stable order)
//   lof               score = local outlier factor,       flag: > 1.5
//   stl               score = |resid| / (3 resid std),    flag: > 1
//   rating_curve      score = |log resid| / (3 fit std),  flag: > 1
//   rate_of_change    score = frac change / p99.5,        flag: > 1 (both pair ends)
//   persistence       score = low-variation run length,   flag: >= 6
//   qh_consistency    score = (0.2-corr)+divergence,      flag: > 0
//   seasonal_envelope score = band exceedance / width,    flag: > 0
//   mlp_head          score = probability,                flag: >= threshold
struct DetectionResult {
    std::string detector_id;
    std::vector<double> scores;
    std::vector<std::uint8_t> flags;
    std::vector<double> uncertainty;  // only populated by the MC-dropout head
    std::string note;                 // degenerate-input warnings
};

// All detectors take physical-unit discharge/stage series of equal length.

DetectionResult zscore_detect(const std::vector<double>& q, const std::vector<double>& h);

DetectionResult iqr_detect(const std::vector<double>& q, const std::vector<double>& h);

// Centered 7-day (+-84 h) rolling mean/std residual test, truncated windows
// at the edges.
DetectionResult moving_avg_detect(const std::vector<double>& q, const std::vector<double>& h);

struct IsolationForestConfig {
    int trees = 100;
    int subsample = 256;
    double contamination = 0.10;
};

// Standard isolation forest on per-window standardized (Q, H) pairs with the
// path-length score s(x) = 2^(-E[h(x)]/c(n)). Throws on windows with fewer
// than two points.
DetectionResult isolation_forest_detect(const std::vector<double>& q,
                                        const std::vector<double>& h, std::uint64_t seed,
                                        const IsolationForestConfig& config = {});

// Local outlier factor with k neighbours on standardized (Q, H); flags
// LOF > threshold. Throws when k >= point count.
DetectionResult lof_detect(const std::vector<double>& q, const std::vector<double>& h, int k = 20,
                           double threshold = 1.5);

// Seasonal-trend residual detector: trend via centered 169 h moving median,
// seasonal via periodic mean over a 168 h cycle, two passes.
DetectionResult stl_detect(const std::vector<double>& q, const std::vector<double>& h);

// Within-window log-linear power-law fit (H0 pinned just below min stage);
// flags 3-sigma log residuals.
DetectionResult rating_residual_detect(const std::vector<double>& q,
                                       const std::vector<double>& h);

DetectionResult rate_of_change_detect(const std::vector<double>& q,
                                      const std::vector<double>& h);

// Stuck-sensor runs: >= 6 consecutive hours with |dQ| < 0.001*max(|Q|,1) and
// |dH| < 0.001 ft.
DetectionResult persistence_detect(const std::vector<double>& q, const std::vector<double>& h);

// Rolling 24 h Pearson correlation of (Q, H) below 0.2, plus 6 h trend-sign
// divergence with both magnitudes above 1% of the window range.
DetectionResult qh_consistency_detect(const std::vector<double>& q,
                                      const std::vector<double>& h);

// Month-specific [p1, p99] envelope from training climatology (site-specific
// or global fallback bands carried by SiteStats).
DetectionResult seasonal_envelope_detect(const std::vector<double>& q,
                                         const std::vector<double>& h, HourStamp start_hour,
                                         const norm::SiteStats& stats);

// Reconstruction seam. The neural backbone is out of scope; anything
// honouring this contract can stand behind the detection head.
class Reconstructor {
  public:
    virtual ~Reconstructor() = default;
    // Fills q_hat/h_hat (same length as inputs). Must be deterministic.
    virtual void reconstruct(const std::vector<double>& q, const std::vector<double>& h,
                             std::vector<double>* q_hat, std::vector<double>* h_hat) const = 0;
    virtual std::string id() const = 0;
};

// Deterministic reference implementation: rating-predicted values blended
// 50/50 with a 25 h rolling median; falls back to the rolling median alone
// when the within-window rating fit is degenerate.
class ReferenceReconstructor final : public Reconstructor {
  public:
    void reconstruct(const std::vector<double>& q, const std::vector<double>& h,
                     std::vector<double>* q_hat, std::vector<double>* h_hat) const override;
    std::string id() const override { return "reference"; }
};

// 11-channel detection features (layout kFeatureLayoutVersion):
//   0 |Q - Qhat|            1 |H - Hhat|
//   2 forward dQ            3 forward dH
//   4 7 h rolling std Q     5 7 h rolling std H
//   6 7 h rolling std of Q residual
//   7 7 h rolling std of H residual
//   8 within-window rating log-residual
//   9 7 h rolling Pearson(Q, H)
//  10 signed residual product (residQ * residH)
// each robust-standardized by (x - median) / (1.4826 * MAD), MAD floored at
// 1e-6. Degenerate channels standardize to zero.
Eigen::MatrixXd extract_detection_features(const std::vector<double>& q,
                                           const std::vector<double>& h,
                                           const std::vector<double>& q_hat,
                                           const std::vector<double>& h_hat);

inline constexpr int kDetectionFeatureDim = 11;

// The 11 zero-shot baseline detector ids in reporting order.
const std::vector<std::string>& baseline_detector_ids();

// Runs one baseline by id (seasonal_envelope needs stats; isolation_forest
// needs the seed).
DetectionResult run_baseline(const std::string& id, const std::vector<double>& q,
                             const std::vector<double>& h, HourStamp start_hour,
                             const norm::SiteStats& stats, std::uint64_t seed);

}  // namespace detect
}  // namespace streamqc
