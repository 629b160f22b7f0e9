#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streamqc/normalize.hpp"
#include "streamqc/types.hpp"

namespace streamqc {
namespace inject {

// ---------------------------------------------------------------------------
// Training-time injector: 11 simplified patterns in normalized space with
// two-tier coverage control.
// ---------------------------------------------------------------------------

struct TrainInjectConfig {
    double light_prob = 0.60;
    double light_cov_lo = 0.05, light_cov_hi = 0.15;
    double moderate_cov_lo = 0.15, moderate_cov_hi = 0.30;
    double light_tol = 0.03;
    double moderate_tol = 0.05;
    double single_type_prob = 0.60;
    int min_segments = 2, max_segments = 4;
    double curriculum_early = 0.2;  // epochs 1..curriculum_ramp_epochs
    double curriculum_late = 0.4;
    int curriculum_ramp_epochs = 2;
    int max_attempts = 3;
};

enum class TrainAnomalyType : int {
    kSpike = 0,
    kDrift,
    kFlatline,
    kDropout,
    kSaturation,
    kClockShift,
    kQuantization,
    kUnitJump,
    kWarp,
    kSplice,
    kSubtleDrift,
};
inline constexpr int kNumTrainTypes = 11;
const char* train_type_name(TrainAnomalyType t);

// ---------------------------------------------------------------------------
// Test-time injector: 18 expert-taxonomy types in physical space, 3-4
// equation variants each. The full variant catalog (equations, parameter
// ranges, duration regimes) is documented in docs/injector_catalog.md and
// identified by kTestCatalogVersion; every drawn parameter is recorded.
// ---------------------------------------------------------------------------

enum class TestAnomalyType : int {
    kDropout = 0,
    kFlatline,
    kSpike,
    kBackwater,
    kIceBackwater,
    kDebrisEffect,
    kSedimentation,
    kDrift,
    kRatingDrift,
    kSensorFouling,
    kBiasStep,
    kTimeMisalignment,
    kQuantization,
    kSplice,
    kWarp,
    kNoiseBurst,
    kGateOperation,
    kUnitMismatch,
};
inline constexpr int kNumTestTypes = 18;
const char* test_type_name(TestAnomalyType t);
int test_type_variants(TestAnomalyType t);  // 3 or 4

// Duration regime of a type: micro 3-58 h, meso 7-192 h, macro 72-520 h.
enum class DurationRegime { kMicro, kMeso, kMacro };
DurationRegime test_type_regime(TestAnomalyType t);

struct TestInjectConfig {
    double single_type_prob = 0.30;  // single-type isolation windows
    double overlap_prob = 0.40;      // compound segments overlap probability
    int compound_min_types = 2, compound_max_types = 3;
};

enum class InjectionSpace { kNormalized, kPhysical };

struct SegmentRecord {
    int type = -1;  // TrainAnomalyType or TestAnomalyType id, per space
    int variant = 0;
    std::size_t start = 0;
    std::size_t length = 0;
    std::string params_json;  // parameters actually drawn
};

// Injected-anomaly provenance: the full recipe needed to replay one window's
// corruption from (window, seed).
struct CorruptionRecord {
    AnomalyMask mask;
    std::vector<SegmentRecord> segments;
    std::uint64_t seed = 0;
    double realized_coverage = 0.0;
    InjectionSpace space = InjectionSpace::kNormalized;
    bool clean = false;        // curriculum no-inject branch
    bool single_type = false;  // test injector: single-type isolation window
    std::string catalog_version;
};

inline constexpr const char* kTestCatalogVersion = "test-catalog-v1";

// 0.2 for epochs 1..ramp, 0.4 thereafter.
double curriculum_probability(int epoch, const TrainInjectConfig& config = {});

struct TrainInjectResult {
    Window window;
    CorruptionRecord record;
    std::vector<std::string> warnings;
};

// Corrupts the normalized dynamic channels with curriculum probability.
// Deterministic: identical (window, config, epoch, seed) give byte-identical
// output. The mask flags exactly the changed values, except for the
// resampling types (flatline, clock shift, warp, splice) where it covers the
// whole affected segment.
TrainInjectResult inject_training(const Window& window, const TrainInjectConfig& config,
                                  int epoch, std::uint64_t seed);

struct TestInjectResult {
    Window window;
    CorruptionRecord record;
    std::vector<double> physical_q, physical_h;              // corrupted, pre-renormalize
    std::vector<double> clean_physical_q, clean_physical_h;  // denormalized originals
    bool aborted = false;
    std::string abort_reason;
};

// Three-step physical-space injection: denormalize Q/H, apply one type (or a
// compound draw) with a uniformly chosen equation variant, renormalize with
// clipping. Aborts (reported, window untouched) if denormalization overflows.
TestInjectResult inject_test(const Window& window, const norm::SiteStats& stats,
                             const TestInjectConfig& config, const norm::NormConfig& norm_config,
                             std::uint64_t seed);

// JSON-lines serialization keyed by (site, window start).
std::string record_to_json_line(const CorruptionRecord& record, const std::string& site_id,
                                HourStamp start_hour);
CorruptionRecord record_from_json_line(const std::string& line, std::string* site_id,
                                       HourStamp* start_hour);

}  // namespace inject
}  // namespace streamqc
