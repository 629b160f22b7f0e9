#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "streamqc/time.hpp"

namespace streamqc {

// Window geometry is fixed for the whole pipeline: 576 hourly steps (24 days)
// and 12 feature channels.
inline constexpr int kWindowLength = 576;
inline constexpr int kNumChannels = 12;

// Fixed channel layout of a feature window.
enum Channel : int {
    kChanLatitude = 0,
    kChanLongitude = 1,
    kChanDrainageArea = 2,
    kChanElevation = 3,
    kChanDischarge = 4,   // three-tier normalized Q
    kChanStage = 5,       // three-tier normalized H
    kChanScaleQ = 6,      // sigma_lnQ broadcast
    kChanScaleH = 7,      // sigma_lnH broadcast
    kChanRankArea = 8,
    kChanRankElev = 9,
    kChanSeasonalQ = 10,  // monthly anomaly of Q, clipped
    kChanSeasonalH = 11,  // monthly anomaly of H, clipped
};

// Missing readings are NaN. Discharge 0.0 is a real observation (ephemeral
// streams) and must never be used as a missing marker.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// Per-timestep QC flags (bitmask).
enum QcFlag : std::uint8_t {
    kFlagNone = 0,
    kFlagOutlier = 1u << 0,
    kFlagImplausible = 1u << 1,
    kFlagFillLinear = 1u << 2,
    kFlagFillRecession = 1u << 3,
    kFlagExcluded = 1u << 4,
};

enum class Partition { kTrain, kValidation, kTest, kExternal };

std::string partition_name(Partition p);
Partition partition_from_name(const std::string& name);  // throws on unknown

struct SiteMeta {
    std::string site_id;
    double latitude = 0.0;       // degrees, [-90, 90]
    double longitude = 0.0;      // degrees, [-180, 180]
    double drainage_area = 0.0;  // km^2, > 0
    double elevation = 0.0;      // meters above datum
    Partition partition = Partition::kTrain;
};

// Aligned hourly record for one site. Timestamps are implicit:
// start_hour + k for element k. discharge/stage always have equal length.
struct HourlySeries {
    std::string site_id;
    HourStamp start_hour = 0;
    std::vector<double> discharge;  // ft^3/s, NaN = missing
    std::vector<double> stage;      // ft, NaN = missing
    std::vector<std::uint8_t> flags;

    std::size_t size() const { return discharge.size(); }
    HourStamp hour_at(std::size_t k) const { return start_hour + static_cast<HourStamp>(k); }
};

// A raw 576-hour slice of one series, before feature building.
struct RawWindow {
    std::string site_id;
    HourStamp start_hour = 0;
    std::size_t offset = 0;  // index into the source series
    std::vector<double> q;   // physical ft^3/s
    std::vector<double> h;   // physical ft
    std::vector<std::uint8_t> valid;
};

// Feature window: kWindowLength x kNumChannels, row-major by timestep.
struct Window {
    std::string site_id;
    HourStamp start_hour = 0;
    std::vector<double> chan;                // size kWindowLength * kNumChannels
    std::vector<std::uint8_t> observation_mask;  // per-timestep validity

    double& at(int t, int c) { return chan[static_cast<std::size_t>(t) * kNumChannels + c]; }
    double at(int t, int c) const { return chan[static_cast<std::size_t>(t) * kNumChannels + c]; }
};

// Ground-truth anomaly labels for one window. type_labels[t] is a valid type
// id only where flags[t] is set (-1 elsewhere).
struct AnomalyMask {
    std::vector<std::uint8_t> flags;
    std::vector<std::int16_t> type_labels;

    AnomalyMask() = default;
    explicit AnomalyMask(std::size_t n) : flags(n, 0), type_labels(n, -1) {}

    double coverage() const {
        if (flags.empty()) return 0.0;
        std::size_t on = 0;
        for (const auto f : flags) on += f != 0;
        return static_cast<double>(on) / static_cast<double>(flags.size());
    }
};

}  // namespace streamqc
