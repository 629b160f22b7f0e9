#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "streamqc/types.hpp"

namespace streamqc {

// An instantaneous (sub-hourly) reading: seconds since epoch + value.
struct InstantReading {
    std::int64_t second;
    double value;
};

struct HourlyChannel {
    HourStamp start_hour = 0;
    std::vector<double> values;  // NaN where an hour had no readings
};

// Arithmetic mean of all readings falling in [h, h+1) per hour; hours with
// zero readings become missing. Input must be sorted ascending by timestamp
// (throws std::invalid_argument naming the first offending index otherwise).
HourlyChannel aggregate_to_hourly(const std::vector<InstantReading>& readings);

// Slices a series into 576-hour windows at offsets 0, stride, 2*stride, ...
// Any candidate window overlapping an `excluded` timestep is dropped. A
// series shorter than one window yields an empty list. stride must be > 0.
std::vector<RawWindow> segment_windows(const HourlySeries& series, int stride_hours);

}  // namespace streamqc
