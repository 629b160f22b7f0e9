#include "streamqc/windowing.hpp"

#include <stdexcept>
#include <string>

namespace streamqc {

HourlyChannel aggregate_to_hourly(const std::vector<InstantReading>& readings) {
    HourlyChannel out;
    if (readings.empty()) return out;

    for (std::size_t i = 1; i < readings.size(); ++i) {
        if (readings[i].second < readings[i - 1].second) {
            throw std::invalid_argument("aggregate_to_hourly: unsorted input at index " +
                                        std::to_string(i));
        }
    }

    auto hour_of = [](std::int64_t sec) {
        // floor division for pre-epoch timestamps
        return static_cast<HourStamp>(sec >= 0 ? sec / 3600 : (sec - 3599) / 3600);
    };

    const HourStamp first = hour_of(readings.front().second);
    const HourStamp last = hour_of(readings.back().second);
    out.start_hour = first;
    out.values.assign(static_cast<std::size_t>(last - first + 1), kMissing);

    std::size_t i = 0;
    while (i < readings.size()) {
        const HourStamp h = hour_of(readings[i].second);
        double sum = 0.0;
        std::size_t count = 0;
        while (i < readings.size() && hour_of(readings[i].second) == h) {
            sum += readings[i].value;
            ++count;
            ++i;
        }
        out.values[static_cast<std::size_t>(h - first)] = sum / static_cast<double>(count);
    }
    return out;
}

std::vector<RawWindow> segment_windows(const HourlySeries& series, int stride_hours) {
    if (stride_hours <= 0) {
        throw std::invalid_argument("segment_windows: stride must be positive");
    }
    std::vector<RawWindow> out;
    const std::size_t n = series.size();
    if (n < static_cast<std::size_t>(kWindowLength)) return out;

    // Prefix counts of excluded timesteps make the overlap test O(1).
    std::vector<std::uint32_t> excl_prefix(n + 1, 0);
    for (std::size_t t = 0; t < n; ++t) {
        const bool excluded =
            t < series.flags.size() && (series.flags[t] & kFlagExcluded) != 0;
        excl_prefix[t + 1] = excl_prefix[t] + (excluded ? 1u : 0u);
    }

    for (std::size_t off = 0; off + kWindowLength <= n;
         off += static_cast<std::size_t>(stride_hours)) {
        if (excl_prefix[off + kWindowLength] - excl_prefix[off] > 0) continue;
        RawWindow w;
        w.site_id = series.site_id;
        w.start_hour = series.start_hour + static_cast<HourStamp>(off);
        w.offset = off;
        w.q.assign(series.discharge.begin() + static_cast<std::ptrdiff_t>(off),
                   series.discharge.begin() + static_cast<std::ptrdiff_t>(off + kWindowLength));
        w.h.assign(series.stage.begin() + static_cast<std::ptrdiff_t>(off),
                   series.stage.begin() + static_cast<std::ptrdiff_t>(off + kWindowLength));
        w.valid.resize(kWindowLength);
        for (int t = 0; t < kWindowLength; ++t) {
            w.valid[t] = !is_missing(w.q[t]) && !is_missing(w.h[t]);
        }
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace streamqc
