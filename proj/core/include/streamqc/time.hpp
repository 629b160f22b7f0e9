#pragma once

#include <cstdint>
#include <string>

namespace streamqc {

// All timestamps are UTC. Hourly data is addressed by HourStamp, the number
// of whole hours since the Unix epoch; sub-hourly readings use seconds.
using HourStamp = std::int64_t;

struct CivilDate {
    int year;
    int month;  // 1..12
    int day;    // 1..31
};

// Days-from-civil / civil-from-days (proleptic Gregorian, no leap seconds).
std::int64_t days_from_civil(int year, int month, int day);
CivilDate civil_from_days(std::int64_t days);

// Parses "YYYY-MM-DDTHH:MM:SSZ" (seconds optional: "YYYY-MM-DDTHH:MMZ").
// Throws std::invalid_argument on malformed input or missing trailing Z.
std::int64_t parse_iso8601_utc_seconds(const std::string& text);

// Same, but requires the timestamp to be aligned to a whole hour.
HourStamp parse_iso8601_utc_hour(const std::string& text);

// Renders an hour stamp as "YYYY-MM-DDTHH:00:00Z".
std::string format_iso8601_utc_hour(HourStamp hour);

// Calendar month (1..12) of an hour stamp.
int month_of_hour(HourStamp hour);

}  // namespace streamqc
