#include "streamqc/time.hpp"

#include <cstdio>
#include <stdexcept>

namespace streamqc {

std::int64_t days_from_civil(int y, int m, int d) {
    // Howard Hinnant's civil-days algorithm.
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

namespace {

bool parse_fixed_digits(const std::string& s, size_t pos, int count, int* out) {
    int v = 0;
    for (int i = 0; i < count; ++i) {
        if (pos + i >= s.size() || s[pos + i] < '0' || s[pos + i] > '9') return false;
        v = v * 10 + (s[pos + i] - '0');
    }
    *out = v;
    return true;
}

}  // namespace

std::int64_t parse_iso8601_utc_seconds(const std::string& text) {
    int y, mo, d, h, mi, se = 0;
    const bool long_form = text.size() == 20;   // YYYY-MM-DDTHH:MM:SSZ
    const bool short_form = text.size() == 17;  // YYYY-MM-DDTHH:MMZ
    bool ok = (long_form || short_form) &&
              parse_fixed_digits(text, 0, 4, &y) && text[4] == '-' &&
              parse_fixed_digits(text, 5, 2, &mo) && text[7] == '-' &&
              parse_fixed_digits(text, 8, 2, &d) && text[10] == 'T' &&
              parse_fixed_digits(text, 11, 2, &h) && text[13] == ':' &&
              parse_fixed_digits(text, 14, 2, &mi);
    if (ok && long_form) {
        ok = text[16] == ':' && parse_fixed_digits(text, 17, 2, &se) && text[19] == 'Z';
    } else if (ok) {
        ok = text[16] == 'Z';
    }
    if (!ok || mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60) {
        throw std::invalid_argument("malformed UTC timestamp: '" + text + "'");
    }
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
}

HourStamp parse_iso8601_utc_hour(const std::string& text) {
    const std::int64_t sec = parse_iso8601_utc_seconds(text);
    if (sec % 3600 != 0) {
        throw std::invalid_argument("timestamp not hour-aligned: '" + text + "'");
    }
    return sec / 3600;
}

std::string format_iso8601_utc_hour(HourStamp hour) {
    std::int64_t days = hour / 24;
    int h = static_cast<int>(hour % 24);
    if (h < 0) {
        h += 24;
        days -= 1;
    }
    const CivilDate cd = civil_from_days(days);
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00:00Z", cd.year, cd.month, cd.day, h);
    return std::string(buf);
}

int month_of_hour(HourStamp hour) {
    std::int64_t days = hour / 24;
    if (hour % 24 < 0) days -= 1;
    return civil_from_days(days).month;
}

}  // namespace streamqc
