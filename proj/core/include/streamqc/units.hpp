#pragma once

#include <cmath>
#include <stdexcept>

namespace streamqc {

// Exact conversion constants used throughout; paired SI archives are
// converted at ingestion with these and nothing else.
inline constexpr double kMetersToFeet = 3.28084;
inline constexpr double kCmsToCfs = 35.3147;  // m^3/s -> ft^3/s

enum class UnitConversion { kStageMetersToFeet, kDischargeCmsToCfs };

inline double convert_units(double value, UnitConversion kind) {
    if (!std::isfinite(value)) {
        throw std::invalid_argument("convert_units: non-finite input");
    }
    switch (kind) {
        case UnitConversion::kStageMetersToFeet:
            return value * kMetersToFeet;
        case UnitConversion::kDischargeCmsToCfs:
            return value * kCmsToCfs;
    }
    throw std::invalid_argument("convert_units: unknown conversion");
}

}  // namespace streamqc
