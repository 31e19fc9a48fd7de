#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "citypano/error.hpp"
#include "citypano/geo/geodetic.hpp"

namespace citypano {

/// UTC instant with second resolution (fractional seconds kept).
struct UtcTime {
    int year = 2000, month = 1, day = 1, hour = 0, minute = 0;
    double second = 0.0;

    bool operator==(const UtcTime&) const = default;
};

/// Accepts "YYYY-MM-DDTHH:MM[:SS[.fff]]" followed by "Z", "+hh:mm" or
/// "-hh:mm" (no suffix means UTC). A space may replace the "T".
inline UtcTime parse_iso8601(const std::string& text) {
    int y, mo, d, h, mi;
    char sep;
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed) != 6 ||
        (sep != 'T' && sep != ' ')) {
        throw Error(ErrorCode::InvalidArgument, "bad ISO-8601 timestamp '" + text + "'");
    }
    double s = 0.0;
    std::string rest = text.substr(static_cast<std::size_t>(consumed));
    if (!rest.empty() && rest[0] == ':') {
        int n = 0;
        if (std::sscanf(rest.c_str(), ":%lf%n", &s, &n) != 1) {
            throw Error(ErrorCode::InvalidArgument, "bad seconds in '" + text + "'");
        }
        rest = rest.substr(static_cast<std::size_t>(n));
    }
    int offset_min = 0;
    if (rest == "Z" || rest == "z" || rest.empty()) {
    } else if ((rest[0] == '+' || rest[0] == '-') && rest.size() == 6 && rest[3] == ':') {
        const int oh = std::stoi(rest.substr(1, 2));
        const int om = std::stoi(rest.substr(4, 2));
        offset_min = (rest[0] == '+' ? 1 : -1) * (oh * 60 + om);
    } else {
        throw Error(ErrorCode::InvalidArgument, "bad timezone suffix in '" + text + "'");
    }
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0.0 || s >= 61.0) {
        throw Error(ErrorCode::InvalidArgument, "out-of-range field in '" + text + "'");
    }
    // Normalize to UTC through minutes since the epoch.
    const auto t = sys_days{ymd} + hours{h} + minutes{mi} - minutes{offset_min};
    const auto day_start = floor<days>(t);
    const year_month_day u{day_start};
    const auto hm = t - day_start;
    UtcTime out;
    out.year = static_cast<int>(u.year());
    out.month = static_cast<int>(static_cast<unsigned>(u.month()));
    out.day = static_cast<int>(static_cast<unsigned>(u.day()));
    out.hour = static_cast<int>(duration_cast<hours>(hm).count());
    out.minute = static_cast<int>(duration_cast<minutes>(hm).count() % 60);
    out.second = s;
    return out;
}

inline std::string format_iso8601(const UtcTime& t) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", t.year, t.month, t.day, t.hour, t.minute,
                  static_cast<int>(t.second));
    return buf;
}

struct SunState {
    Vec3 direction;          // unit, scene toward sun (ENU)
    double azimuth_deg = 0;  // clockwise from north
    double elevation_deg = 0;
    bool below_horizon = false;
};

/// Sun at a given azimuth (clockwise from north) and elevation, as an ENU
/// direction. Used for the manual light override.
inline SunState sun_from_angles(double azimuth_deg, double elevation_deg) {
    const double az = azimuth_deg * kDegToRad;
    const double el = elevation_deg * kDegToRad;
    SunState s;
    s.azimuth_deg = azimuth_deg;
    s.elevation_deg = elevation_deg;
    s.direction = {std::sin(az) * std::cos(el), std::cos(az) * std::cos(el), std::sin(el)};
    s.below_horizon = elevation_deg < 0.0;
    return s;
}

/// NOAA low-accuracy solar position (fractional-year series for the
/// equation of time and declination, then hour angle). Geometric elevation,
/// no refraction. The result is flagged, not thrown, when below the horizon.
inline SunState sun_direction(const UtcTime& t, const GeodeticPoint& location) {
    using namespace std::chrono;
    const year_month_day ymd{year{t.year}, month{static_cast<unsigned>(t.month)}, day{static_cast<unsigned>(t.day)}};
    if (!ymd.ok()) throw Error(ErrorCode::InvalidArgument, "invalid date");
    const int doy = static_cast<int>((sys_days{ymd} - sys_days{year{t.year} / January / 1}).count()) + 1;
    const double days_in_year = year{t.year}.is_leap() ? 366.0 : 365.0;
    const double hour = t.hour + t.minute / 60.0 + t.second / 3600.0;
    const double g = 2.0 * M_PI / days_in_year * (doy - 1 + (hour - 12.0) / 24.0);

    const double eqtime = 229.18 * (0.000075 + 0.001868 * std::cos(g) - 0.032077 * std::sin(g) -
                                    0.014615 * std::cos(2 * g) - 0.040849 * std::sin(2 * g));
    const double decl = 0.006918 - 0.399912 * std::cos(g) + 0.070257 * std::sin(g) - 0.006758 * std::cos(2 * g) +
                        0.000907 * std::sin(2 * g) - 0.002697 * std::cos(3 * g) + 0.00148 * std::sin(3 * g);

    const double time_offset = eqtime + 4.0 * location.longitude_deg; // minutes, UTC
    const double tst = hour * 60.0 + time_offset;
    const double ha = (tst / 4.0 - 180.0) * kDegToRad;
    const double lat = location.latitude_deg * kDegToRad;

    const double cos_zen = std::clamp(std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(ha),
                                      -1.0, 1.0);
    const double elevation = M_PI / 2.0 - std::acos(cos_zen);
    const double azimuth = std::atan2(-std::sin(ha) * std::cos(decl),
                                      std::sin(decl) * std::cos(lat) - std::cos(decl) * std::sin(lat) * std::cos(ha));
    double az_deg = azimuth * kRadToDeg;
    if (az_deg < 0.0) az_deg += 360.0;
    return sun_from_angles(az_deg, elevation * kRadToDeg);
}

inline SunState sun_direction(const std::string& iso, const GeodeticPoint& location) {
    return sun_direction(parse_iso8601(iso), location);
}

} // namespace citypano
