#include "sunvo/solar_ephemeris.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sunvo/errors.hpp"

namespace sunvo {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

// Earliest and latest years the low-precision series is trusted for.
constexpr int kMinYear = 1950;
constexpr int kMaxYear = 2100;

double wrap_deg_360(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  return w;
}

bool is_leap_year(int year) {
  return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_month(int year, int month) {
  static const int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2 && is_leap_year(year)) return 29;
  return kDays[month - 1];
}

void validate_civil(const UtcTime& t) {
  if (t.month < 1 || t.month > 12 || t.day < 1 ||
      t.day > days_in_month(t.year, t.month) || t.hour < 0 || t.hour > 23 ||
      t.minute < 0 || t.minute > 59 || t.second < 0.0 || t.second >= 61.0) {
    throw ConfigInvalid("invalid calendar time " + t.to_iso_string());
  }
}

// Julian date of the Gregorian calendar day at 00:00 UTC.
double julian_date_midnight(int year, int month, int day) {
  int y = year;
  int m = month;
  if (m <= 2) {
    y -= 1;
    m += 12;
  }
  const int a = y / 100;
  const int b = 2 - a + a / 4;
  return std::floor(365.25 * (y + 4716)) + std::floor(30.6001 * (m + 1)) +
         day + b - 1524.5;
}

// Inverse of julian_date_midnight for a half-integer Julian date.
void civil_from_jd_midnight(double jd_midnight, int* year, int* month,
                            int* day) {
  const double z = std::floor(jd_midnight + 0.5);
  const double alpha = std::floor((z - 1867216.25) / 36524.25);
  const double a = z + 1 + alpha - std::floor(alpha / 4.0);
  const double b = a + 1524;
  const double c = std::floor((b - 122.1) / 365.25);
  const double d = std::floor(365.25 * c);
  const double e = std::floor((b - d) / 30.6001);
  *day = static_cast<int>(b - d - std::floor(30.6001 * e));
  *month = static_cast<int>(e < 14 ? e - 1 : e - 13);
  *year = static_cast<int>(*month > 2 ? c - 4716 : c - 4715);
}

}  // namespace

double UtcTime::julian_date() const {
  const double day_fraction = (hour + minute / 60.0 + second / 3600.0) / 24.0;
  return julian_date_midnight(year, month, day) + day_fraction;
}

UtcTime UtcTime::plus_seconds(double seconds) const {
  double sod = hour * 3600.0 + minute * 60.0 + second + seconds;
  double day_shift = std::floor(sod / 86400.0);
  sod -= day_shift * 86400.0;
  if (sod >= 86400.0) {  // guard against floor rounding at the boundary
    sod -= 86400.0;
    day_shift += 1.0;
  }
  UtcTime out;
  civil_from_jd_midnight(julian_date_midnight(year, month, day) + day_shift,
                         &out.year, &out.month, &out.day);
  out.hour = static_cast<int>(sod / 3600.0);
  sod -= out.hour * 3600.0;
  out.minute = static_cast<int>(sod / 60.0);
  out.second = sod - out.minute * 60.0;
  if (out.second < 0.0) out.second = 0.0;
  return out;
}

UtcTime UtcTime::parse(const std::string& iso) {
  UtcTime t;
  int consumed = 0;
  const int fields =
      std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d:%lf%n", &t.year, &t.month,
                  &t.day, &t.hour, &t.minute, &t.second, &consumed);
  if (fields != 6) {
    throw ConfigInvalid("cannot parse timestamp '" + iso + "'");
  }
  const std::string rest = iso.substr(consumed);
  if (!rest.empty() && rest != "Z") {
    throw ConfigInvalid("trailing characters in timestamp '" + iso + "'");
  }
  validate_civil(t);
  return t;
}

std::string UtcTime::to_iso_string() const {
  // Milliseconds are enough for frame timestamps; carry rounded-up seconds.
  int h = hour;
  int mi = minute;
  double sec = std::round(second * 1000.0) / 1000.0;
  int d = day;
  int mo = month;
  int y = year;
  if (sec >= 60.0) {
    sec -= 60.0;
    if (++mi >= 60) {
      mi = 0;
      if (++h >= 24) {
        h = 0;
        civil_from_jd_midnight(julian_date_midnight(y, mo, d) + 1.0, &y, &mo,
                               &d);
      }
    }
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%06.3fZ", y, mo, d,
                h, mi, sec);
  return std::string(buf);
}

SunDirection sun_direction_enu(const GeodeticAnchor& anchor) {
  if (!(std::abs(anchor.latitude_deg) <= 90.0) ||
      !(std::abs(anchor.longitude_deg) <= 180.0)) {
    throw ConfigInvalid("latitude/longitude out of range");
  }
  validate_civil(anchor.timestamp);
  if (anchor.timestamp.year < kMinYear || anchor.timestamp.year > kMaxYear) {
    throw TimestampOutOfRange("ephemeris supports years 1950 through 2100, got " +
                              std::to_string(anchor.timestamp.year));
  }

  // Days from J2000.0; the series below takes UT directly.
  const double n = anchor.timestamp.julian_date() - 2451545.0;

  // Mean longitude and mean anomaly of the sun, degrees.
  const double mean_lon = wrap_deg_360(280.460 + 0.9856474 * n);
  const double g = wrap_deg_360(357.528 + 0.9856003 * n) * kDegToRad;

  // Ecliptic longitude with the two largest equation-of-center terms.
  const double lambda =
      (mean_lon + 1.915 * std::sin(g) + 0.020 * std::sin(2.0 * g)) * kDegToRad;
  const double eps = (23.439 - 4.0e-7 * n) * kDegToRad;

  const double ra = std::atan2(std::cos(eps) * std::sin(lambda), std::cos(lambda));
  const double dec = std::asin(std::sin(eps) * std::sin(lambda));

  // Greenwich mean sidereal time, degrees, then the local hour angle.
  const double gmst = wrap_deg_360(280.46061837 + 360.98564736629 * n);
  const double hour_angle =
      gmst * kDegToRad + anchor.longitude_deg * kDegToRad - ra;

  const double phi = anchor.latitude_deg * kDegToRad;
  const double sin_phi = std::sin(phi);
  const double cos_phi = std::cos(phi);
  const double sin_dec = std::sin(dec);
  const double cos_dec = std::cos(dec);
  const double sin_h = std::sin(hour_angle);
  const double cos_h = std::cos(hour_angle);

  SunDirection enu;
  enu.x() = -cos_dec * sin_h;
  enu.y() = cos_phi * sin_dec - sin_phi * cos_dec * cos_h;
  enu.z() = sin_phi * sin_dec + cos_phi * cos_dec * cos_h;
  return enu;
}

AzimuthZenith vec_to_azzen(const SunDirection& s) {
  AzimuthZenith a;
  a.zenith = std::acos(std::clamp(-s.y(), -1.0, 1.0));
  if (s.x() == 0.0 && s.z() == 0.0) {
    a.azimuth = 0.0;
  } else {
    a.azimuth = std::atan2(s.x(), s.z());
  }
  return a;
}

SunDirection azzen_to_vec(const AzimuthZenith& a) {
  const double st = std::sin(a.zenith);
  return SunDirection(st * std::sin(a.azimuth), -std::cos(a.zenith),
                      st * std::cos(a.azimuth));
}

SunDirection expected_sun_in_camera(const Pose& T_k0, const SunDirection& s_0) {
  return T_k0.rotation() * s_0;
}

double wrap_angle(double rad) {
  double w = std::fmod(rad + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

AzimuthZenith enu_to_azzen(const SunDirection& enu) {
  AzimuthZenith a;
  a.zenith = std::acos(std::clamp(enu.z(), -1.0, 1.0));
  if (enu.x() == 0.0 && enu.y() == 0.0) {
    a.azimuth = 0.0;
  } else {
    a.azimuth = std::atan2(enu.x(), enu.y());
  }
  return a;
}

}  // namespace sunvo
