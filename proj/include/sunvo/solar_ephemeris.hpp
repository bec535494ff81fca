#ifndef SUNVO_SOLAR_EPHEMERIS_HPP
#define SUNVO_SOLAR_EPHEMERIS_HPP

#include <string>

#include "sunvo/se3.hpp"

namespace sunvo {

/// UTC civil time with fractional seconds.
struct UtcTime {
  int year = 2000;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  double second = 0.0;

  /// Julian date of this instant.
  double julian_date() const;

  /// This instant shifted by a number of seconds.
  UtcTime plus_seconds(double seconds) const;

  /// Parses "YYYY-MM-DDTHH:MM:SS[.fff][Z]". Throws ConfigInvalid on bad input.
  static UtcTime parse(const std::string& iso);

  std::string to_iso_string() const;
};

/// Observer location and epoch for the ephemeris query.
struct GeodeticAnchor {
  double latitude_deg = 0.0;   // +N
  double longitude_deg = 0.0;  // +E
  UtcTime timestamp;
};

/// Zenith-azimuth parameterization of a unit direction. For camera-frame
/// vectors this follows theta = acos(-s_y), phi = atan2(s_x, s_z); zenith is
/// measured from "up" in that convention and azimuth lies in (-pi, pi].
struct AzimuthZenith {
  double zenith = 0.0;   // rad, [0, pi]
  double azimuth = 0.0;  // rad, (-pi, pi]
};

/// Unit 3-vector toward the sun. Frame is contextual: either the ENU world
/// frame (x East, y North, z Up) or a camera frame (x right, y down,
/// z forward).
using SunDirection = Vec3;

/// Unit ENU vector from the observer toward the sun, from a low-precision
/// analytic solar series (Julian date -> ecliptic longitude -> declination /
/// hour angle -> topocentric direction). Accurate to well under 0.2 degrees
/// over 1990-2030. Throws TimestampOutOfRange outside years 1950-2100 and
/// ConfigInvalid for a bad latitude/longitude.
SunDirection sun_direction_enu(const GeodeticAnchor& anchor);

/// Camera-frame direction to zenith-azimuth angles:
/// theta = acos(-s_y), phi = atan2(s_x, s_z). atan2(0, 0) is taken as 0.
AzimuthZenith vec_to_azzen(const SunDirection& s);

/// Inverse of vec_to_azzen.
SunDirection azzen_to_vec(const AzimuthZenith& a);

/// Expected sun direction in camera frame k: the rotational part of T_k0
/// applied to the world-frame direction (directions ignore translation).
SunDirection expected_sun_in_camera(const Pose& T_k0, const SunDirection& s_0);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double rad);

/// ENU azimuth (clockwise from north, rad) and zenith (from up, rad) of a
/// world-frame ENU direction.
AzimuthZenith enu_to_azzen(const SunDirection& enu);

}  // namespace sunvo

#endif  // SUNVO_SOLAR_EPHEMERIS_HPP
