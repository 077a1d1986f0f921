#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace pcamm {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

using Point2d = Point2<double>;

inline constexpr double kEarthRadius = 6371000.0;
inline constexpr double kPi = 3.14159265358979323846;

template <typename Scalar>
constexpr Scalar deg2rad(Scalar deg) {
  return deg * Scalar(kPi) / Scalar(180);
}

template <typename Scalar>
constexpr Scalar rad2deg(Scalar rad) {
  return rad * Scalar(180) / Scalar(kPi);
}

/// Local equirectangular frame anchored at a geographic origin.
/// x grows east, y grows north, both in meters.
struct GeoOrigin {
  double lon = 0.0;
  double lat = 0.0;
};

inline Point2d project_to_plane(double lon, double lat, const GeoOrigin& origin) {
  const double scale_x = kEarthRadius * std::cos(deg2rad(origin.lat));
  return {scale_x * deg2rad(lon - origin.lon), kEarthRadius * deg2rad(lat - origin.lat)};
}

/// Inverse of project_to_plane; returns (lon, lat).
inline Point2d unproject_from_plane(const Point2d& p, const GeoOrigin& origin) {
  const double scale_x = kEarthRadius * std::cos(deg2rad(origin.lat));
  return {origin.lon + rad2deg(p.x() / scale_x), origin.lat + rad2deg(p.y() / kEarthRadius)};
}

/// Normalizes an angle in degrees to [0, 360).
template <typename Scalar>
Scalar normalize_degrees(Scalar deg) {
  Scalar r = std::fmod(deg, Scalar(360));
  if (r < Scalar(0)) r += Scalar(360);
  if (r >= Scalar(360)) r -= Scalar(360);
  return r;
}

/// Smallest absolute difference between two directions, in [0, 180].
template <typename Scalar>
Scalar bearing_inclination(Scalar a, Scalar b) {
  const Scalar d = normalize_degrees(a - b);
  return d > Scalar(180) ? Scalar(360) - d : d;
}

/// Direction of the vector from -> to, degrees counter-clockwise from east in [0, 360).
template <typename Scalar>
Scalar direction_degrees(const Point2<Scalar>& from, const Point2<Scalar>& to) {
  const Point2<Scalar> d = to - from;
  return normalize_degrees(rad2deg(std::atan2(d.y(), d.x())));
}

template <typename Scalar>
struct SegmentProjection {
  Point2<Scalar> point;
  Scalar fraction;  // in [0, 1] along the segment
  Scalar distance;  // perpendicular (clamped) distance
};

/// Nearest point of the closed segment [a, b] to p.
template <typename Scalar>
SegmentProjection<Scalar> project_point_to_segment(const Point2<Scalar>& p, const Point2<Scalar>& a,
                                                   const Point2<Scalar>& b) {
  const Point2<Scalar> ab = b - a;
  const Scalar len2 = ab.squaredNorm();
  Scalar t = Scalar(0);
  if (len2 > Scalar(0)) t = std::clamp((p - a).dot(ab) / len2, Scalar(0), Scalar(1));
  const Point2<Scalar> q = a + t * ab;
  return {q, t, (p - q).norm()};
}

/// Distance from p to the closed segment [a, b].
template <typename Scalar>
Scalar point_segment_distance(const Point2<Scalar>& p, const Point2<Scalar>& a, const Point2<Scalar>& b) {
  return project_point_to_segment(p, a, b).distance;
}

}  // namespace pcamm
