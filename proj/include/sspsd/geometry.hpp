#pragma once

#include <algorithm>
#include <cmath>

namespace sspsd {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Canonical angle in [0, 360).
inline double canonical_deg(double deg) {
    double a = std::fmod(deg, 360.0);
    if (a < 0.0) a += 360.0;
    if (a >= 360.0) a = 0.0;  // fmod can return 360.0 - eps rounding up
    return a;
}

/// Circular distance between two angles in degrees, result in [0, 180].
inline double angle_diff_deg(double a, double b) {
    double d = std::fabs(canonical_deg(a) - canonical_deg(b));
    return std::min(d, 360.0 - d);
}

/// Distance between two directions treated as axes (sign-insensitive), in [0, 90].
inline double axial_diff_deg(double a, double b) {
    return std::min(angle_diff_deg(a, b), angle_diff_deg(a, b + 180.0));
}

inline double dist2(double x1, double y1, double x2, double y2) {
    const double dx = x2 - x1, dy = y2 - y1;
    return dx * dx + dy * dy;
}

inline double dist(double x1, double y1, double x2, double y2) {
    return std::sqrt(dist2(x1, y1, x2, y2));
}

/// Distance from point p to segment [a, b] (projection clamped to the segment).
inline double point_segment_distance(double px, double py, double ax, double ay,
                                     double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    if (len2 <= 0.0) return dist(px, py, ax, ay);
    double t = ((px - ax) * vx + (py - ay) * vy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return dist(px, py, ax + t * vx, ay + t * vy);
}

}  // namespace sspsd
