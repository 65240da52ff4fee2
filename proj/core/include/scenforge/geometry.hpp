#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace scenforge::geom {

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

/// Normalize an angle to (-pi, pi].
double normalize_angle(double a);

/// Normalize an angle difference in degrees to (-180, 180].
double normalize_deg(double a);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double norm_sq() const { return x * x + y * y; }
  Vec2 normalized() const;
  /// 90-degree counterclockwise rotation (the "left" normal).
  Vec2 perp() const { return {-y, x}; }
  Vec2 rotated(double angle) const;
};

struct Pose {
  Vec2 pos;
  double heading = 0.0;  // radians, CCW from +x
};

/// Axis-oriented rectangle given by center pose and full extents.
struct Obb {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;  // along heading
  double width = 0.0;   // across heading

  std::array<Vec2, 4> corners() const;
};

/// Separating-axis overlap test for two oriented boxes.
bool obb_overlap(const Obb& a, const Obb& b);

/// Surface-to-surface distance between two oriented boxes; 0 when they touch
/// or overlap.
double obb_distance(const Obb& a, const Obb& b);

double segment_distance(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2);
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);

/// Piecewise-linear curve with cached cumulative arc length. Projection
/// returns a signed lateral offset, positive to the LEFT of the travel
/// direction.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> pts);

  bool empty() const { return pts_.size() < 2; }
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }
  const std::vector<Vec2>& points() const { return pts_; }

  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  /// C0-continuous heading: vertex headings (averaged segment directions)
  /// interpolated linearly along arc length. Use for tracking; heading_at
  /// stays piecewise constant.
  double heading_smooth_at(double s) const;
  Pose pose_at(double s) const;

  struct Projection {
    double s = 0.0;        // arc-length of the closest point
    double lateral = 0.0;  // signed offset, left positive
    double dist = 0.0;     // unsigned distance
  };
  Projection project(const Vec2& p) const;

  /// Projection restricted to arc lengths [s_lo, s_hi]. Self-intersecting
  /// paths (U-turn loops) need this to keep tracking monotone.
  Projection project_near(const Vec2& p, double s_lo, double s_hi) const;

  /// Parallel curve at signed lateral offset d (left positive). Joints use
  /// averaged segment normals with miter clamping.
  Polyline offset(double d) const;

  Polyline reversed() const;

  /// Total absolute heading change along the curve, radians.
  double total_turn() const;

  void append(const Polyline& tail);

 private:
  std::vector<Vec2> pts_;
  std::vector<double> cum_;
  void rebuild();
};

/// Cubic Hermite blend between two poses, sampled as a polyline. Used for
/// junction connection paths. min_tangent keeps U-turn loops wide enough for
/// a vehicle's minimum turning radius.
Polyline hermite_path(const Pose& from, const Pose& to, int samples = 48,
                      double min_tangent = 0.0);

}  // namespace scenforge::geom
