#include "scenforge/geometry.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <stdexcept>

namespace scenforge::geom {

double normalize_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a <= -kPi) a += 2.0 * kPi;
  return a;
}

double normalize_deg(double a) {
  while (a > 180.0) a -= 360.0;
  while (a <= -180.0) a += 360.0;
  return a;
}

Vec2 Vec2::normalized() const {
  double n = norm();
  if (n < 1e-12) return {0.0, 0.0};
  return {x / n, y / n};
}

Vec2 Vec2::rotated(double angle) const {
  double c = std::cos(angle), s = std::sin(angle);
  return {x * c - y * s, x * s + y * c};
}

std::array<Vec2, 4> Obb::corners() const {
  Vec2 ax{std::cos(heading), std::sin(heading)};
  Vec2 ay = ax.perp();
  Vec2 dx = ax * (length * 0.5);
  Vec2 dy = ay * (width * 0.5);
  return {center + dx + dy, center + dx - dy, center - dx - dy, center - dx + dy};
}

namespace {

// Projects corners onto an axis and returns the [min, max] interval.
std::pair<double, double> project_interval(const std::array<Vec2, 4>& corners, const Vec2& axis) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Vec2& c : corners) {
    double v = c.dot(axis);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

}  // namespace

bool obb_overlap(const Obb& a, const Obb& b) {
  auto ca = a.corners();
  auto cb = b.corners();
  Vec2 axes[4] = {
      Vec2{std::cos(a.heading), std::sin(a.heading)},
      Vec2{std::cos(a.heading), std::sin(a.heading)}.perp(),
      Vec2{std::cos(b.heading), std::sin(b.heading)},
      Vec2{std::cos(b.heading), std::sin(b.heading)}.perp(),
  };
  for (const Vec2& axis : axes) {
    auto [alo, ahi] = project_interval(ca, axis);
    auto [blo, bhi] = project_interval(cb, axis);
    if (ahi < blo || bhi < alo) return false;
  }
  return true;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  Vec2 ab = b - a;
  double den = ab.norm_sq();
  double t = den < 1e-18 ? 0.0 : std::clamp((p - a).dot(ab) / den, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

double segment_distance(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  // Proper intersection means distance zero.
  Vec2 r = p2 - p1, s = q2 - q1;
  double denom = r.cross(s);
  Vec2 qp = q1 - p1;
  if (std::abs(denom) > 1e-12) {
    double t = qp.cross(s) / denom;
    double u = qp.cross(r) / denom;
    if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) return 0.0;
  }
  double d = point_segment_distance(p1, q1, q2);
  d = std::min(d, point_segment_distance(p2, q1, q2));
  d = std::min(d, point_segment_distance(q1, p1, p2));
  d = std::min(d, point_segment_distance(q2, p1, p2));
  return d;
}

double obb_distance(const Obb& a, const Obb& b) {
  if (obb_overlap(a, b)) return 0.0;
  auto ca = a.corners();
  auto cb = b.corners();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      best = std::min(best, segment_distance(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]));
    }
  }
  return best;
}

Polyline::Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) { rebuild(); }

void Polyline::rebuild() {
  cum_.assign(pts_.size(), 0.0);
  for (std::size_t i = 1; i < pts_.size(); ++i) {
    cum_[i] = cum_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
  }
}

Vec2 Polyline::point_at(double s) const {
  if (pts_.empty()) return {};
  if (pts_.size() == 1 || s <= 0.0) return pts_.front();
  if (s >= length()) return pts_.back();
  auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  std::size_t i = static_cast<std::size_t>(it - cum_.begin());
  double seg = cum_[i] - cum_[i - 1];
  double t = seg < 1e-12 ? 0.0 : (s - cum_[i - 1]) / seg;
  return pts_[i - 1] + (pts_[i] - pts_[i - 1]) * t;
}

double Polyline::heading_at(double s) const {
  if (pts_.size() < 2) return 0.0;
  std::size_t i;
  if (s <= 0.0) {
    i = 1;
  } else if (s >= length()) {
    i = pts_.size() - 1;
  } else {
    i = static_cast<std::size_t>(std::upper_bound(cum_.begin(), cum_.end(), s) - cum_.begin());
    i = std::min(i, pts_.size() - 1);
  }
  Vec2 d = pts_[i] - pts_[i - 1];
  return std::atan2(d.y, d.x);
}

double Polyline::heading_smooth_at(double s) const {
  if (pts_.size() < 2) return 0.0;
  if (pts_.size() == 2) return heading_at(s);
  s = std::clamp(s, 0.0, length());
  auto seg_heading = [&](std::size_t i) {  // segment i: pts_[i] -> pts_[i+1]
    Vec2 d = pts_[i + 1] - pts_[i];
    return std::atan2(d.y, d.x);
  };
  // vertex headings: average of adjacent segment directions
  auto vertex_heading = [&](std::size_t v) {
    if (v == 0) return seg_heading(0);
    if (v + 1 == pts_.size()) return seg_heading(pts_.size() - 2);
    double h0 = seg_heading(v - 1);
    double h1 = seg_heading(v);
    return normalize_angle(h0 + 0.5 * normalize_angle(h1 - h0));
  };
  auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()), pts_.size() - 1);
  if (i == 0) i = 1;
  double seg = cum_[i] - cum_[i - 1];
  double u = seg < 1e-12 ? 0.0 : (s - cum_[i - 1]) / seg;
  double h0 = vertex_heading(i - 1);
  double h1 = vertex_heading(i);
  return normalize_angle(h0 + u * normalize_angle(h1 - h0));
}

Pose Polyline::pose_at(double s) const { return {point_at(s), heading_at(s)}; }

Polyline::Projection Polyline::project(const Vec2& p) const {
  return project_near(p, 0.0, length());
}

Polyline::Projection Polyline::project_near(const Vec2& p, double s_lo, double s_hi) const {
  Projection best;
  best.dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < pts_.size(); ++i) {
    if (cum_[i] < s_lo || cum_[i - 1] > s_hi) continue;
    Vec2 a = pts_[i - 1], b = pts_[i];
    Vec2 ab = b - a;
    double den = ab.norm_sq();
    double t = den < 1e-18 ? 0.0 : std::clamp((p - a).dot(ab) / den, 0.0, 1.0);
    Vec2 q = a + ab * t;
    double d = (p - q).norm();
    if (d < best.dist) {
      best.dist = d;
      best.s = cum_[i - 1] + std::sqrt(den) * t;
      // sign: positive when p lies left of the segment direction
      best.lateral = ab.cross(p - a) >= 0.0 ? d : -d;
    }
  }
  return best;
}

Polyline Polyline::offset(double d) const {
  if (pts_.size() < 2) return *this;
  std::vector<Vec2> out(pts_.size());
  for (std::size_t i = 0; i < pts_.size(); ++i) {
    Vec2 dir_in = i > 0 ? (pts_[i] - pts_[i - 1]).normalized() : Vec2{};
    Vec2 dir_out = i + 1 < pts_.size() ? (pts_[i + 1] - pts_[i]).normalized() : Vec2{};
    Vec2 avg = dir_in + dir_out;
    if (avg.norm() < 1e-9) avg = dir_in.norm() > 0.0 ? dir_in : dir_out;
    Vec2 n = avg.normalized().perp();
    // miter scale, clamped to avoid blowups at sharp joints
    Vec2 seg_dir = dir_out.norm() > 0.0 ? dir_out : dir_in;
    double cosh = std::max(0.3, n.dot(seg_dir.perp()));
    out[i] = pts_[i] + n * (d / cosh);
  }
  return Polyline(std::move(out));
}

Polyline Polyline::reversed() const {
  std::vector<Vec2> out(pts_.rbegin(), pts_.rend());
  return Polyline(std::move(out));
}

double Polyline::total_turn() const {
  double total = 0.0;
  for (std::size_t i = 2; i < pts_.size(); ++i) {
    double h0 = std::atan2(pts_[i - 1].y - pts_[i - 2].y, pts_[i - 1].x - pts_[i - 2].x);
    double h1 = std::atan2(pts_[i].y - pts_[i - 1].y, pts_[i].x - pts_[i - 1].x);
    total += std::abs(normalize_angle(h1 - h0));
  }
  return total;
}

void Polyline::append(const Polyline& tail) {
  if (tail.pts_.empty()) return;
  std::size_t start = 0;
  if (!pts_.empty() && (tail.pts_.front() - pts_.back()).norm() < 1e-9) start = 1;
  pts_.insert(pts_.end(), tail.pts_.begin() + static_cast<std::ptrdiff_t>(start), tail.pts_.end());
  rebuild();
}

Polyline hermite_path(const Pose& from, const Pose& to, int samples, double min_tangent) {
  double dist = (to.pos - from.pos).norm();
  double scale = std::max({dist, min_tangent, 1e-3});
  Vec2 m0 = Vec2{std::cos(from.heading), std::sin(from.heading)} * scale;
  Vec2 m1 = Vec2{std::cos(to.heading), std::sin(to.heading)} * scale;
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(samples) + 1);
  for (int i = 0; i <= samples; ++i) {
    double t = static_cast<double>(i) / samples;
    double t2 = t * t, t3 = t2 * t;
    double h00 = 2 * t3 - 3 * t2 + 1;
    double h10 = t3 - 2 * t2 + t;
    double h01 = -2 * t3 + 3 * t2;
    double h11 = t3 - t2;
    pts.push_back(from.pos * h00 + m0 * h10 + to.pos * h01 + m1 * h11);
  }
  return Polyline(std::move(pts));
}

}  // namespace scenforge::geom
