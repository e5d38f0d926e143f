#pragma once

// 2D geometry: poses, oriented boxes with rotated IoU (convex clipping),
// polygon containment and discrete path curvature.

#include <algorithm>
#include <cmath>
#include <array>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace latentplan {

struct GeometryError : std::runtime_error {
  explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Vec2 {
  double x = 0, y = 0;
  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// wraps into (-pi, pi]
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  if (a > M_PI) a -= 2.0 * M_PI;
  return a;
}

struct Pose2D {
  double x = 0, y = 0, yaw = 0;

  Pose2D() = default;
  Pose2D(double x_, double y_, double yaw_) : x(x_), y(y_), yaw(wrap_angle(yaw_)) {}

  // this ∘ local: local displacement expressed in this pose's frame
  Pose2D compose(double dx, double dy, double dyaw) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return Pose2D(x + c * dx - s * dy, y + s * dx + c * dy, yaw + dyaw);
  }

  // world point -> this pose's frame
  Vec2 to_local(Vec2 p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double px = p.x - x, py = p.y - y;
    return {c * px + s * py, -s * px + c * py};
  }

  Vec2 position() const { return {x, y}; }
};

struct OrientedBox {
  Pose2D center;
  double length = 0, width = 0;

  OrientedBox() = default;
  OrientedBox(Pose2D c, double len, double wid) : center(c), length(len), width(wid) {
    if (len <= 0 || wid <= 0) throw GeometryError("OrientedBox: non-positive extent");
  }

  // counter-clockwise corners
  std::vector<Vec2> corners() const {
    const double hl = length / 2, hw = width / 2;
    const double c = std::cos(center.yaw), s = std::sin(center.yaw);
    auto pt = [&](double lx, double ly) {
      return Vec2{center.x + c * lx - s * ly, center.y + s * lx + c * ly};
    };
    return {pt(hl, hw), pt(-hl, hw), pt(-hl, -hw), pt(hl, -hw)};
  }
};

inline double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) a += cross(poly[i], poly[(i + 1) % n]);
  return std::fabs(a) / 2;
}

// Sutherland-Hodgman: clip subject polygon by convex clip polygon (CCW)
inline std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
  const std::size_t n = clip.size();
  for (std::size_t i = 0; i < n && !subject.empty(); ++i) {
    const Vec2 a = clip[i], b = clip[(i + 1) % n];
    const Vec2 edge = b - a;
    std::vector<Vec2> out;
    const std::size_t m = subject.size();
    for (std::size_t j = 0; j < m; ++j) {
      const Vec2 p = subject[j], q = subject[(j + 1) % m];
      const double sp = cross(edge, p - a);
      const double sq = cross(edge, q - a);
      if (sp >= 0) out.push_back(p);
      if ((sp > 0 && sq < 0) || (sp < 0 && sq > 0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + (q - p) * t);
      }
    }
    subject = std::move(out);
  }
  return subject;
}

inline double intersection_area(const OrientedBox& a, const OrientedBox& b) {
  // canonical argument order keeps the result exactly symmetric
  auto key = [](const OrientedBox& bx) {
    return std::array<double, 5>{bx.center.x, bx.center.y, bx.center.yaw, bx.length, bx.width};
  };
  const OrientedBox* first = &a;
  const OrientedBox* second = &b;
  if (key(b) < key(a)) std::swap(first, second);
  auto inter = clip_convex(first->corners(), second->corners());
  if (inter.size() < 3) return 0.0;
  return polygon_area(inter);
}

inline double rotated_iou(const OrientedBox& a, const OrientedBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0) return 0.0;
  const double uni = a.length * a.width + b.length * b.width - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// true iff the intersection has strictly positive area (touching edges do not count)
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  return intersection_area(a, b) > 1e-12;
}

namespace detail {
inline bool segments_properly_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const double d1 = cross(p2 - p1, q1 - p1);
  const double d2 = cross(p2 - p1, q2 - p1);
  const double d3 = cross(q2 - q1, p1 - q1);
  const double d4 = cross(q2 - q1, p2 - q1);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline bool point_on_segment(Vec2 p, Vec2 a, Vec2 b, double eps = 1e-9) {
  const Vec2 ab = b - a;
  const double len = norm(ab);
  if (len < eps) return norm(p - a) < eps;
  const double t = std::clamp(dot(p - a, ab) / (len * len), 0.0, 1.0);
  return norm(p - (a + ab * t)) < eps;
}
}  // namespace detail

// Simple polygon (no self-intersection checked at construction); boundary is inside.
class Polygon {
 public:
  explicit Polygon(std::vector<Vec2> vertices) : v_(std::move(vertices)) {
    if (v_.size() < 3) throw GeometryError("polygon needs at least 3 vertices");
    const std::size_t n = v_.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        // skip adjacent edges (share a vertex)
        if (j == i + 1 || (i == 0 && j == n - 1)) continue;
        if (detail::segments_properly_intersect(v_[i], v_[(i + 1) % n], v_[j], v_[(j + 1) % n]))
          throw GeometryError("self-intersecting polygon");
      }
  }

  const std::vector<Vec2>& vertices() const { return v_; }

  bool contains(Vec2 p) const {
    const std::size_t n = v_.size();
    for (std::size_t i = 0; i < n; ++i)
      if (detail::point_on_segment(p, v_[i], v_[(i + 1) % n])) return true;
    // ray casting toward +x
    bool inside = false;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = v_[i], b = v_[(i + 1) % n];
      if ((a.y > p.y) != (b.y > p.y)) {
        const double xi = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
        if (p.x < xi) inside = !inside;
      }
    }
    return inside;
  }

 private:
  std::vector<Vec2> v_;
};

class Polyline {
 public:
  explicit Polyline(std::vector<Vec2> points) : p_(std::move(points)) {
    if (p_.size() < 2) throw GeometryError("polyline needs at least 2 points");
    for (std::size_t i = 1; i < p_.size(); ++i)
      if (norm(p_[i] - p_[i - 1]) <= 1e-9)
        throw GeometryError("coincident consecutive polyline points");
  }

  const std::vector<Vec2>& points() const { return p_; }
  std::size_t size() const { return p_.size(); }

  double length() const {
    double s = 0;
    for (std::size_t i = 1; i < p_.size(); ++i) s += norm(p_[i] - p_[i - 1]);
    return s;
  }

  // arc-length coordinate of the closest point on the polyline to p
  double project(Vec2 p) const {
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = 0, s = 0;
    for (std::size_t i = 0; i + 1 < p_.size(); ++i) {
      const Vec2 a = p_[i], b = p_[i + 1];
      const Vec2 ab = b - a;
      const double seg = norm(ab);
      const double t = std::clamp(dot(p - a, ab) / (seg * seg), 0.0, 1.0);
      const Vec2 q = a + ab * t;
      const double d = norm(p - q);
      if (d < best_d) {
        best_d = d;
        best_s = s + t * seg;
      }
      s += seg;
    }
    return best_s;
  }

  Vec2 point_at(double s) const {
    if (s <= 0) return p_.front();
    for (std::size_t i = 0; i + 1 < p_.size(); ++i) {
      const double seg = norm(p_[i + 1] - p_[i]);
      if (s <= seg) return p_[i] + (p_[i + 1] - p_[i]) * (s / seg);
      s -= seg;
    }
    return p_.back();
  }

  double heading_at(double s) const {
    if (s <= 0) s = 1e-9;
    double acc = 0;
    for (std::size_t i = 0; i + 1 < p_.size(); ++i) {
      const double seg = norm(p_[i + 1] - p_[i]);
      if (s <= acc + seg || i + 2 == p_.size()) {
        const Vec2 d = p_[i + 1] - p_[i];
        return std::atan2(d.y, d.x);
      }
      acc += seg;
    }
    const Vec2 d = p_.back() - p_[p_.size() - 2];
    return std::atan2(d.y, d.x);
  }

 private:
  std::vector<Vec2> p_;
};

// Menger curvature of the circle through three points; collinear -> 0
inline double menger_curvature(Vec2 a, Vec2 b, Vec2 c) {
  const double area2 = std::fabs(cross(b - a, c - a));  // 2 * triangle area
  const double la = norm(b - a), lb = norm(c - b), lc = norm(c - a);
  const double denom = la * lb * lc;
  if (denom < 1e-12) return 0.0;
  return 2.0 * area2 / denom;
}

// max windowed Menger curvature over interior points; too-short path -> 0
inline double max_menger_curvature(const Polyline& path, int window = 5) {
  if (window < 1) throw GeometryError("curvature window must be >= 1");
  const auto& p = path.points();
  const int n = static_cast<int>(p.size());
  if (n < 2 * window + 1) return 0.0;
  double best = 0;
  for (int i = window; i + window < n; ++i)
    best = std::max(best, menger_curvature(p[i - window], p[i], p[i + window]));
  return best;
}

namespace detail {
// Endpoint tangent headings. A chord's heading matches the tangent at the
// chord midpoint, so extrapolate half a step outward using the adjacent
// chord; exact for uniformly sampled circular arcs.
inline double start_tangent(const std::vector<Vec2>& p) {
  const Vec2 d0 = p[1] - p[0];
  double th0 = std::atan2(d0.y, d0.x);
  if (p.size() >= 3) {
    const Vec2 d1 = p[2] - p[1];
    if (norm(d1) > 1e-12) th0 -= 0.5 * wrap_angle(std::atan2(d1.y, d1.x) - th0);
  }
  return th0;
}
inline double end_tangent(const std::vector<Vec2>& p) {
  const std::size_t n = p.size();
  const Vec2 d1 = p[n - 1] - p[n - 2];
  double th1 = std::atan2(d1.y, d1.x);
  if (n >= 3) {
    const Vec2 d0 = p[n - 2] - p[n - 3];
    if (norm(d0) > 1e-12) th1 += 0.5 * wrap_angle(th1 - std::atan2(d0.y, d0.x));
  }
  return th1;
}
}  // namespace detail

// signed net heading change between end tangents (positive = left turn)
inline double net_heading_change(const Polyline& path) {
  const auto& p = path.points();
  return wrap_angle(detail::end_tangent(p) - detail::start_tangent(p));
}

// |wrap(theta_end - theta_start)| between end tangents
inline double heading_difference(const Polyline& path) {
  return std::fabs(net_heading_change(path));
}

}  // namespace latentplan
