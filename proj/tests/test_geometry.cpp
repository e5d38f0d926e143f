#include <cmath>
#include <random>

#include "doctest.h"
#include "latentplan/geometry.hpp"

using namespace latentplan;

namespace {

// Monte-Carlo IoU oracle: sample uniformly over the union's bounding box.
double mc_iou(const OrientedBox& a, const OrientedBox& b, std::mt19937_64& rng,
              int samples = 1000000) {
  auto ca = a.corners();
  auto cb = b.corners();
  double xmin = 1e18, xmax = -1e18, ymin = 1e18, ymax = -1e18;
  for (const auto& c : ca) {
    xmin = std::min(xmin, c.x); xmax = std::max(xmax, c.x);
    ymin = std::min(ymin, c.y); ymax = std::max(ymax, c.y);
  }
  for (const auto& c : cb) {
    xmin = std::min(xmin, c.x); xmax = std::max(xmax, c.x);
    ymin = std::min(ymin, c.y); ymax = std::max(ymax, c.y);
  }
  auto inside = [](const OrientedBox& box, Vec2 p) {
    Vec2 l = box.center.to_local(p);
    return std::fabs(l.x) <= box.length / 2 && std::fabs(l.y) <= box.width / 2;
  };
  std::uniform_real_distribution<double> ux(xmin, xmax), uy(ymin, ymax);
  long inter = 0, uni = 0;
  for (int i = 0; i < samples; ++i) {
    Vec2 p{ux(rng), uy(rng)};
    bool ia = inside(a, p), ib = inside(b, p);
    if (ia && ib) ++inter;
    if (ia || ib) ++uni;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

OrientedBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-4, 4), ang(-M_PI, M_PI), ext(0.5, 5.0);
  return OrientedBox(Pose2D(pos(rng), pos(rng), ang(rng)), ext(rng), ext(rng));
}

}  // namespace

TEST_CASE("rotated_iou examples") {
  OrientedBox a(Pose2D(0, 0, 0), 4, 2);
  CHECK(rotated_iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  OrientedBox b(Pose2D(2, 0, 0), 4, 2);
  CHECK(rotated_iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

  OrientedBox far(Pose2D(100, 0, 0), 4, 2);
  CHECK(rotated_iou(a, far) == 0.0);
}

TEST_CASE("rotated_iou vs Monte-Carlo oracle on the offset example") {
  std::mt19937_64 rng(99);
  OrientedBox a(Pose2D(0, 0, 0), 4, 2);
  OrientedBox b(Pose2D(2, 0, 0), 4, 2);
  CHECK(std::fabs(rotated_iou(a, b) - mc_iou(a, b, rng)) < 1e-2);
}

TEST_CASE("rotated_iou vs Monte-Carlo oracle on random pairs") {
  std::mt19937_64 rng(4242);
  for (int i = 0; i < 20; ++i) {
    auto a = random_box(rng);
    auto b = random_box(rng);
    double exact = rotated_iou(a, b);
    double approx = mc_iou(a, b, rng, 200000);
    CHECK(std::fabs(exact - approx) < 2e-2);
  }
}

TEST_CASE("IoU symmetry, bounds and rotation invariance") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    auto a = random_box(rng);
    auto b = random_box(rng);
    double ab = rotated_iou(a, b), ba = rotated_iou(b, a);
    CHECK(ab == ba);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    // rigid transform both boxes
    std::uniform_real_distribution<double> ang(-M_PI, M_PI), off(-10, 10);
    double th = ang(rng), tx = off(rng), ty = off(rng);
    auto xf = [&](const OrientedBox& bx) {
      double c = std::cos(th), s = std::sin(th);
      return OrientedBox(Pose2D(c * bx.center.x - s * bx.center.y + tx,
                                s * bx.center.x + c * bx.center.y + ty, bx.center.yaw + th),
                         bx.length, bx.width);
    };
    CHECK(std::fabs(rotated_iou(xf(a), xf(b)) - ab) < 1e-9);
  }
}

TEST_CASE("boxes_overlap") {
  OrientedBox a(Pose2D(0, 0, 0), 4, 2);
  CHECK(boxes_overlap(a, a));
  // edge-touching: gap exactly 0 -> not a collision
  OrientedBox touching(Pose2D(4, 0, 0), 4, 2);
  CHECK_FALSE(boxes_overlap(a, touching));
  // cross-check iou>0 <=> overlap on random pairs
  std::mt19937_64 rng(31);
  for (int i = 0; i < 10000; ++i) {
    auto x = random_box(rng);
    auto y = random_box(rng);
    CHECK(boxes_overlap(x, y) == (rotated_iou(x, y) > 0));
  }
}

TEST_CASE("point_in_polygon") {
  Polygon square({{0, 0}, {2, 0}, {2, 2}, {0, 2}});
  CHECK(square.contains({1, 1}));         // centroid
  CHECK_FALSE(square.contains({3, 1}));   // 1 m outside edge
  CHECK(square.contains({0, 0}));         // vertex counts as inside
  CHECK(square.contains({1, 0}));         // edge counts as inside
}

TEST_CASE("self-intersecting polygon rejected at construction") {
  CHECK_THROWS_AS(Polygon({{0, 0}, {2, 2}, {2, 0}, {0, 2}}), GeometryError);
}

TEST_CASE("menger curvature on circles") {
  auto circle_path = [](double radius, double arc, int n) {
    std::vector<Vec2> pts;
    for (int i = 0; i < n; ++i) {
      double t = arc * i / (n - 1);
      pts.push_back({radius * std::cos(t), radius * std::sin(t)});
    }
    return Polyline(pts);
  };
  CHECK(max_menger_curvature(circle_path(10.0, M_PI / 2, 41), 5) ==
        doctest::Approx(0.1).epsilon(1e-6));
  CHECK(max_menger_curvature(circle_path(5.0, M_PI / 2, 41), 5) ==
        doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("menger curvature of collinear points is zero") {
  std::vector<Vec2> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({static_cast<double>(i), 2.0 * i});
  CHECK(max_menger_curvature(Polyline(pts), 5) == 0.0);
}

TEST_CASE("short path treated as straight") {
  CHECK(max_menger_curvature(Polyline({{0, 0}, {1, 0}, {2, 1}}), 5) == 0.0);
}

TEST_CASE("menger curvature invariant under rigid transforms") {
  std::mt19937_64 rng(55);
  std::vector<Vec2> pts;
  for (int i = 0; i < 30; ++i) {
    double t = 0.05 * i;
    pts.push_back({10 * std::cos(t), 10 * std::sin(t)});
  }
  double base = max_menger_curvature(Polyline(pts), 5);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI), off(-50, 50);
  for (int trial = 0; trial < 10; ++trial) {
    double th = ang(rng), tx = off(rng), ty = off(rng);
    double c = std::cos(th), s = std::sin(th);
    std::vector<Vec2> moved;
    for (auto p : pts) moved.push_back({c * p.x - s * p.y + tx, s * p.x + c * p.y + ty});
    CHECK(std::fabs(max_menger_curvature(Polyline(moved), 5) - base) < 1e-9);
  }
}

TEST_CASE("heading difference") {
  // straight
  CHECK(heading_difference(Polyline({{0, 0}, {1, 0}, {2, 0}})) == 0.0);
  // quarter circle
  std::vector<Vec2> quarter;
  for (int i = 0; i <= 40; ++i) {
    double t = (M_PI / 2) * i / 40;
    quarter.push_back({10 * std::sin(t), 10 * (1 - std::cos(t))});
  }
  CHECK(heading_difference(Polyline(quarter)) == doctest::Approx(M_PI / 2).epsilon(1e-2));
  // full U-turn
  std::vector<Vec2> uturn;
  for (int i = 0; i <= 80; ++i) {
    double t = M_PI * i / 80;
    uturn.push_back({5 * std::sin(t), 5 * (1 - std::cos(t))});
  }
  CHECK(std::fabs(heading_difference(Polyline(uturn)) - M_PI) < 1e-3);
  CHECK(net_heading_change(Polyline(quarter)) > 0);  // left turn positive
}

TEST_CASE("pose wrap stays in (-pi, pi]") {
  Pose2D p(0, 0, 0);
  auto q = p.compose(0, 0, M_PI);
  CHECK(q.yaw == doctest::Approx(M_PI));
  auto r = q.compose(0, 0, M_PI);
  CHECK(std::fabs(r.yaw) < 1e-12);
  CHECK(Pose2D(0, 0, 3 * M_PI / 2).yaw == doctest::Approx(-M_PI / 2));
}

TEST_CASE("polyline projection and arc length") {
  Polyline line({{0, 0}, {10, 0}});
  CHECK(line.length() == doctest::Approx(10.0));
  CHECK(line.project({5, 3}) == doctest::Approx(5.0));
  CHECK(line.project({-4, 0}) == doctest::Approx(0.0));
  CHECK(line.project({25, 0}) == doctest::Approx(10.0));
}
