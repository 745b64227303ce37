#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace overtake::oracle {

double loop_delta(double loop_length, double a, double b) {
  const double d = b - a;
  double best = d;
  for (double candidate : {d - loop_length, d + loop_length}) {
    if (std::abs(candidate) < std::abs(best)) best = candidate;
  }
  return best;
}

double racing_reward(double loop_length, double ego_prev, double ego_curr, double speed, int wall, double c_w) {
  return loop_delta(loop_length, ego_prev, ego_curr) - c_w * wall * speed * speed;
}

double overtaking_reward(double loop_length, double ego_prev, double ego_curr, double speed, int wall, int car,
                         const std::vector<OpponentCp>& opponents, double c_w, double c_c, double c_r,
                         double c_d) {
  double total = racing_reward(loop_length, ego_prev, ego_curr, speed, wall, c_w);
  total -= c_c * car * speed * speed;
  for (const auto& opp : opponents) {
    const double before = loop_delta(loop_length, ego_prev, opp.prev);
    const double now = loop_delta(loop_length, ego_curr, opp.curr);
    const int rho = std::abs(now) < c_d ? 1 : 0;
    total += rho * c_r * (before - now);
  }
  return total;
}

namespace {

bool chords_cross(Vec2 p, Vec2 q, const Segment& s) {
  auto side = [](Vec2 a, Vec2 b, Vec2 c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); };
  const double d1 = side(s.a, s.b, p);
  const double d2 = side(s.a, s.b, q);
  const double d3 = side(p, q, s.a);
  const double d4 = side(p, q, s.b);
  return ((d1 <= 0 && d2 >= 0) || (d1 >= 0 && d2 <= 0)) && ((d3 <= 0 && d4 >= 0) || (d3 >= 0 && d4 <= 0));
}

}  // namespace

double march_ray(Vec2 origin, Vec2 direction, std::span<const Segment> segments, double max_range, double step) {
  const double len = std::hypot(direction.x, direction.y);
  const Vec2 dir{direction.x / len, direction.y / len};
  // Broad phase: keep segments whose bounding box meets the ray's.
  const Vec2 end{origin.x + dir.x * max_range, origin.y + dir.y * max_range};
  const double lo_x = std::min(origin.x, end.x), hi_x = std::max(origin.x, end.x);
  const double lo_y = std::min(origin.y, end.y), hi_y = std::max(origin.y, end.y);
  std::vector<Segment> near;
  for (const auto& s : segments) {
    if (std::max(s.a.x, s.b.x) < lo_x || std::min(s.a.x, s.b.x) > hi_x) continue;
    if (std::max(s.a.y, s.b.y) < lo_y || std::min(s.a.y, s.b.y) > hi_y) continue;
    near.push_back(s);
  }
  const int steps = static_cast<int>(std::ceil(max_range / step));
  Vec2 prev = origin;
  for (int k = 1; k <= steps; ++k) {
    const double t = std::min(k * step, max_range);
    const Vec2 p{origin.x + dir.x * t, origin.y + dir.y * t};
    for (const auto& s : near) {
      if (chords_cross(prev, p, s)) return std::max(t - 0.5 * step, 0.0);
    }
    prev = p;
  }
  return max_range;
}

std::vector<Segment> rectangle_edges(const OrientedRect& box) {
  const double c = std::cos(box.heading), s = std::sin(box.heading);
  const double hl = 0.5 * box.length, hw = 0.5 * box.width;
  const double lx[4] = {hl, -hl, -hl, hl};
  const double ly[4] = {hw, hw, -hw, -hw};
  Vec2 corners[4];
  for (int i = 0; i < 4; ++i) {
    corners[i] = {box.center.x + c * lx[i] - s * ly[i], box.center.y + s * lx[i] + c * ly[i]};
  }
  return {{corners[0], corners[1]}, {corners[1], corners[2]}, {corners[2], corners[3]}, {corners[3], corners[0]}};
}

DenseProjection dense_projection(std::span<const Vec2> loop, Vec2 point, double spacing) {
  DenseProjection best{0.0, std::numeric_limits<double>::infinity()};
  double base = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Vec2 a = loop[i];
    const Vec2 b = loop[(i + 1) % loop.size()];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const int samples = static_cast<int>(std::ceil(len / spacing));
    for (int k = 0; k < samples; ++k) {
      const double s = std::min(k * spacing, len);
      const double f = s / len;
      const double d = std::hypot(a.x + f * (b.x - a.x) - point.x, a.y + f * (b.y - a.y) - point.y);
      if (d < best.distance) best = {base + s, d};
    }
    base += len;
  }
  return best;
}

double circle_curvature(Vec2 a, Vec2 b, Vec2 c) {
  const double twice_area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  const double ab = std::hypot(b.x - a.x, b.y - a.y);
  const double bc = std::hypot(c.x - b.x, c.y - b.y);
  const double ca = std::hypot(a.x - c.x, a.y - c.y);
  return 2.0 * twice_area / (ab * bc * ca);
}

std::vector<double> finite_difference_gradient(const std::function<double()>& f, std::span<double> params,
                                               double eps) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double up = f();
    params[i] = saved - eps;
    const double down = f();
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

Eigen::MatrixXd naive_matmul(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double sum = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) sum += a(i, k) * b(k, j);
      out(i, j) = sum;
    }
  }
  return out;
}

}  // namespace overtake::oracle
