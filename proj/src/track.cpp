#include "overtake/track.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "overtake/errors.hpp"

namespace overtake {
namespace {

constexpr double kMinSpacing = 0.01;
constexpr double kMaxSpacing = 100.0;
constexpr double kStraightSnap = 1e-9;
constexpr double kMaxMiter = 4.0;

// Signed curvature of the circle through three points (left turn positive).
double circumscribed_curvature(Vec2 a, Vec2 b, Vec2 c) {
  const double ab = norm(b - a);
  const double bc = norm(c - b);
  const double ca = norm(a - c);
  const double denom = ab * bc * ca;
  if (denom <= 0.0) return 0.0;
  const double k = 2.0 * cross(b - a, c - b) / denom;
  return std::abs(k) < kStraightSnap ? 0.0 : k;
}

double closest_param(Vec2 a, Vec2 dir, double length, Vec2 p) {
  return std::clamp(dot(p - a, dir), 0.0, length);
}

}  // namespace

TrackGeometry::TrackGeometry(std::vector<Vec2> control_points, double half_width, std::string name)
    : name_(std::move(name)), points_(std::move(control_points)), half_width_(half_width) {
  if (!(half_width_ > 0.0) || !std::isfinite(half_width_)) {
    throw ConfigError("track half width must be positive");
  }
  if (points_.size() >= 2 && norm(points_.back() - points_.front()) < kMinSpacing) {
    points_.pop_back();
  }
  if (points_.size() < 4) throw ConfigError("track needs at least 4 control points");

  const std::size_t n = points_.size();
  cumulative_.resize(n);
  seg_length_.resize(n);
  seg_dir_.resize(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 d = points_[(i + 1) % n] - points_[i];
    const double len = norm(d);
    if (!std::isfinite(len) || len < kMinSpacing) {
      throw ConfigError("track control points " + std::to_string(i) + " and " +
                        std::to_string((i + 1) % n) + " are closer than 1 cm");
    }
    if (len > kMaxSpacing) {
      throw ConfigError("track segment " + std::to_string(i) + " is longer than 100 m");
    }
    cumulative_[i] = acc;
    seg_length_[i] = len;
    seg_dir_[i] = d * (1.0 / len);
    acc += len;
  }
  total_length_ = acc;

  vertex_curvature_.resize(n);
  left_.resize(n);
  right_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t prev = (i + n - 1) % n;
    const std::size_t next = (i + 1) % n;
    vertex_curvature_[i] = circumscribed_curvature(points_[prev], points_[i], points_[next]);
    if (std::abs(vertex_curvature_[i]) * half_width_ >= 1.0) {
      throw ConfigError("track curvature at control point " + std::to_string(i) +
                        " is too tight for the half width");
    }
    // Offset along the bisector of adjacent normals so each wall segment is
    // parallel to its centerline segment at exactly half_width.
    const Vec2 n0 = perp_left(seg_dir_[prev]);
    const Vec2 n1 = perp_left(seg_dir_[i]);
    Vec2 bis = n0 + n1;
    const double bis_len = norm(bis);
    bis = bis_len > 1e-12 ? bis * (1.0 / bis_len) : n1;
    const double cos_half = std::max(dot(bis, n1), 1.0 / kMaxMiter);
    const Vec2 offset = bis * (half_width_ / cos_half);
    left_[i] = points_[i] + offset;
    right_[i] = points_[i] - offset;
  }

  walls_.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) walls_.push_back({left_[i], left_[(i + 1) % n]});
  for (std::size_t i = 0; i < n; ++i) walls_.push_back({right_[i], right_[(i + 1) % n]});
  center_segments_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) center_segments_.push_back({points_[i], points_[(i + 1) % n]});

  wall_grid_.build(walls_, 25.0);
  center_grid_.build(center_segments_, 25.0);
}

void TrackGeometry::Grid::build(std::span<const Segment> segments, double cell_size) {
  cell = cell_size;
  double min_x = std::numeric_limits<double>::max(), min_y = min_x;
  double max_x = std::numeric_limits<double>::lowest(), max_y = max_x;
  for (const auto& s : segments) {
    min_x = std::min({min_x, s.a.x, s.b.x});
    min_y = std::min({min_y, s.a.y, s.b.y});
    max_x = std::max({max_x, s.a.x, s.b.x});
    max_y = std::max({max_y, s.a.y, s.b.y});
  }
  origin = {min_x, min_y};
  nx = static_cast<int>(std::floor((max_x - min_x) / cell)) + 1;
  ny = static_cast<int>(std::floor((max_y - min_y) / cell)) + 1;
  cells.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), {});
  for (std::size_t idx = 0; idx < segments.size(); ++idx) {
    const auto& s = segments[idx];
    const int x0 = static_cast<int>(std::floor((std::min(s.a.x, s.b.x) - origin.x) / cell));
    const int x1 = static_cast<int>(std::floor((std::max(s.a.x, s.b.x) - origin.x) / cell));
    const int y0 = static_cast<int>(std::floor((std::min(s.a.y, s.b.y) - origin.y) / cell));
    const int y1 = static_cast<int>(std::floor((std::max(s.a.y, s.b.y) - origin.y) / cell));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        cells[static_cast<std::size_t>(y) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(x)]
            .push_back(idx);
      }
    }
  }
}

void TrackGeometry::Grid::query(Vec2 center, double radius, std::vector<std::size_t>& out) const {
  const std::size_t first = out.size();
  const int x0 = std::max(0, static_cast<int>(std::floor((center.x - radius - origin.x) / cell)));
  const int x1 = std::min(nx - 1, static_cast<int>(std::floor((center.x + radius - origin.x) / cell)));
  const int y0 = std::max(0, static_cast<int>(std::floor((center.y - radius - origin.y) / cell)));
  const int y1 = std::min(ny - 1, static_cast<int>(std::floor((center.y + radius - origin.y) / cell)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const auto& bucket =
          cells[static_cast<std::size_t>(y) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(x)];
      out.insert(out.end(), bucket.begin(), bucket.end());
    }
  }
  auto begin = out.begin() + static_cast<std::ptrdiff_t>(first);
  std::sort(begin, out.end());
  out.erase(std::unique(begin, out.end()), out.end());
}

void TrackGeometry::walls_near(Vec2 center, double radius, std::vector<std::size_t>& out) const {
  wall_grid_.query(center, radius, out);
}

double TrackGeometry::wrap(double arc_length) const {
  double w = std::fmod(arc_length, total_length_);
  if (w < 0.0) w += total_length_;
  if (w >= total_length_) w = 0.0;
  return w;
}

std::size_t TrackGeometry::segment_index(double wrapped_arc) const {
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), wrapped_arc);
  return static_cast<std::size_t>(std::distance(cumulative_.begin(), it)) - 1;
}

Vec2 TrackGeometry::point_at(double arc_length) const {
  const double s = wrap(arc_length);
  const std::size_t i = segment_index(s);
  return points_[i] + seg_dir_[i] * (s - cumulative_[i]);
}

double TrackGeometry::heading_at(double arc_length) const {
  const std::size_t i = segment_index(wrap(arc_length));
  return std::atan2(seg_dir_[i].y, seg_dir_[i].x);
}

double TrackGeometry::curvature_at(double arc_length) const {
  const double s = wrap(arc_length);
  const std::size_t i = segment_index(s);
  const double t = (s - cumulative_[i]) / seg_length_[i];
  const double k0 = vertex_curvature_[i];
  const double k1 = vertex_curvature_[(i + 1) % points_.size()];
  return k0 + (k1 - k0) * t;
}

TrackFrame TrackGeometry::frame_on_segment(std::size_t seg, Vec2 position, double t, double dist) const {
  const Vec2 foot = points_[seg] + seg_dir_[seg] * t;
  const double side = cross(seg_dir_[seg], position - foot);
  TrackFrame frame;
  frame.arc_length = wrap(cumulative_[seg] + t);
  frame.lateral_offset = side >= 0.0 ? dist : -dist;
  frame.tangent_heading = std::atan2(seg_dir_[seg].y, seg_dir_[seg].x);
  return frame;
}

TrackFrame TrackGeometry::project(Vec2 position) const {
  constexpr double kLocalRadius = 30.0;
  thread_local std::vector<std::size_t> candidates;
  candidates.clear();
  center_grid_.query(position, kLocalRadius, candidates);

  auto search = [&](auto&& for_each_index) {
    double best_d2 = std::numeric_limits<double>::infinity();
    std::size_t best_seg = 0;
    double best_t = 0.0;
    for_each_index([&](std::size_t i) {
      const double t = closest_param(points_[i], seg_dir_[i], seg_length_[i], position);
      const Vec2 foot = points_[i] + seg_dir_[i] * t;
      const Vec2 d = position - foot;
      const double d2 = dot(d, d);
      if (d2 < best_d2) {
        best_d2 = d2;
        best_seg = i;
        best_t = t;
      }
    });
    return std::tuple{best_d2, best_seg, best_t};
  };

  // Candidates are sorted, so strict '<' keeps the lowest arc length on ties.
  auto [d2, seg, t] = search([&](auto&& visit) {
    for (std::size_t i : candidates) visit(i);
  });
  if (!(d2 <= kLocalRadius * kLocalRadius)) {
    std::tie(d2, seg, t) = search([&](auto&& visit) {
      for (std::size_t i = 0; i < points_.size(); ++i) visit(i);
    });
  }
  return frame_on_segment(seg, position, t, std::sqrt(d2));
}

TrackFrame centerline_projection(const TrackGeometry& track, Vec2 position) {
  return track.project(position);
}

double wrap_difference(double loop_length, double from, double to) {
  double d = std::fmod(to - from, loop_length);
  if (d > 0.5 * loop_length) d -= loop_length;
  if (d < -0.5 * loop_length) d += loop_length;
  return d;
}

double progress_delta(const TrackGeometry& track, double cp_prev, double cp_curr) {
  const double length = track.total_length();
  require(cp_prev >= 0.0 && cp_prev < length, "progress_delta: cp_prev outside [0, total_length)");
  require(cp_curr >= 0.0 && cp_curr < length, "progress_delta: cp_curr outside [0, total_length)");
  return wrap_difference(length, cp_prev, cp_curr);
}

const std::array<double, kLookaheadCount>& lookahead_times() {
  static const std::array<double, kLookaheadCount> times = [] {
    std::array<double, kLookaheadCount> t{};
    for (std::size_t j = 0; j < kLookaheadCount; ++j) {
      t[j] = 0.2 + static_cast<double>(j) * (2.8 / 13.0);
    }
    return t;
  }();
  return times;
}

std::array<double, kLookaheadCount> curvature_lookahead(const TrackGeometry& track,
                                                         const TrackFrame& frame, double speed,
                                                         std::span<const double> horizon_times) {
  require(speed >= 0.0, "curvature_lookahead: speed must be non-negative");
  require(horizon_times.size() == kLookaheadCount, "curvature_lookahead: expects 14 horizon times");
  std::array<double, kLookaheadCount> out{};
  for (std::size_t j = 0; j < kLookaheadCount; ++j) {
    out[j] = track.curvature_at(frame.arc_length + speed * horizon_times[j]);
  }
  return out;
}

double wall_distance(const TrackGeometry& track, const TrackFrame& frame) {
  return track.half_width() - std::abs(frame.lateral_offset);
}

TrackGeometry load_track(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open track file " + path.string());
  std::string line;
  double half_width = 0.0;
  bool have_header = false;
  std::vector<Vec2> points;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    if (!have_header) {
      std::string key;
      if (!(fields >> key >> half_width) || key != "halfwidth") {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                          ": expected 'halfwidth <meters>' header");
      }
      have_header = true;
      continue;
    }
    Vec2 p;
    if (!(fields >> p.x >> p.y)) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 'x y'");
    }
    points.push_back(p);
  }
  if (!have_header) throw ConfigError(path.string() + ": missing halfwidth header");
  return TrackGeometry(std::move(points), half_width, path.stem().string());
}

void save_track(const TrackGeometry& track, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write track file " + path.string());
  out.precision(17);
  out << "halfwidth " << track.half_width() << '\n';
  for (const Vec2& p : track.control_points()) out << p.x << ' ' << p.y << '\n';
}

namespace {

// Turtle-style generator: straights and constant-radius arcs.
class TrackBuilder {
 public:
  TrackBuilder& straight(double length, double spacing = 5.0) {
    const auto steps = static_cast<int>(std::ceil(length / spacing));
    const Vec2 dir = unit_from_angle(heading_);
    const Vec2 start = pos_;
    for (int k = 1; k <= steps; ++k) {
      pos_ = start + dir * (length * k / steps);
      points_.push_back(pos_);
    }
    return *this;
  }

  // Positive angle turns left.
  TrackBuilder& arc(double radius, double angle_deg, double spacing = 1.5) {
    const double angle = angle_deg * std::numbers::pi / 180.0;
    const double length = radius * std::abs(angle);
    const auto steps = static_cast<int>(std::ceil(length / spacing));
    const double sign = angle > 0.0 ? 1.0 : -1.0;
    const Vec2 center = pos_ + perp_left(unit_from_angle(heading_)) * (sign * radius);
    const double h0 = heading_;
    for (int k = 1; k <= steps; ++k) {
      const double h = h0 + angle * k / steps;
      pos_ = center - perp_left(unit_from_angle(h)) * (sign * radius);
      points_.push_back(pos_);
    }
    heading_ = h0 + angle;
    return *this;
  }

  TrackGeometry build(double half_width, std::string name) {
    if (norm(pos_) > 1e-6) throw std::logic_error("bundled track does not close: " + name);
    points_.back() = Vec2{0.0, 0.0};
    std::vector<Vec2> pts;
    pts.push_back({0.0, 0.0});
    pts.insert(pts.end(), points_.begin(), points_.end() - 1);
    return TrackGeometry(std::move(pts), half_width, std::move(name));
  }

 private:
  Vec2 pos_{0.0, 0.0};
  double heading_ = 0.0;
  std::vector<Vec2> points_;
};

constexpr double kBundledHalfWidth = 7.0;
constexpr std::array<std::string_view, 3> kBundledNames = {"oval", "hairpin", "chicane"};

}  // namespace

TrackGeometry bundled_track(std::string_view name) {
  TrackBuilder b;
  if (name == "oval") {
    b.straight(500).arc(100, 180).straight(500).arc(100, 180);
  } else if (name == "hairpin") {
    b.straight(500)
        .arc(60, 90)
        .straight(300)
        .arc(60, 90)
        .straight(100)
        .arc(25, 180)
        .straight(50)
        .arc(40, -180)
        .straight(450)
        .arc(60, 90)
        .straight(170)
        .arc(60, 90);
  } else if (name == "chicane") {
    constexpr double r = 40.0;
    const double chicane_dx = 2.0 * r * std::sin(std::numbers::pi / 4.0);
    const double a = 250.0, mid = 150.0;
    const double c = 800.0 - a - mid - 2.0 * chicane_dx;
    b.straight(800)
        .arc(80, 180)
        .straight(a)
        .arc(r, -45)
        .arc(r, 45)
        .straight(mid)
        .arc(r, 45)
        .arc(r, -45)
        .straight(c)
        .arc(80, 180);
  } else {
    throw ConfigError("unknown bundled track '" + std::string(name) + "'");
  }
  return b.build(kBundledHalfWidth, std::string(name));
}

std::span<const std::string_view> bundled_track_names() { return kBundledNames; }

TrackGeometry resolve_track(std::string_view id) {
  for (auto n : kBundledNames) {
    if (n == id) return bundled_track(id);
  }
  return load_track(std::filesystem::path(std::string(id)));
}

}  // namespace overtake
