#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "overtake/geometry.hpp"

namespace overtake {

inline constexpr std::size_t kLookaheadCount = 14;

// Where a point sits relative to the centerline.
struct TrackFrame {
  double arc_length = 0.0;      // [0, total_length)
  double lateral_offset = 0.0;  // positive = left of travel direction
  double tangent_heading = 0.0;
};

// Closed piecewise-linear centerline with constant half width. Immutable after
// construction; every query is const and thread-safe.
class TrackGeometry {
 public:
  // Builds a track from an ordered loop of control points. A trailing point
  // equal to the first is treated as an explicit closure and dropped.
  // Throws ConfigError on fewer than 4 points, half_width <= 0, degenerate or
  // over-long segments, or curvature tight enough to fold the inner wall.
  TrackGeometry(std::vector<Vec2> control_points, double half_width, std::string name = "custom");

  const std::string& name() const { return name_; }
  double half_width() const { return half_width_; }
  double total_length() const { return total_length_; }
  std::size_t segment_count() const { return points_.size(); }
  std::span<const Vec2> control_points() const { return points_; }
  std::span<const double> cumulative_length() const { return cumulative_; }
  std::span<const double> vertex_curvature() const { return vertex_curvature_; }

  // Wraps any real arc length into [0, total_length).
  double wrap(double arc_length) const;

  Vec2 point_at(double arc_length) const;
  double heading_at(double arc_length) const;
  // Signed curvature (left turn positive), linear between vertex estimates.
  double curvature_at(double arc_length) const;

  // Nearest centerline point. Equidistant candidates resolve to the lowest
  // arc length.
  TrackFrame project(Vec2 position) const;

  // Left and right boundary polylines as closed segment lists.
  std::span<const Segment> wall_segments() const { return walls_; }
  std::span<const Vec2> left_boundary() const { return left_; }
  std::span<const Vec2> right_boundary() const { return right_; }

  // Appends indices (into wall_segments) of every wall segment whose
  // bounding box intersects the axis-aligned box around center. The result
  // is sorted and free of duplicates.
  void walls_near(Vec2 center, double radius, std::vector<std::size_t>& out) const;

 private:
  struct Grid {
    Vec2 origin;
    double cell = 25.0;
    int nx = 0;
    int ny = 0;
    std::vector<std::vector<std::size_t>> cells;

    void build(std::span<const Segment> segments, double cell_size);
    void query(Vec2 center, double radius, std::vector<std::size_t>& out) const;
  };

  std::size_t segment_index(double wrapped_arc) const;
  TrackFrame frame_on_segment(std::size_t seg, Vec2 position, double t, double dist) const;

  std::string name_;
  std::vector<Vec2> points_;
  double half_width_;
  double total_length_ = 0.0;
  std::vector<double> cumulative_;  // arc length at each vertex
  std::vector<double> seg_length_;
  std::vector<Vec2> seg_dir_;  // unit tangents
  std::vector<double> vertex_curvature_;
  std::vector<Vec2> left_;
  std::vector<Vec2> right_;
  std::vector<Segment> walls_;
  std::vector<Segment> center_segments_;
  Grid wall_grid_;
  Grid center_grid_;
};

TrackFrame centerline_projection(const TrackGeometry& track, Vec2 position);

// Signed shortest wrap-aware difference cp_curr - cp_prev.
// Throws ContractViolation when either value lies outside [0, total_length).
double progress_delta(const TrackGeometry& track, double cp_prev, double cp_curr);

// Same wrap rule for any loop length; no range checks.
double wrap_difference(double loop_length, double from, double to);

// Lookahead times t_j = 0.2 + j * 2.8 / 13 seconds, j = 0..13.
const std::array<double, kLookaheadCount>& lookahead_times();

std::array<double, kLookaheadCount> curvature_lookahead(
    const TrackGeometry& track, const TrackFrame& frame, double speed,
    std::span<const double> horizon_times = lookahead_times());

// half_width - |lateral_offset|; negative beyond the wall.
double wall_distance(const TrackGeometry& track, const TrackFrame& frame);

// Text track files: "halfwidth <m>" then one "x y" control point per line.
TrackGeometry load_track(const std::filesystem::path& path);
void save_track(const TrackGeometry& track, const std::filesystem::path& path);

// Procedurally generated circuits: "oval", "hairpin", "chicane".
TrackGeometry bundled_track(std::string_view name);
std::span<const std::string_view> bundled_track_names();

// Resolves a track id: a bundled name, or otherwise a path to a track file.
TrackGeometry resolve_track(std::string_view id);

}  // namespace overtake
