#include "overtake/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "overtake/binary_io.hpp"
#include "overtake/errors.hpp"

namespace overtake {
namespace {

constexpr double kMinRange = 1e-6;
constexpr std::string_view kStatsMagic = "OTNSTATS";
constexpr std::uint32_t kStatsVersion = 1;

double ray_segment(Vec2 origin, Vec2 dir, const Segment& seg) {
  const Vec2 s = seg.b - seg.a;
  const double denom = cross(dir, s);
  if (std::abs(denom) < 1e-12) return std::numeric_limits<double>::infinity();
  const Vec2 ao = seg.a - origin;
  const double t = cross(ao, s) / denom;
  const double u = cross(ao, dir) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
  return t;
}

// Slab test in the rectangle's own frame.
double ray_rect(Vec2 origin, Vec2 dir, const OrientedRect& box) {
  const double c = std::cos(box.heading);
  const double s = std::sin(box.heading);
  const Vec2 rel = origin - box.center;
  const Vec2 o{c * rel.x + s * rel.y, -s * rel.x + c * rel.y};
  const Vec2 d{c * dir.x + s * dir.y, -s * dir.x + c * dir.y};
  const double half[2] = {0.5 * box.length, 0.5 * box.width};
  const double oc[2] = {o.x, o.y};
  const double dc[2] = {d.x, d.y};
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 2; ++axis) {
    if (std::abs(dc[axis]) < 1e-15) {
      if (std::abs(oc[axis]) > half[axis]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t1 = (-half[axis] - oc[axis]) / dc[axis];
    double t2 = (half[axis] - oc[axis]) / dc[axis];
    if (t1 > t2) std::swap(t1, t2);
    t_enter = std::max(t_enter, t1);
    t_exit = std::min(t_exit, t2);
  }
  if (t_exit < std::max(t_enter, 0.0)) return std::numeric_limits<double>::infinity();
  return std::max(t_enter, 0.0);
}

}  // namespace

const std::array<std::size_t, kZScoredCount>& zscored_indices() {
  static const std::array<std::size_t, kZScoredCount> indices = [] {
    std::array<std::size_t, kZScoredCount> idx{};
    std::size_t k = 0;
    for (std::size_t i = 0; i < 7; ++i) idx[k++] = i;
    idx[k++] = obs::kPrevSteering;
    for (std::size_t i = 0; i < kLookaheadCount; ++i) idx[k++] = obs::kCurvature + i;
    return idx;
  }();
  return indices;
}

std::uint64_t observation_layout_hash() {
  static constexpr std::uint64_t hash = io::fnv1a(
      "obs96:v3,vdot3,theta1:z|lidar72:fov216,range20,minmax|steer1:z|fwall1:raw|fcar1:raw|"
      "curv14:t0.2..3.0:z|stdfloor1e-6");
  return hash;
}

double beam_angle(std::size_t beam) {
  const double deg = -kLidarHalfFovDeg + static_cast<double>(beam) * (2.0 * kLidarHalfFovDeg / 71.0);
  return deg * std::numbers::pi / 180.0;
}

double raycast(Vec2 origin, Vec2 direction, std::span<const Segment> walls,
               std::span<const OrientedRect> boxes, double max_range) {
  double best = max_range;
  for (const auto& seg : walls) best = std::min(best, ray_segment(origin, direction, seg));
  for (const auto& box : boxes) best = std::min(best, ray_rect(origin, direction, box));
  return std::max(best, kMinRange);
}

LidarScan cast_lidar(Vec2 origin, double heading, std::span<const Segment> walls,
                     std::span<const OrientedRect> boxes) {
  LidarScan scan;
  for (std::size_t j = 0; j < kLidarBeams; ++j) {
    scan.ranges[j] = raycast(origin, unit_from_angle(heading + beam_angle(j)), walls, boxes);
  }
  return scan;
}

LidarScan cast_lidar(const VehicleState& ego, const TrackGeometry& track,
                     std::span<const VehicleState> others, const CarParams& params) {
  thread_local std::vector<std::size_t> nearby;
  thread_local std::vector<Segment> walls;
  thread_local std::vector<OrientedRect> boxes;
  nearby.clear();
  walls.clear();
  boxes.clear();
  track.walls_near(ego.position, kLidarRange, nearby);
  const auto all_walls = track.wall_segments();
  for (std::size_t idx : nearby) walls.push_back(all_walls[idx]);
  const double reach = kLidarRange + 0.5 * std::hypot(params.body_length, params.body_width);
  for (const auto& car : others) {
    if (norm(car.position - ego.position) <= reach) boxes.push_back(car.footprint(params));
  }
  return cast_lidar(ego.position, ego.heading, walls, boxes);
}

double heading_error(const VehicleState& ego, const TrackFrame& frame) {
  return wrap_angle(ego.heading - frame.tangent_heading);
}

NormStats::NormStats() = default;

void NormStats::update(const RawObservation& raw) {
  require(!frozen_, "NormStats: update after freeze");
  ++count_;
  const auto n = static_cast<double>(count_);
  const auto& idx = zscored_indices();
  for (std::size_t k = 0; k < kZScoredCount; ++k) {
    const double x = raw[idx[k]];
    const double delta = x - mean_[k];
    mean_[k] += delta / n;
    m2_[k] += delta * (x - mean_[k]);
  }
}

double NormStats::stddev(std::size_t k) const {
  if (frozen_) return frozen_std_[k];
  if (count_ == 0) return kStdFloor;
  return std::max(std::sqrt(m2_[k] / static_cast<double>(count_)), kStdFloor);
}

void NormStats::freeze() {
  if (frozen_) return;
  for (std::size_t k = 0; k < kZScoredCount; ++k) {
    frozen_std_[k] = static_cast<float>(stddev(k));
    mean_[k] = static_cast<float>(mean_[k]);
  }
  frozen_ = true;
}

NormStats NormStats::from_moments(std::span<const double> mean, std::span<const double> stddev,
                                  std::uint64_t count) {
  require(mean.size() == kZScoredCount && stddev.size() == kZScoredCount,
          "NormStats::from_moments: expects 22 entries");
  NormStats stats;
  stats.count_ = count;
  for (std::size_t k = 0; k < kZScoredCount; ++k) {
    stats.mean_[k] = static_cast<float>(mean[k]);
    stats.frozen_std_[k] = static_cast<float>(std::max(stddev[k], kStdFloor));
    stats.m2_[k] = 0.0;
  }
  stats.frozen_ = true;
  return stats;
}

bool NormStats::operator==(const NormStats& other) const {
  if (frozen_ != other.frozen_ || count_ != other.count_) return false;
  for (std::size_t k = 0; k < kZScoredCount; ++k) {
    if (mean_[k] != other.mean_[k] || stddev(k) != other.stddev(k)) return false;
  }
  return true;
}

void NormStats::save(const std::filesystem::path& path) const {
  require(frozen_, "NormStats: only frozen statistics can be saved");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write stats file " + path.string());
  io::write_magic(out, kStatsMagic);
  io::write_pod<std::uint32_t>(out, kStatsVersion);
  io::write_pod<std::uint64_t>(out, observation_layout_hash());
  io::write_pod<std::uint64_t>(out, count_);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(kZScoredCount));
  std::array<float, kZScoredCount> buffer{};
  for (std::size_t k = 0; k < kZScoredCount; ++k) buffer[k] = static_cast<float>(mean_[k]);
  io::write_floats(out, buffer);
  for (std::size_t k = 0; k < kZScoredCount; ++k) buffer[k] = static_cast<float>(frozen_std_[k]);
  io::write_floats(out, buffer);
}

NormStats NormStats::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open stats file " + path.string());
  io::expect_magic(in, kStatsMagic);
  const auto version = io::read_pod<std::uint32_t>(in);
  if (version != kStatsVersion) {
    throw ConfigError("stats file version " + std::to_string(version) + " is not supported");
  }
  const auto hash = io::read_pod<std::uint64_t>(in);
  if (hash != observation_layout_hash()) {
    throw ConfigError("stats file layout hash " + std::to_string(hash) +
                      " does not match this build (" + std::to_string(observation_layout_hash()) + ")");
  }
  const auto count = io::read_pod<std::uint64_t>(in);
  const auto features = io::read_pod<std::uint32_t>(in);
  if (features != kZScoredCount) throw ConfigError("stats file has wrong feature count");
  std::array<float, kZScoredCount> mean_f{}, std_f{};
  io::read_floats(in, mean_f);
  io::read_floats(in, std_f);
  std::array<double, kZScoredCount> mean{}, stddev{};
  for (std::size_t k = 0; k < kZScoredCount; ++k) {
    mean[k] = mean_f[k];
    stddev[k] = std_f[k];
  }
  return from_moments(mean, stddev, count);
}

RawObservation raw_features(const VehicleState& ego, const LidarScan& scan,
                            const TrackFrame& frame, const TrackGeometry& track) {
  RawObservation raw{};
  for (std::size_t k = 0; k < 3; ++k) {
    raw[obs::kVelocity + k] = ego.body_velocity[k];
    raw[obs::kAcceleration + k] = ego.body_acceleration[k];
  }
  raw[obs::kHeadingError] = heading_error(ego, frame);
  for (std::size_t j = 0; j < kLidarBeams; ++j) raw[obs::kLidar + j] = scan.ranges[j];
  raw[obs::kPrevSteering] = ego.prev_steering;
  raw[obs::kWallFlag] = ego.wall_flag;
  raw[obs::kCarFlag] = ego.car_flag;
  const auto curvature = curvature_lookahead(track, frame, ego.speed);
  for (std::size_t j = 0; j < kLookaheadCount; ++j) raw[obs::kCurvature + j] = curvature[j];
  return raw;
}

Observation normalize(const RawObservation& raw, const NormStats& stats) {
  require(stats.frozen(), "assemble_observation: normalization stats must be frozen");
  Observation out{};
  for (std::size_t j = 0; j < kLidarBeams; ++j) {
    out[obs::kLidar + j] = static_cast<float>(raw[obs::kLidar + j] / kLidarRange);
  }
  out[obs::kWallFlag] = static_cast<float>(raw[obs::kWallFlag]);
  out[obs::kCarFlag] = static_cast<float>(raw[obs::kCarFlag]);
  const auto& idx = zscored_indices();
  for (std::size_t k = 0; k < kZScoredCount; ++k) {
    out[idx[k]] = static_cast<float>((raw[idx[k]] - stats.mean(k)) / stats.stddev(k));
  }
  return out;
}

Observation assemble_observation(const VehicleState& ego, const LidarScan& scan,
                                 const TrackFrame& frame, const TrackGeometry& track,
                                 const NormStats& stats) {
  return normalize(raw_features(ego, scan, frame, track), stats);
}

NormStats update_stats(NormStats stats, const RawObservation& raw) {
  stats.update(raw);
  return stats;
}

}  // namespace overtake
