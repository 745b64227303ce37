#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "overtake/geometry.hpp"
#include "overtake/track.hpp"
#include "overtake/vehicle.hpp"

namespace overtake {

inline constexpr std::size_t kLidarBeams = 72;
inline constexpr double kLidarRange = 20.0;
inline constexpr double kLidarHalfFovDeg = 108.0;
inline constexpr std::size_t kObservationSize = 96;
inline constexpr std::size_t kZScoredCount = 22;

// Observation layout offsets.
namespace obs {
inline constexpr std::size_t kVelocity = 0;       // 3
inline constexpr std::size_t kAcceleration = 3;   // 3
inline constexpr std::size_t kHeadingError = 6;   // 1
inline constexpr std::size_t kLidar = 7;          // 72
inline constexpr std::size_t kPrevSteering = 79;  // 1
inline constexpr std::size_t kWallFlag = 80;      // 1
inline constexpr std::size_t kCarFlag = 81;       // 1
inline constexpr std::size_t kCurvature = 82;     // 14
}  // namespace obs

// Positions in the 96-vector that are z-scored, in NormStats order.
const std::array<std::size_t, kZScoredCount>& zscored_indices();

// Hash of the observation layout and normalization scheme. Stored in stats
// and checkpoint files so mismatched artifacts are rejected.
std::uint64_t observation_layout_hash();

struct LidarScan {
  std::array<double, kLidarBeams> ranges{};
};

using RawObservation = std::array<double, kObservationSize>;
using Observation = std::array<float, kObservationSize>;

// Beam angle relative to the heading, radians; beam 0 points right (-108 deg).
double beam_angle(std::size_t beam);

// Nearest hit distance along a ray against segments and rectangles, capped at
// max_range. Exposed for tests.
double raycast(Vec2 origin, Vec2 direction, std::span<const Segment> walls,
               std::span<const OrientedRect> boxes, double max_range = kLidarRange);

// Lidar sweep from an arbitrary pose against explicit geometry.
LidarScan cast_lidar(Vec2 origin, double heading, std::span<const Segment> walls,
                     std::span<const OrientedRect> boxes);

// Lidar sweep for the ego car against the track walls and the other cars.
LidarScan cast_lidar(const VehicleState& ego, const TrackGeometry& track,
                     std::span<const VehicleState> others, const CarParams& params);

// Heading minus the centerline tangent, wrapped to (-pi, pi].
double heading_error(const VehicleState& ego, const TrackFrame& frame);

// Streaming mean / variance (Welford) over the z-scored block.
class NormStats {
 public:
  NormStats();

  void update(const RawObservation& raw);
  // Rounds mean and std to float precision and locks the statistics.
  void freeze();
  bool frozen() const { return frozen_; }
  std::uint64_t count() const { return count_; }
  double mean(std::size_t k) const { return mean_[k]; }
  // Population standard deviation, floored at 1e-6.
  double stddev(std::size_t k) const;

  // Frozen statistics from explicit values (used by loading and tests).
  static NormStats from_moments(std::span<const double> mean, std::span<const double> stddev,
                                std::uint64_t count);

  void save(const std::filesystem::path& path) const;
  static NormStats load(const std::filesystem::path& path);

  // Compares what normalization reads: means, deviations, count, frozen.
  bool operator==(const NormStats& other) const;

 private:
  std::array<double, kZScoredCount> mean_{};
  std::array<double, kZScoredCount> m2_{};
  std::array<double, kZScoredCount> frozen_std_{};
  std::uint64_t count_ = 0;
  bool frozen_ = false;
};

inline constexpr double kStdFloor = 1e-6;

// Unnormalized features in observation order.
RawObservation raw_features(const VehicleState& ego, const LidarScan& scan,
                            const TrackFrame& frame, const TrackGeometry& track);

// Z-scores the kinematic block with frozen stats, min-max scales the lidar by
// range / 20 and passes the flags through.
Observation normalize(const RawObservation& raw, const NormStats& stats);

Observation assemble_observation(const VehicleState& ego, const LidarScan& scan,
                                 const TrackFrame& frame, const TrackGeometry& track,
                                 const NormStats& stats);

// Returns a copy updated with one more sample. Throws if stats are frozen.
NormStats update_stats(NormStats stats, const RawObservation& raw);

}  // namespace overtake
