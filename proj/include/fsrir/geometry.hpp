#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace fsrir {

// Axis-aligned shoebox room. Surfaces are indexed
// 0: x=0 wall, 1: x=width wall, 2: y=0 wall, 3: y=depth wall,
// 4: floor, 5: ceiling. Absorption is the energy absorption coefficient
// of each surface, in (0, 1].
struct RoomSpec {
    double width = 6.0;
    double depth = 4.0;
    double height = 3.0;
    std::array<double, 6> wall_absorption{0.3, 0.3, 0.3, 0.3, 0.3, 0.3};
    double agent_height = 1.5;
    uint64_t rng_seed = 0;

    double diagonal() const;
    void validate() const;  // throws ConfigError
};

// Planar position plus heading, theta in [0, 2*pi).
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
};

// Arbitrary source/receiver pair to predict an RIR for. The source is an
// omnidirectional point; only the receiver has a heading.
struct Query {
    std::array<double, 2> source{0.0, 0.0};
    Pose receiver;
};

// Planar range scan: n rays uniformly spanning `fov` radians centered on
// the pose heading.
struct DepthScan {
    std::vector<double> ranges;
    double fov = 0.0;
};

// Pose expressed relative to an anchor pose, translation in the anchor's
// heading frame, dtheta wrapped to [-pi, pi).
struct PoseOffset {
    double dx = 0.0;
    double dy = 0.0;
    double dtheta = 0.0;
};

struct ValueRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct RoomGenCfg {
    ValueRange width{4.0, 8.0};
    ValueRange depth{3.0, 6.0};
    ValueRange height{2.5, 3.5};
    ValueRange absorption{0.2, 0.6};
    ValueRange agent_height{1.5, 1.5};

    void validate() const;  // throws ConfigError
};

// Wraps an angle to [-pi, pi).
double wrap_angle(double a);

bool inside_room(const RoomSpec& room, double x, double y);

// Draws each RoomSpec field uniformly from its range. Deterministic given
// the seed; the six absorption coefficients are sampled independently.
RoomSpec sample_room(const RoomGenCfg& cfg, uint64_t seed);

// Uniform poses over the interior shrunk by min_wall_clearance on every
// side, headings uniform over [0, 2*pi).
std::vector<Pose> sample_poses(const RoomSpec& room, int n,
                               double min_wall_clearance, uint64_t seed);

// Casts n_rays over the field of view and intersects each with the four
// walls; every range is the nearest positive hit distance.
DepthScan depth_scan(const RoomSpec& room, const Pose& pose, int n_rays = 32,
                     double fov = 1.5707963267948966);

PoseOffset normalize_pose(const Pose& pose, const Pose& anchor);

// Inverse of normalize_pose: maps an offset in the anchor frame back to a
// world pose.
Pose denormalize_pose(const PoseOffset& offset, const Pose& anchor);

}  // namespace fsrir
