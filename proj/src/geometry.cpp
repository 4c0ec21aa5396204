#include "fsrir/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fsrir/errors.hpp"
#include "fsrir/rng.hpp"

namespace fsrir {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
}  // namespace

double RoomSpec::diagonal() const {
    return std::sqrt(width * width + depth * depth + height * height);
}

void RoomSpec::validate() const {
    if (!(width > 0.0) || !(depth > 0.0) || !(height > 0.0)) {
        throw ConfigError("room dimensions must be positive");
    }
    for (double a : wall_absorption) {
        if (!(a > 0.0) || !(a <= 1.0)) {
            throw ConfigError("wall absorption must lie in (0, 1]");
        }
    }
    if (!(agent_height > 0.0) || !(agent_height < height)) {
        throw ConfigError("agent height must lie strictly inside (0, height)");
    }
}

void RoomGenCfg::validate() const {
    const ValueRange* ranges[] = {&width, &depth, &height, &absorption,
                                  &agent_height};
    const char* names[] = {"width", "depth", "height", "absorption",
                           "agent_height"};
    for (int i = 0; i < 5; ++i) {
        if (!(ranges[i]->lo <= ranges[i]->hi)) {
            throw ConfigError(std::string("room generation range for ") +
                              names[i] + " has lo > hi");
        }
    }
    if (!(width.lo > 0.0) || !(depth.lo > 0.0) || !(height.lo > 0.0)) {
        throw ConfigError("room dimension ranges must be positive");
    }
    if (!(absorption.lo > 0.0) || !(absorption.hi <= 1.0)) {
        throw ConfigError("absorption range must lie in (0, 1]");
    }
}

double wrap_angle(double a) {
    double w = std::fmod(a + kPi, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    return w - kPi;
}

bool inside_room(const RoomSpec& room, double x, double y) {
    return x > 0.0 && x < room.width && y > 0.0 && y < room.depth;
}

RoomSpec sample_room(const RoomGenCfg& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, {0x726f6f6dULL}));
    RoomSpec room;
    room.width = rng.uniform(cfg.width.lo, cfg.width.hi);
    room.depth = rng.uniform(cfg.depth.lo, cfg.depth.hi);
    room.height = rng.uniform(cfg.height.lo, cfg.height.hi);
    for (double& a : room.wall_absorption) {
        a = rng.uniform(cfg.absorption.lo, cfg.absorption.hi);
    }
    room.agent_height = rng.uniform(cfg.agent_height.lo, cfg.agent_height.hi);
    room.rng_seed = seed;
    room.validate();
    return room;
}

std::vector<Pose> sample_poses(const RoomSpec& room, int n,
                               double min_wall_clearance, uint64_t seed) {
    room.validate();
    if (n < 1) throw ConfigError("sample_poses needs n >= 1");
    const double c = min_wall_clearance;
    if (!(room.width - 2.0 * c > 0.0) || !(room.depth - 2.0 * c > 0.0)) {
        throw InfeasibleError("wall clearance leaves no interior to sample");
    }
    Rng rng(derive_seed(seed, {0x706f7365ULL}));
    std::vector<Pose> poses;
    poses.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Pose p;
        p.x = rng.uniform(c, room.width - c);
        p.y = rng.uniform(c, room.depth - c);
        p.theta = rng.uniform(0.0, kTwoPi);
        poses.push_back(p);
    }
    return poses;
}

DepthScan depth_scan(const RoomSpec& room, const Pose& pose, int n_rays,
                     double fov) {
    if (n_rays < 2) throw ConfigError("depth_scan needs at least 2 rays");
    if (!(fov > 0.0) || !(fov <= kTwoPi)) {
        throw ConfigError("depth_scan fov must lie in (0, 2*pi]");
    }
    if (!inside_room(room, pose.x, pose.y)) {
        throw ConfigError("depth_scan pose lies outside the room footprint");
    }
    DepthScan scan;
    scan.fov = fov;
    scan.ranges.resize(static_cast<size_t>(n_rays));
    for (int i = 0; i < n_rays; ++i) {
        const double angle =
            pose.theta - fov / 2.0 + fov * static_cast<double>(i) /
                                         static_cast<double>(n_rays - 1);
        const double dx = std::cos(angle);
        const double dy = std::sin(angle);
        double best = std::numeric_limits<double>::infinity();
        // Walls at x=0, x=width, y=0, y=depth.
        if (dx != 0.0) {
            for (double wall : {0.0, room.width}) {
                const double t = (wall - pose.x) / dx;
                if (t > 0.0) {
                    const double hy = pose.y + t * dy;
                    if (hy >= 0.0 && hy <= room.depth) best = std::min(best, t);
                }
            }
        }
        if (dy != 0.0) {
            for (double wall : {0.0, room.depth}) {
                const double t = (wall - pose.y) / dy;
                if (t > 0.0) {
                    const double hx = pose.x + t * dx;
                    if (hx >= 0.0 && hx <= room.width) best = std::min(best, t);
                }
            }
        }
        scan.ranges[static_cast<size_t>(i)] = best;
    }
    return scan;
}

PoseOffset normalize_pose(const Pose& pose, const Pose& anchor) {
    const double tx = pose.x - anchor.x;
    const double ty = pose.y - anchor.y;
    const double c = std::cos(anchor.theta);
    const double s = std::sin(anchor.theta);
    PoseOffset off;
    off.dx = c * tx + s * ty;
    off.dy = -s * tx + c * ty;
    off.dtheta = wrap_angle(pose.theta - anchor.theta);
    return off;
}

Pose denormalize_pose(const PoseOffset& offset, const Pose& anchor) {
    const double c = std::cos(anchor.theta);
    const double s = std::sin(anchor.theta);
    Pose p;
    p.x = anchor.x + c * offset.dx - s * offset.dy;
    p.y = anchor.y + s * offset.dx + c * offset.dy;
    p.theta = wrap_angle(anchor.theta + offset.dtheta);
    if (p.theta < 0.0) p.theta += kTwoPi;  // report in [0, 2*pi)
    return p;
}

}  // namespace fsrir
