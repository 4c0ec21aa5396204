#include <doctest.h>

#include <cmath>

#include "fsrir/errors.hpp"
#include "fsrir/geometry.hpp"
#include "fsrir/rng.hpp"

using namespace fsrir;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("sample_room with collapsed ranges returns exactly those values") {
    RoomGenCfg cfg;
    cfg.width = {6.0, 6.0};
    cfg.depth = {4.0, 4.0};
    cfg.height = {3.0, 3.0};
    cfg.absorption = {0.3, 0.3};
    const RoomSpec room = sample_room(cfg, 7);
    CHECK(room.width == doctest::Approx(6.0));
    CHECK(room.depth == doctest::Approx(4.0));
    CHECK(room.height == doctest::Approx(3.0));
    for (double a : room.wall_absorption) CHECK(a == doctest::Approx(0.3));
}

TEST_CASE("sample_room is deterministic given the seed") {
    RoomGenCfg cfg;
    const RoomSpec a = sample_room(cfg, 1234);
    const RoomSpec b = sample_room(cfg, 1234);
    CHECK(a.width == b.width);
    CHECK(a.depth == b.depth);
    CHECK(a.height == b.height);
    CHECK(a.wall_absorption == b.wall_absorption);
}

TEST_CASE("sample_room absorption mean matches the range midpoint") {
    RoomGenCfg cfg;
    cfg.absorption = {0.1, 0.9};
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < 1000; ++i) {
        const RoomSpec room = sample_room(cfg, 9000 + static_cast<uint64_t>(i));
        for (double a : room.wall_absorption) {
            sum += a;
            ++count;
        }
    }
    CHECK(std::abs(sum / count - 0.5) < 0.05);
}

TEST_CASE("sample_room rejects inverted ranges") {
    RoomGenCfg cfg;
    cfg.width = {8.0, 4.0};
    CHECK_THROWS_AS(sample_room(cfg, 1), ConfigError);
}

TEST_CASE("sample_poses forces the room center under extreme clearance") {
    RoomSpec room;
    room.width = 6.0;
    room.depth = 6.0;
    const double eps = 1e-6;
    const auto poses = sample_poses(room, 1, (room.width - eps) / 2.0, 11);
    CHECK(poses.size() == 1);
    CHECK(poses[0].x == doctest::Approx(3.0).epsilon(1e-5));
    CHECK(poses[0].y == doctest::Approx(3.0).epsilon(1e-5));
}

TEST_CASE("sample_poses respects clearance over many seeds") {
    RoomSpec room;
    room.width = 5.0;
    room.depth = 4.0;
    const double clearance = 0.3;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const auto poses = sample_poses(room, 100, clearance, seed);
        for (const Pose& p : poses) {
            CHECK(p.x >= clearance);
            CHECK(p.x <= room.width - clearance);
            CHECK(p.y >= clearance);
            CHECK(p.y <= room.depth - clearance);
            CHECK(p.theta >= 0.0);
            CHECK(p.theta < 2.0 * kPi);
        }
    }
}

TEST_CASE("sample_poses reports infeasible clearance") {
    RoomSpec room;
    room.width = 2.0;
    room.depth = 2.0;
    CHECK_THROWS_AS(sample_poses(room, 1, 1.5, 3), InfeasibleError);
}

TEST_CASE("depth scan center ray hits the facing wall at the right distance") {
    RoomSpec room;
    room.width = 6.0;
    room.depth = 4.0;
    Pose pose{2.0, 2.0, 0.0};  // facing +x, 4 m from the x=width wall
    const auto scan = depth_scan(room, pose, 33, kPi / 2.0);
    CHECK(scan.ranges[16] == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("depth scan is mirror-symmetric at the center of a square room") {
    // Heading along the diagonal, a symmetry axis of the square.
    RoomSpec room;
    room.width = 6.0;
    room.depth = 6.0;
    Pose pose{3.0, 3.0, kPi / 4.0};
    const auto scan = depth_scan(room, pose, 33, kPi / 2.0);
    for (int i = 0; i < 16; ++i) {
        CHECK(scan.ranges[static_cast<size_t>(i)] ==
              doctest::Approx(scan.ranges[static_cast<size_t>(32 - i)]).epsilon(1e-9));
    }
}

TEST_CASE("depth scan ranges never exceed the room diagonal") {
    RoomSpec room;
    room.width = 7.0;
    room.depth = 5.0;
    Rng rng(99);
    for (int i = 0; i < 200; ++i) {
        Pose pose{rng.uniform(0.1, 6.9), rng.uniform(0.1, 4.9),
                  rng.uniform(0.0, 2.0 * kPi)};
        const auto scan = depth_scan(room, pose, 32, kPi / 2.0);
        for (double r : scan.ranges) {
            CHECK(r > 0.0);
            CHECK(r <= room.diagonal());
        }
    }
}

TEST_CASE("depth scan depends only on the pose relative to the walls") {
    // Rooms are wall-anchored, so a joint rigid translation of room and
    // pose maps to identical coordinates; the observable claim is that
    // equal wall-relative geometry gives bitwise-equal scans.
    RoomSpec a;
    a.width = 6.0;
    a.depth = 4.0;
    RoomSpec b = a;
    Pose pose{1.5, 2.25, 0.75};
    CHECK(depth_scan(a, pose, 32, kPi / 2.0).ranges ==
          depth_scan(b, pose, 32, kPi / 2.0).ranges);
}

TEST_CASE("normalize_pose identities and hand-rotated case") {
    Pose anchor{1.0, 2.0, kPi / 2.0};
    const auto self = normalize_pose(anchor, anchor);
    CHECK(self.dx == doctest::Approx(0.0));
    CHECK(self.dy == doctest::Approx(0.0));
    CHECK(self.dtheta == doctest::Approx(0.0));

    Pose axis_anchor{0.0, 0.0, 0.0};
    Pose ahead{1.0, 0.0, 0.0};
    const auto off = normalize_pose(ahead, axis_anchor);
    CHECK(off.dx == doctest::Approx(1.0));
    CHECK(off.dy == doctest::Approx(0.0));
    CHECK(off.dtheta == doctest::Approx(0.0));

    // Anchor heading pi/2, pose at (0, +1) with heading 0 -> (1, 0, -pi/2).
    Pose rot_anchor{0.0, 0.0, kPi / 2.0};
    Pose above{0.0, 1.0, 0.0};
    const auto r = normalize_pose(above, rot_anchor);
    CHECK(r.dx == doctest::Approx(1.0));
    CHECK(r.dy == doctest::Approx(0.0));
    CHECK(r.dtheta == doctest::Approx(-kPi / 2.0));
}

TEST_CASE("normalize_pose round-trips through its inverse") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        Pose anchor{rng.uniform(-5, 5), rng.uniform(-5, 5),
                    rng.uniform(0.0, 2.0 * kPi)};
        Pose pose{rng.uniform(-5, 5), rng.uniform(-5, 5),
                  rng.uniform(0.0, 2.0 * kPi)};
        const Pose back = denormalize_pose(normalize_pose(pose, anchor), anchor);
        CHECK(std::abs(back.x - pose.x) < 1e-9);
        CHECK(std::abs(back.y - pose.y) < 1e-9);
        CHECK(std::abs(wrap_angle(back.theta - pose.theta)) < 1e-9);
    }
}
