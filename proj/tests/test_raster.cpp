#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "citypano/city/mesh.hpp"
#include "citypano/raster/mask_io.hpp"
#include "citypano/raster/metrics.hpp"
#include "citypano/raster/render.hpp"

using namespace citypano;

namespace {

Building box(const std::string& id, Vec3 lo, Vec3 hi) {
    return {id, {{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {lo.x, hi.y}}, lo.z, hi.z - lo.z, {}};
}

struct World {
    CityScene scene;
    TriangleMesh mesh;
    RayIndex index;
};

World make_world(std::vector<Building> buildings, bool terrain, double ground = 0.0, double extent = 200.0) {
    World w;
    w.scene.buildings = std::move(buildings);
    w.scene.terrain = Terrain::flat({-extent, -extent}, {extent, extent}, ground, 4.0);
    w.mesh = scene_to_mesh(w.scene, terrain);
    w.index = terrain ? RayIndex::build(w.mesh, w.scene) : RayIndex::build(w.mesh);
    return w;
}

/// Grid of blocks with streets between them; heights vary per block.
World block_city(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> h(6.0, 30.0), inset(0.0, 4.0);
    std::vector<Building> bs;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            const double x0 = -100 + c * 50 + inset(rng), y0 = -100 + r * 50 + inset(rng);
            bs.push_back(box("b" + std::to_string(r * 4 + c), {x0, y0, 0.0}, {x0 + 30, y0 + 30 - inset(rng), h(rng)}));
        }
    }
    bs.push_back({"L", {{-95, 110}, {-60, 110}, {-60, 120}, {-80, 120}, {-80, 140}, {-95, 140}}, 0.0, 18.0, {}});
    return make_world(std::move(bs), true, 0.0, 160.0);
}

PanoMask shift_columns(const PanoMask& m, int k) {
    PanoMask out(m.width, m.height);
    for (int v = 0; v < m.height; ++v) {
        for (int u = 0; u < m.width; ++u) out.at(((u + k) % m.width + m.width) % m.width, v) = m.at(u, v);
    }
    return out;
}

std::size_t differing(const PanoMask& a, const PanoMask& b) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += a.labels[i] != b.labels[i];
    return n;
}

PanoMask filled(int w, int h, std::uint8_t label) {
    PanoMask m(w, h);
    std::fill(m.labels.begin(), m.labels.end(), label);
    return m;
}

} // namespace

TEST(PixelRay, Conventions) {
    const int W = 512, H = 256;
    const double half_pixel = M_PI / W;
    const Vec3 f = pixel_ray(W / 2, H / 2, W, H);
    EXPECT_LT(std::acos(std::clamp(f.dot({1, 0, 0}), -1.0, 1.0)), std::sqrt(2.0) * half_pixel + 1e-12);
    const Vec3 up = pixel_ray(W / 2, 0, W, H);
    EXPECT_LT(std::acos(std::clamp(up.z, -1.0, 1.0)), 2 * half_pixel);
    const double lon = pixel_longitude(3 * W / 4, W);
    EXPECT_NEAR(lon, M_PI / 2 + half_pixel, 1e-15);
    const Vec3 left = pixel_ray(3 * W / 4, H / 2, W, H);
    EXPECT_LT(std::acos(std::clamp(left.dot({0, 1, 0}), -1.0, 1.0)), std::sqrt(2.0) * half_pixel + 1e-12);
}

TEST(PixelRay, InverseIsIdentityOnPixelCenters) {
    const int W = 256, H = 128;
    for (int v = 0; v < H; ++v) {
        for (int u = 0; u < W; ++u) {
            const auto [uu, vv] = direction_to_pixel(pixel_ray(u, v, W, H), W, H);
            ASSERT_EQ(uu, u);
            ASSERT_EQ(vv, v);
        }
    }
}

TEST(PanoMaskShape, RequiresTwoToOne) {
    EXPECT_THROW(PanoMask(100, 100), Error);
    EXPECT_THROW(PanoMask(0, 0), Error);
    const PanoMask m(64, 32);
    EXPECT_EQ(m.count(NON_BUILDING), m.size());
}

TEST(Render, EmptyMeshIsAllNonBuilding) {
    const TriangleMesh mesh;
    const RayIndex index = RayIndex::build(mesh);
    const PanoMask m = render_building_mask(mesh, index, {{0, 0, 0}, {}}, 128, 64);
    EXPECT_EQ(m.count(NON_BUILDING), m.size());
}

TEST(Render, HalfSpaceWallAnyYaw) {
    const World w = make_world({box("wall", {5, -1e6, -1e6}, {1e6, 1e6, 1e6})}, false);
    const int W = 512, H = 256;
    for (double yaw : {0.0, 0.3, 1.0, 2.5, -2.0}) {
        const CameraPose pose{{0, 0, 0}, Quaternion::from_yaw(yaw)};
        const PanoMask m = render_building_mask(w.mesh, w.index, pose, W, H);
        for (int v = 0; v < H; ++v) {
            for (int u = 0; u < W; ++u) {
                // Analytic oracle: forward rays meet the plane x = 5 inside the finite face.
                const Vec3 d = pose.to_world(pixel_ray(u, v, W, H));
                const Vec3 at = d * (5.0 / d.x);
                const bool expect = d.x > 0.0 && std::abs(at.y) <= 1e6 && std::abs(at.z) <= 1e6;
                ASSERT_EQ(m.at(u, v) == BUILDING, expect) << "yaw " << yaw << " pixel " << u << "," << v;
            }
        }
        EXPECT_NEAR(m.fraction(BUILDING), 0.5, 1.0 / W);
        if (yaw == 0.0) {
            for (int v = 0; v < H; ++v) {
                for (int u = 0; u < W; ++u) ASSERT_EQ(m.at(u, v) == BUILDING, pixel_ray(u, v, W, H).x > 0.0);
            }
        }
    }
}

TEST(Render, SingleBoxSolidAngle) {
    // Box 10x10x10 centred 20 m ahead; the camera sees only its near face.
    const World w = make_world({box("cube", {15, -5, -5}, {25, 5, 5})}, false);
    const CameraPose pose{{0, 0, 0}, {}};
    const double analytic = 4.0 * std::atan(25.0 / (15.0 * std::sqrt(275.0))) / (4.0 * M_PI);
    // Pixel-centre evaluation of the same box on the 1024x512 grid (numpy), frozen.
    const double grid_1024 = 0.031562004588401145;
    const PanoMask m = render_building_mask(w.mesh, w.index, pose, 1024, 512);
    EXPECT_NEAR(solid_angle_fraction(m, BUILDING), grid_1024, 1e-12);
    // Pixel-centre sampling converges on the solid angle as the grid refines.
    const double monte_carlo = 0.0319662; // 1e7 uniform directions, seed 12345
    const PanoMask fine = render_building_mask(w.mesh, w.index, pose, 2048, 1024);
    EXPECT_NEAR(solid_angle_fraction(fine, BUILDING), monte_carlo, 0.01 * monte_carlo);
    EXPECT_NEAR(solid_angle_fraction(fine, BUILDING), analytic, 0.002 * analytic);
}

TEST(Render, CameraInsideBuilding) {
    const World w = make_world({box("a", {-5, -5, 0}, {5, 5, 10})}, true);
    try {
        render_building_mask(w.mesh, w.index, {{0, 0, 2}, {}}, 64, 32);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CameraInsideGeometry);
    }
    const RayIndex bare = RayIndex::build(w.mesh);
    EXPECT_THROW(render_building_mask(w.mesh, bare, {{0, 0, 2}, {}}, 64, 32), Error);
    EXPECT_NO_THROW(render_building_mask(w.mesh, bare, {{0, 0, 12}, {}}, 64, 32));
}

TEST(Render, CameraBelowTerrain) {
    const World w = make_world({}, true, 3.0);
    try {
        render_building_mask(w.mesh, w.index, {{0, 0, 2}, {}}, 64, 32);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CameraInsideGeometry);
    }
    const RayIndex bare = RayIndex::build(w.mesh);
    EXPECT_THROW(render_building_mask(w.mesh, bare, {{0, 0, 2}, {}}, 64, 32), Error);
    EXPECT_NO_THROW(render_building_mask(w.mesh, bare, {{0, 0, 4}, {}}, 64, 32));
    EXPECT_NO_THROW(render_building_mask(w.mesh, w.index, {{500, 0, 2}, {}}, 64, 32));
}

TEST(Render, YawShiftIsColumnShift) {
    const World w = block_city(2);
    const int W = 512, H = 256;
    for (bool column : {true, false}) {
        const RenderOptions opt{1, column};
        const CameraPose base{{-55.0, -32.0, 2.0}, Quaternion::from_yaw(0.0)};
        const PanoMask m0 = render_building_mask(w.mesh, w.index, base, W, H, opt);
        for (int k : {1, 7, 128, 300}) {
            const CameraPose p{base.position, Quaternion::from_yaw(2.0 * M_PI * k / W)};
            const PanoMask mk = render_building_mask(w.mesh, w.index, p, W, H, opt);
            EXPECT_EQ(differing(mk, shift_columns(m0, -k)), 0u) << "k=" << k << " column=" << column;
        }
    }
}

TEST(Render, ColumnPathMatchesRayCasting) {
    const World w = block_city(4);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> street(-60.0, 60.0), yaw(-M_PI, M_PI), z(1.0, 12.0);
    for (int i = 0; i < 20; ++i) {
        Vec3 p{street(rng), -57.0 + 50.0 * (i % 4), z(rng)};
        if (i % 2) std::swap(p.x, p.y);
        const CameraPose pose{p, Quaternion::from_yaw(yaw(rng))};
        const PanoMask a = render_building_mask(w.mesh, w.index, pose, 512, 256, {1, true});
        const PanoMask b = render_building_mask(w.mesh, w.index, pose, 512, 256, {1, false});
        EXPECT_EQ(differing(a, b), 0u) << "pose " << i;
    }
}

TEST(Render, ThreadCountDoesNotChangeResult) {
    const World w = block_city(5);
    const CameraPose pose{{-5, -57, 2}, Quaternion::from_axis_angle({0.2, 1, 0}, 0.3)};
    const PanoMask a = render_building_mask(w.mesh, w.index, pose, 256, 128, {1, false});
    const PanoMask b = render_building_mask(w.mesh, w.index, pose, 256, 128, {4, false});
    EXPECT_EQ(a.labels, b.labels);
}

TEST(Bvh, ClosestHitMatchesBruteForce) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> pos(-50.0, 50.0), size(1.0, 12.0);
    std::vector<Building> bs;
    for (int i = 0; i < 25; ++i) {
        const Vec3 lo{pos(rng), pos(rng), pos(rng) * 0.2};
        bs.push_back(box("r" + std::to_string(i), lo, lo + Vec3{size(rng), size(rng), size(rng)}));
    }
    const World w = make_world(bs, true, -20.0, 80.0);
    std::normal_distribution<double> n(0.0, 1.0);
    int hits = 0;
    for (int i = 0; i < 1000; ++i) {
        const Vec3 o{pos(rng) * 1.2, pos(rng) * 1.2, pos(rng) * 0.5};
        const Vec3 d = Vec3{n(rng), n(rng), n(rng)}.normalized();
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : w.mesh.triangles) {
            const Vec3& a = w.mesh.vertices[t[0]];
            best = std::min(best, intersect_triangle({o, d}, a, w.mesh.vertices[t[1]] - a, w.mesh.vertices[t[2]] - a));
        }
        const Hit h = w.index.bvh().closest({o, d});
        if (std::isinf(best)) {
            EXPECT_FALSE(h.hit());
            continue;
        }
        ++hits;
        ASSERT_TRUE(h.hit());
        EXPECT_NEAR(h.t, best, 1e-6);
        EXPECT_TRUE(w.index.bvh().any({o, d}, best * (1 + 1e-9) + 1e-9));
        EXPECT_FALSE(w.index.bvh().any({o, d}, best * (1 - 1e-6)));
    }
    EXPECT_GT(hits, 300);
}

TEST(Discrepancy, Cases) {
    const int W = 64, H = 32;
    const PanoMask b = filled(W, H, BUILDING), n = filled(W, H, NON_BUILDING);
    EXPECT_EQ(discrepancy_count(b, b), 0);
    EXPECT_EQ(discrepancy_count(b, n), W * H);
    PanoMask ref = n;
    for (int v = 0; v < H / 2; ++v) {
        for (int u = 0; u < W; ++u) ref.at(u, v) = OCCLUDED;
    }
    EXPECT_EQ(discrepancy_count(b, ref), W * H / 2);
    EXPECT_THROW(discrepancy_count(b, PanoMask(32, 16)), Error);
}

TEST(DiscrepancyProperty, SymmetricWithoutOcclusion) {
    std::mt19937_64 rng(31);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 50; ++trial) {
        PanoMask a(64, 32), b(64, 32);
        for (auto& px : a.labels) px = coin(rng) ? BUILDING : NON_BUILDING;
        for (auto& px : b.labels) px = coin(rng) ? BUILDING : NON_BUILDING;
        EXPECT_EQ(discrepancy_count(a, b), discrepancy_count(b, a));
    }
}

TEST(MisalignmentRate, Cases) {
    const std::vector<PanoMask> b(3, filled(64, 32, BUILDING)), n(3, filled(64, 32, NON_BUILDING));
    EXPECT_DOUBLE_EQ(misalignment_rate(b, b), 0.0);
    EXPECT_DOUBLE_EQ(misalignment_rate(b, n), 1.0);
    const std::vector<PanoMask> occ(3, filled(64, 32, OCCLUDED));
    EXPECT_DOUBLE_EQ(misalignment_rate(b, occ), 0.0);
    EXPECT_THROW(misalignment_rate(std::vector<PanoMask>{}, std::vector<PanoMask>{}), Error);
    EXPECT_THROW(misalignment_rate(b, std::vector<PanoMask>(2, filled(64, 32, BUILDING))), Error);
    std::vector<PanoMask> mixed = n;
    mixed[0] = filled(64, 32, BUILDING);
    EXPECT_NEAR(misalignment_rate(b, mixed), 2.0 / 3.0, 1e-15);
}

TEST(SolidAngleFraction, UniformMasks) {
    EXPECT_NEAR(solid_angle_fraction(filled(64, 32, BUILDING), BUILDING), 1.0, 1e-14);
    PanoMask top(64, 32);
    for (int v = 0; v < 16; ++v) {
        for (int u = 0; u < 64; ++u) top.at(u, v) = BUILDING;
    }
    EXPECT_NEAR(solid_angle_fraction(top, BUILDING), 0.5, 1e-14);
}

TEST(MaskIo, PgmAndPngRoundTrip) {
    PanoMask m(64, 32);
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> l(0, 2);
    const std::uint8_t labels[3] = {NON_BUILDING, OCCLUDED, BUILDING};
    for (auto& px : m.labels) px = labels[l(rng)];
    const auto dir = std::filesystem::temp_directory_path() / "citypano_mask_io";
    std::filesystem::create_directories(dir);
    for (const char* name : {"m.pgm", "m.png"}) {
        const std::string path = (dir / name).string();
        write_mask(path, m);
        EXPECT_EQ(read_mask(path).labels, m.labels) << name;
    }
    const GrayImage g{4, 2, {0, 1, 2, 3, 250, 251, 252, 255}};
    EXPECT_EQ(decode_pgm(encode_pgm(g)).pixels, g.pixels);
    EXPECT_EQ(decode_png(encode_png(g)).pixels, g.pixels);
    EXPECT_EQ(decode_pgm("P5\n# comment\n4 2\n255\n" + std::string(8, '\x80')).width, 4);
}

TEST(MaskIo, RejectsBadInput) {
    EXPECT_THROW(decode_pgm("P2\n4 2\n255\n"), Error);
    EXPECT_THROW(decode_pgm("P5\n4 2\n255\nabc"), Error);
    EXPECT_THROW(decode_png("not a png at all"), Error);
    const auto path = (std::filesystem::temp_directory_path() / "citypano_bad_mask.pgm").string();
    write_gray_image(path, {4, 2, {0, 128, 255, 7, 0, 0, 0, 0}});
    try {
        read_mask(path);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidFormat);
    }
    write_gray_image(path, {4, 4, std::vector<std::uint8_t>(16, 0)});
    EXPECT_THROW(read_mask(path), Error);
}
