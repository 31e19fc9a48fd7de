#include <chrono>
#include <filesystem>
#include <random>

#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include "citypano/city/citygml.hpp"
#include "citypano/service/server.hpp"

using namespace citypano;

namespace {

std::string fixture(const std::string& name) { return std::string(CITYPANO_FIXTURES) + "/" + name; }

/// Street along y = -12 south of building B, frame 0 at x = 15 facing +x.
GlobalTrajectory street_a() {
    GlobalTrajectory t;
    t.street_id = "A";
    for (int i = 0; i <= 30; ++i) t.frames.push_back({{15.0 + i, -12.0, 3.0}, Quaternion::identity()});
    return t;
}

/// Street along x = 30, heading north.
GlobalTrajectory street_b() {
    GlobalTrajectory t;
    t.street_id = "B";
    for (int i = 0; i <= 40; ++i) t.frames.push_back({{30.0, -20.0 + i, 3.0}, Quaternion::from_yaw(M_PI / 2)});
    return t;
}

std::shared_ptr<const WalkWorld> world() {
    CityGmlOptions opt;
    opt.origin = GeodeticPoint{35.7, 139.77, 0.0};
    static const auto w = WalkWorld::make(load_citygml(fixture("attributes_flood.gml"), opt), {street_a(), street_b()});
    return w;
}

std::string code(const json& j) { return j.at("type") == "error" ? j.at("code").get<std::string>() : ""; }

/// Pixel looking due north (+y) just above the horizon.
constexpr int kNorthU = 384, kHorizonV = 127;

} // namespace

TEST(Session, CreateAndHello) {
    WalkService svc(world());
    const std::string a = svc.create_session();
    const std::string b = svc.create_session();
    EXPECT_NE(a, b);
    EXPECT_EQ(svc.session_count(), 2u);
    const json h = svc.hello(a);
    EXPECT_EQ(h.at("proto"), "walk/1");
    EXPECT_EQ(h.at("streets").size(), 2u);
    EXPECT_EQ(h.at("scenarios"), json::array({"L1", "L2"}));
    EXPECT_EQ(h.at("view").at("frame").at("index"), 0);
    EXPECT_EQ(h.at("view").at("frame").at("url"), "/pano/A/0.jpg");
    const json& av = h.at("view").at("avatar");
    EXPECT_DOUBLE_EQ(av[0].get<double>(), 20.0);
    EXPECT_DOUBLE_EQ(av[2].get<double>(), 1.0);
    svc.close_session(a);
    EXPECT_EQ(svc.session_count(), 1u);
    EXPECT_EQ(code(svc.handle(a, R"({"type":"move","dx":0,"dy":0})")), "SessionUnknown");
}

TEST(Session, NoTrajectoriesMeansSceneNotLoaded) {
    WalkService svc(WalkWorld::make(load_citygml(fixture("single_building.gml")), {}));
    try {
        svc.create_session();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SceneNotLoaded);
    }
}

TEST(Session, ReplayIsDeterministic) {
    auto run = [] {
        WalkService svc(world());
        const std::string id = svc.create_session();
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> u(-0.3, 0.5);
        std::string log;
        for (int k = 0; k < 200; ++k) log += svc.move(id, u(rng), u(rng) * 0.2).dump() + "\n";
        return log;
    };
    EXPECT_EQ(run(), run());
}

TEST(Session, AlphaCrossingStepsOnce) {
    WalkService svc(world());
    const std::string id = svc.create_session();
    // Spawned exactly 5 m ahead of frame 0: not yet past the threshold.
    json v = svc.move(id, 0.0, 0.0);
    EXPECT_EQ(v.at("frame").at("index"), 0);
    v = svc.move(id, 0.05, 0.0);
    EXPECT_EQ(v.at("frame").at("index"), 1);
    for (int k = 0; k < 18; ++k) EXPECT_EQ(svc.move(id, 0.05, 0.0).at("frame").at("index"), 1);
}

TEST(Session, SpeedCapClamps) {
    WalkService svc(world());
    const std::string id = svc.create_session();
    const json v = svc.move(id, 3.0, 4.0);
    EXPECT_NEAR(v.at("avatar")[0].get<double>(), 20.0 + 0.3, 1e-12);
    EXPECT_NEAR(v.at("avatar")[1].get<double>(), -12.0 + 0.4, 1e-12);
    EXPECT_EQ(code(svc.handle(id, R"({"type":"move","dx":1e400,"dy":0})")), "InvalidFormat");
}

TEST(SessionProperty, UnitQuaternionAndSingleSteps) {
    WalkService svc(world());
    const std::string id = svc.create_session();
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    long last = 0;
    std::string street = "A";
    for (int k = 0; k < 1000; ++k) {
        const json v = svc.move(id, u(rng) + 0.1, u(rng));
        const auto& q = v.at("q_view");
        double n2 = 0.0;
        for (const auto& c : q) n2 += c.get<double>() * c.get<double>();
        EXPECT_NEAR(n2, 1.0, 1e-9);
        const long i = v.at("frame").at("index").get<long>();
        if (v.at("frame").at("street") == street) {
            EXPECT_LE(std::abs(i - last), 1);
        }
        street = v.at("frame").at("street").get<std::string>();
        last = i;
    }
}

TEST(Session, ScenarioSelection) {
    WalkService svc(world());
    const std::string id = svc.create_session();
    EXPECT_EQ(svc.handle(id, R"({"type":"scenario","id":"L1"})").at("id"), "L1");
    json v = svc.move(id, 0, 0);
    EXPECT_EQ(v.at("overlays").at("water"), "/overlay/water-0-0-0.pgm");
    // Camera 2 m above terrain at 1 m, L1 water at 3.2 m.
    EXPECT_TRUE(v.at("flags").at("camera_under_water").get<bool>());
    svc.handle(id, R"({"type":"scenario","id":"L2"})");
    EXPECT_EQ(svc.move(id, 0, 0).at("overlays").at("water"), "/overlay/water-0-0-1.pgm");
    EXPECT_TRUE(svc.handle(id, R"({"type":"scenario","id":null})").at("id").is_null());
    EXPECT_FALSE(svc.move(id, 0, 0).at("overlays").contains("water"));
    EXPECT_EQ(code(svc.handle(id, R"({"type":"scenario","id":"L7"})")), "UnknownScenario");
}

TEST(Session, MidnightFlagsSunBelowHorizon) {
    WalkService svc(world());
    const std::string id = svc.create_session();
    const json ack = svc.handle(id, R"({"type":"time","iso":"2024-06-21T00:00:00+09:00"})");
    EXPECT_TRUE(ack.at("sun_below_horizon").get<bool>());
    const json v = svc.move(id, 0, 0);
    EXPECT_TRUE(v.at("flags").at("sun_below_horizon").get<bool>());
    EXPECT_FALSE(v.at("overlays").contains("shadow"));
    svc.handle(id, R"({"type":"time","iso":"2024-06-21T12:00:00+09:00"})");
    const json day = svc.move(id, 0, 0);
    EXPECT_FALSE(day.at("flags").at("sun_below_horizon").get<bool>());
    EXPECT_TRUE(day.at("overlays").contains("shadow"));
    svc.handle(id, R"({"type":"time","azimuth_deg":270,"elevation_deg":45})");
    EXPECT_EQ(svc.move(id, 0, 0).at("overlays").at("shadow"), "/overlay/shadow-0-0-a270000e45000.pgm");
    EXPECT_EQ(code(svc.handle(id, R"({"type":"time","iso":"noon"})")), "InvalidArgument");
}

TEST(Session, ClickBuildingInfo) {
    WalkService svc(world());
    const std::string id = svc.create_session();
    EXPECT_EQ(code(svc.handle(id, R"({"type":"click","u":10,"v":0})")), "NoBuildingAtPixel");
    EXPECT_EQ(code(svc.handle(id, R"({"type":"click","u":-1,"v":0})")), "InvalidArgument");
    json info = svc.building_info(id, kNorthU, kHorizonV);
    EXPECT_EQ(info.at("building").at("id"), "B");
    EXPECT_DOUBLE_EQ(info.at("building").at("height_m").get<double>(), 10.0);
    EXPECT_EQ(info.at("building").at("attributes").at("name"), "Fixture Hall");
    EXPECT_NEAR(info.at("distance_m").get<double>(), 7.0, 0.1);
    EXPECT_TRUE(info.at("flood_depth_m").is_null());
    svc.handle(id, R"({"type":"scenario","id":"L1"})");
    info = svc.building_info(id, kNorthU, kHorizonV);
    EXPECT_DOUBLE_EQ(info.at("flood_depth_m").get<double>(), 2.2);
    svc.handle(id, R"({"type":"scenario","id":"L2"})");
    EXPECT_DOUBLE_EQ(svc.building_info(id, kNorthU, kHorizonV).at("flood_depth_m").get<double>(), 4.5);
}

TEST(Session, MalformedMessages) {
    WalkService svc(world());
    const std::string id = svc.create_session();
    EXPECT_EQ(code(svc.handle(id, "{not json")), "InvalidFormat");
    EXPECT_EQ(code(svc.handle(id, R"({"type":"dance"})")), "InvalidFormat");
    EXPECT_EQ(code(svc.handle(id, R"({"type":"move","dx":"far"})")), "InvalidFormat");
}

TEST(Session, SessionsAreIsolated) {
    WalkService svc(world());
    const std::string a = svc.create_session(), b = svc.create_session();
    svc.handle(a, R"({"type":"scenario","id":"L1"})");
    for (int k = 0; k < 40; ++k) svc.move(a, 0.5, 0.0);
    const json vb = svc.move(b, 0.0, 0.0);
    EXPECT_EQ(vb.at("frame").at("index"), 0);
    EXPECT_FALSE(vb.at("overlays").contains("water"));
    EXPECT_EQ(vb.at("tick"), 1);
}

TEST(Session, HandoverBetweenStreets) {
    WalkService svc(world());
    const std::string id = svc.create_session();
    // Walk east along A to x = 30, then north onto street B.
    for (int k = 0; k < 20; ++k) svc.move(id, 0.5, 0.0);
    json v;
    bool switched = false;
    for (int k = 0; k < 60 && !switched; ++k) {
        v = svc.move(id, 0.0, 0.5);
        switched = v.at("flags").at("street_switched").get<bool>();
    }
    EXPECT_TRUE(switched);
    EXPECT_EQ(v.at("frame").at("street"), "B");
}

TEST(Assets, Routes) {
    WalkService svc(world());
    HttpReply r = serve_asset(svc, "/scene.json");
    EXPECT_EQ(r.status, http::status::ok);
    EXPECT_EQ(json::parse(r.body).at("format"), "cityscene/1");
    r = serve_asset(svc, "/pano/A/3.pgm");
    ASSERT_EQ(r.status, http::status::ok);
    const GrayImage img = decode_pgm(r.body);
    EXPECT_EQ(img.width, 512);
    EXPECT_EQ(img.height, 256);
    EXPECT_EQ(serve_asset(svc, "/pano/A/99.pgm").status, http::status::not_found);
    EXPECT_EQ(serve_asset(svc, "/pano/A/3.jpg").status, http::status::not_found);
    EXPECT_EQ(serve_asset(svc, "/pano/Q/3.pgm").status, http::status::not_found);
    EXPECT_EQ(serve_asset(svc, "/nothing").status, http::status::not_found);
    EXPECT_EQ(serve_asset(svc, "/pano/../secret").status, http::status::bad_request);
    EXPECT_EQ(serve_asset(svc, "/overlay/water-0-0-9.pgm").status, http::status::bad_request);
    EXPECT_EQ(serve_asset(svc, "/overlay/junk.pgm").status, http::status::bad_request);
    r = serve_asset(svc, "/overlay/water-0-0-0.pgm?v=1");
    ASSERT_EQ(r.status, http::status::ok);
    EXPECT_EQ(decode_pgm(r.body).width, 512);
}

TEST(Assets, FilesFromAssetsDir) {
    const auto dir = std::filesystem::temp_directory_path() / "citypano_assets_test";
    std::filesystem::create_directories(dir / "A");
    write_text_file((dir / "A" / "0.jpg").string(), "JPEGDATA");
    auto w = std::make_shared<WalkWorld>(*world());
    w->assets_dir = dir.string();
    WalkService svc(w);
    const HttpReply r = serve_asset(svc, "/pano/A/0.jpg");
    EXPECT_EQ(r.status, http::status::ok);
    EXPECT_EQ(r.content_type, "image/jpeg");
    EXPECT_EQ(r.body, "JPEGDATA");
    std::filesystem::remove_all(dir);
}

TEST(OverlayCache, SecondRequestIsCached) {
    WalkService svc(world());
    const std::string key = OverlayCache::shadow_key(0, 5, LightSetting{std::nullopt, 250.0, 30.0});
    EXPECT_FALSE(svc.overlays().cached(key));
    const auto t0 = std::chrono::steady_clock::now();
    const auto first = svc.overlays().get(key);
    const auto t1 = std::chrono::steady_clock::now();
    const auto second = svc.overlays().get(key);
    const auto t2 = std::chrono::steady_clock::now();
    EXPECT_TRUE(svc.overlays().cached(key));
    EXPECT_EQ(first.get(), second.get());
    EXPECT_LT(t2 - t1, t1 - t0);
    EXPECT_GT(std::count(first->pixels.begin(), first->pixels.end(), kShadowValue), 0);
}

TEST(LightSetting, TokenRoundTrip) {
    LightSetting l;
    l.time = parse_iso8601("2024-06-21T03:04:05Z");
    EXPECT_EQ(LightSetting::from_token(l.token()).time, l.time);
    const LightSetting m{std::nullopt, 123.456, -7.5};
    const LightSetting back = LightSetting::from_token(m.token());
    EXPECT_DOUBLE_EQ(back.azimuth_deg, 123.456);
    EXPECT_DOUBLE_EQ(back.elevation_deg, -7.5);
    EXPECT_THROW(LightSetting::from_token("zz"), Error);
}

TEST(AlignedTrajectories, LoadsParamsOrFallsBack) {
    const CityScene scene = load_citygml(fixture("attributes_flood.gml"));
    const auto dir = std::filesystem::temp_directory_path() / "citypano_traj_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    LocalTrajectory t;
    t.street_id = "L";
    for (int i = 0; i < 5; ++i) t.frames.push_back({{0.0, 2.0 * i, 0.0}, {}});
    t.annotated_start = geodetic_from_enu(scene.origin, {-30, -20, 0});
    t.annotated_end = geodetic_from_enu(scene.origin, {-30, 20, 0});
    write_text_file((dir / "a.traj").string(), format_trajectory(t));
    t.street_id = "M";
    write_text_file((dir / "b.traj").string(), format_trajectory(t));
    const AlignParams p{{40, -20, 3}, {40, 20, 3}, 0.0};
    write_text_file((dir / "b.params.json").string(), params_to_json(p).dump());
    const auto out = load_aligned_trajectories(dir.string(), scene);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].street_id, "L");
    EXPECT_NEAR(out[0].frames.front().position.x, -30.0, 1e-6);
    EXPECT_NEAR(out[0].frames.front().position.z, 1.0 + kDefaultCameraHeightM, 1e-9);
    EXPECT_NEAR(out[1].frames.back().position.x, 40.0, 1e-9);
    EXPECT_NEAR(out[1].frames.back().position.y, 20.0, 1e-9);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(load_aligned_trajectories(dir.string(), scene), Error);
}

TEST(WalkServer, WebSocketAndHttpRoundTrip) {
    auto svc = std::make_shared<WalkService>(world());
    WalkServer server(svc, "127.0.0.1", 0);
    server.start();
    const unsigned short port = server.port();
    ASSERT_NE(port, 0);

    net::io_context ioc;
    tcp::resolver resolver(ioc);
    const auto endpoints = resolver.resolve("127.0.0.1", std::to_string(port));
    {
        websocket::stream<tcp::socket> ws(ioc);
        net::connect(ws.next_layer(), endpoints);
        ws.handshake("127.0.0.1", "/walk");
        beast::flat_buffer buf;
        ws.read(buf);
        const json hello = json::parse(beast::buffers_to_string(buf.data()));
        EXPECT_EQ(hello.at("type"), "hello");
        EXPECT_EQ(hello.at("proto"), "walk/1");
        ws.write(net::buffer(std::string(R"({"type":"move","dx":0.05,"dy":0})")));
        buf.clear();
        ws.read(buf);
        const json view = json::parse(beast::buffers_to_string(buf.data()));
        EXPECT_EQ(view.at("type"), "view");
        EXPECT_EQ(view.at("frame").at("index"), 1);
        EXPECT_EQ(view.at("tick"), 1);
        ws.write(net::buffer(std::string(R"({"type":"scenario","id":"nope"})")));
        buf.clear();
        ws.read(buf);
        EXPECT_EQ(json::parse(beast::buffers_to_string(buf.data())).at("code"), "UnknownScenario");
        ws.close(websocket::close_code::normal);
    }
    {
        tcp::socket sock(ioc);
        net::connect(sock, endpoints);
        http::request<http::empty_body> req{http::verb::get, "/scene.json", 11};
        req.set(http::field::host, "127.0.0.1");
        http::write(sock, req);
        beast::flat_buffer buf;
        http::response<http::string_body> res;
        http::read(sock, buf, res);
        EXPECT_EQ(res.result(), http::status::ok);
        EXPECT_EQ(res[http::field::content_type], "application/json");
        EXPECT_EQ(json::parse(res.body()).at("format"), "cityscene/1");
    }
    server.stop();
}
