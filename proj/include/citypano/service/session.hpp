#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "citypano/align/trajectory.hpp"
#include "citypano/align/transform.hpp"
#include "citypano/city/mesh.hpp"
#include "citypano/city/scene.hpp"
#include "citypano/city/scene_json.hpp"
#include "citypano/overlays/overlays.hpp"
#include "citypano/overlays/sun.hpp"
#include "citypano/raster/mask_io.hpp"
#include "citypano/raster/render.hpp"
#include "citypano/view/view_select.hpp"

namespace citypano {

inline constexpr const char* kProtocolVersion = "walk/1";
inline constexpr double kMaxStepM = 0.5;
inline constexpr double kSpawnAheadM = 5.0;

using json = nlohmann::ordered_json;

/// Immutable data shared by every session: scene, mesh, ray index and the
/// aligned street trajectories.
struct WalkWorld {
    CityScene scene;
    TriangleMesh mesh;
    RayIndex index;
    std::vector<GlobalTrajectory> trajectories;
    std::string assets_dir;
    std::string pano_ext = "jpg";
    int overlay_width = 512;
    int overlay_height = 256;
    unsigned threads = 1;

    static std::shared_ptr<const WalkWorld> make(CityScene scene, std::vector<GlobalTrajectory> trajectories) {
        auto w = std::make_shared<WalkWorld>();
        w->scene = std::move(scene);
        w->mesh = scene_to_mesh(w->scene);
        w->index = RayIndex::build(w->mesh, w->scene);
        w->trajectories = std::move(trajectories);
        return w;
    }

    std::optional<std::size_t> street_index(const std::string& id) const {
        for (std::size_t k = 0; k < trajectories.size(); ++k) {
            if (trajectories[k].street_id == id) return k;
        }
        return std::nullopt;
    }

    std::optional<std::size_t> scenario_index(const std::string& id) const {
        const auto ids = scene.scenario_ids();
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (ids[k] == id) return k;
        }
        return std::nullopt;
    }

    /// Feet position on the terrain, with xy clamped into the terrain bounds.
    Vec3 snap_to_terrain(Vec3 p) const {
        const Vec2 lo = scene.terrain.origin;
        const Vec2 hi = scene.terrain.max_corner();
        p.x = std::clamp(p.x, lo.x, hi.x);
        p.y = std::clamp(p.y, lo.y, hi.y);
        p.z = terrain_elevation(scene, xy(p));
        return p;
    }
};

/// Light selection for the shadow layer: an instant or a manual sun pose.
struct LightSetting {
    std::optional<UtcTime> time;
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;

    SunState sun(const GeodeticPoint& where) const {
        return time ? sun_direction(*time, where) : sun_from_angles(azimuth_deg, elevation_deg);
    }

    /// Stable token used inside overlay keys.
    std::string token() const {
        if (time) {
            using namespace std::chrono;
            const auto d = sys_days{year{time->year} / time->month / time->day};
            const long long secs = duration_cast<seconds>(d.time_since_epoch()).count() + time->hour * 3600LL +
                                   time->minute * 60LL + static_cast<long long>(time->second);
            return "t" + std::to_string(secs);
        }
        return "a" + std::to_string(std::llround(azimuth_deg * 1000.0)) + "e" +
               std::to_string(std::llround(elevation_deg * 1000.0));
    }

    static LightSetting from_token(const std::string& tok) {
        LightSetting l;
        if (tok.size() > 1 && tok[0] == 't') {
            using namespace std::chrono;
            const sys_seconds s{seconds{std::stoll(tok.substr(1))}};
            const auto day = floor<days>(s);
            const year_month_day ymd{day};
            const auto rest = s - day;
            UtcTime t;
            t.year = static_cast<int>(ymd.year());
            t.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
            t.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
            t.hour = static_cast<int>(duration_cast<hours>(rest).count());
            t.minute = static_cast<int>(duration_cast<minutes>(rest).count() % 60);
            t.second = static_cast<double>(rest.count() % 60);
            l.time = t;
            return l;
        }
        const auto e = tok.find('e');
        if (tok.size() < 2 || tok[0] != 'a' || e == std::string::npos) {
            throw Error(ErrorCode::InvalidArgument, "bad light token " + tok);
        }
        l.azimuth_deg = std::stoll(tok.substr(1, e - 1)) / 1000.0;
        l.elevation_deg = std::stoll(tok.substr(e + 1)) / 1000.0;
        return l;
    }
};

struct Session {
    std::string id;
    ViewState view;
    AvatarState avatar;
    std::optional<std::string> scenario;
    std::optional<LightSetting> light;
    std::uint64_t tick = 0;
    std::mutex mutex; // serializes input for this session
};

/// Lazily rendered overlay layers keyed by (street, frame, scenario or light).
class OverlayCache {
public:
    explicit OverlayCache(std::shared_ptr<const WalkWorld> world) : world_(std::move(world)) {}

    static std::string water_key(std::size_t street, std::size_t frame, std::size_t scenario) {
        return "water-" + std::to_string(street) + "-" + std::to_string(frame) + "-" + std::to_string(scenario);
    }
    static std::string shadow_key(std::size_t street, std::size_t frame, const LightSetting& light) {
        return "shadow-" + std::to_string(street) + "-" + std::to_string(frame) + "-" + light.token();
    }

    /// PGM-ready layer for `key`; renders on first use.
    std::shared_ptr<const GrayImage> get(const std::string& key) {
        {
            std::shared_lock lock(mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        }
        auto img = std::make_shared<const GrayImage>(render(key));
        std::unique_lock lock(mutex_);
        return cache_.emplace(key, std::move(img)).first->second;
    }

    bool cached(const std::string& key) const {
        std::shared_lock lock(mutex_);
        return cache_.count(key) > 0;
    }

private:
    GrayImage render(const std::string& key) const {
        const WalkWorld& w = *world_;
        std::vector<std::string> parts;
        std::size_t start = 0;
        for (int i = 0; i < 3; ++i) {
            const auto dash = key.find('-', start);
            if (dash == std::string::npos) throw Error(ErrorCode::InvalidArgument, "bad overlay key " + key);
            parts.push_back(key.substr(start, dash - start));
            start = dash + 1;
        }
        parts.push_back(key.substr(start));
        std::size_t street = 0, frame = 0;
        try {
            street = std::stoul(parts[1]);
            frame = std::stoul(parts[2]);
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::InvalidArgument, "bad overlay key " + key);
        }
        if (street >= w.trajectories.size() || frame >= w.trajectories[street].size()) {
            throw Error(ErrorCode::InvalidArgument, "overlay key out of range " + key);
        }
        const CameraPose& pose = w.trajectories[street].frames[frame];
        if (parts[0] == "water") {
            const auto ids = w.scene.scenario_ids();
            const std::size_t s = std::stoul(parts[3]);
            if (s >= ids.size()) throw Error(ErrorCode::UnknownScenario, parts[3]);
            const WaterLayer layer = water_mask(w.mesh, w.index, w.scene, pose, ids[s], w.overlay_width,
                                                w.overlay_height, w.threads);
            return to_gray(layer.layer);
        }
        if (parts[0] == "shadow") {
            const SunState sun = LightSetting::from_token(parts[3]).sun(w.scene.origin);
            return to_gray(shadow_mask(w.mesh, w.index, pose, sun, w.overlay_width, w.overlay_height, w.threads));
        }
        throw Error(ErrorCode::InvalidArgument, "bad overlay key " + key);
    }

    std::shared_ptr<const WalkWorld> world_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const GrayImage>> cache_;
};

inline json error_message(const Error& e) {
    return json{{"type", "error"}, {"code", std::string(to_string(e.code()))}, {"message", e.what()}};
}

/// Transport-independent session service speaking the walk/1 JSON protocol.
class WalkService {
public:
    explicit WalkService(std::shared_ptr<const WalkWorld> world)
        : world_(std::move(world)), overlays_(world_) {}

    const WalkWorld& world() const { return *world_; }
    OverlayCache& overlays() { return overlays_; }

    /// New session: avatar 5 m ahead of the first street's frame 0, view at
    /// frame 0 with identity relative orientation.
    std::string create_session() {
        if (!world_ || world_->trajectories.empty() || world_->trajectories.front().frames.empty()) {
            throw Error(ErrorCode::SceneNotLoaded, "no aligned trajectories loaded");
        }
        auto s = std::make_shared<Session>();
        const GlobalTrajectory& t = world_->trajectories.front();
        s->view = initial_view_state(t, 0, 0);
        Vec3 fwd = t.frames[0].forward();
        fwd.z = 0.0;
        if (fwd.norm() > 1e-9) fwd = fwd.normalized();
        s->avatar.position = world_->snap_to_terrain(t.frames[0].position + fwd * kSpawnAheadM);
        s->avatar.facing = std::atan2(fwd.y, fwd.x);
        std::lock_guard lock(mutex_);
        s->id = "s" + std::to_string(++next_id_);
        sessions_.emplace(s->id, s);
        return s->id;
    }

    void close_session(const std::string& id) {
        std::lock_guard lock(mutex_);
        sessions_.erase(id);
    }

    std::size_t session_count() const {
        std::lock_guard lock(mutex_);
        return sessions_.size();
    }

    json hello(const std::string& id) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        json j{{"type", "hello"}, {"proto", kProtocolVersion}, {"session", id}};
        j["streets"] = json::array();
        for (const GlobalTrajectory& t : world_->trajectories) {
            j["streets"].push_back({{"id", t.street_id}, {"frames", t.size()}});
        }
        j["scenarios"] = world_->scene.scenario_ids();
        j["mask"] = {world_->overlay_width, world_->overlay_height};
        j["view"] = packet(*s);
        return j;
    }

    /// One tick of avatar motion (planar displacement, capped at 0.5 m).
    json move(const std::string& id, double dx, double dy) {
        if (!std::isfinite(dx) || !std::isfinite(dy)) throw Error(ErrorCode::InvalidArgument, "non-finite move");
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        const double len = std::hypot(dx, dy);
        if (len > kMaxStepM) {
            dx *= kMaxStepM / len;
            dy *= kMaxStepM / len;
        }
        if (len > 0.0) s->avatar.facing = std::atan2(dy, dx);
        s->avatar.position = world_->snap_to_terrain(s->avatar.position + Vec3{dx, dy, 0.0});
        s->view = step(s->view, world_->trajectories, s->avatar);
        ++s->tick;
        return packet(*s);
    }

    json set_scenario(const std::string& id, const std::optional<std::string>& scenario) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        if (scenario && !world_->scene.has_scenario(*scenario)) throw Error(ErrorCode::UnknownScenario, *scenario);
        s->scenario = scenario;
        return json{{"type", "ack"}, {"of", "scenario"}, {"id", scenario ? json(*scenario) : json(nullptr)}};
    }

    json set_light(const std::string& id, const std::optional<LightSetting>& light) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        s->light = light;
        json j{{"type", "ack"}, {"of", "time"}};
        if (light) {
            const SunState sun = light->sun(world_->scene.origin);
            j["azimuth_deg"] = sun.azimuth_deg;
            j["elevation_deg"] = sun.elevation_deg;
            j["sun_below_horizon"] = sun.below_horizon;
        }
        return j;
    }

    /// Building under equirectangular pixel (u, v) of the current frame.
    json building_info(const std::string& id, int u, int v) {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        const int W = world_->overlay_width, H = world_->overlay_height;
        if (u < 0 || v < 0 || u >= W || v >= H) {
            throw Error(ErrorCode::InvalidArgument, "pixel outside " + std::to_string(W) + "x" + std::to_string(H));
        }
        const CameraPose& pose = world_->trajectories[s->view.street].frames[s->view.frame_index];
        const Vec3 dir = pose.orientation.rotate(pixel_ray(u, v, W, H));
        const auto hit = cast_ray(world_->mesh, world_->index, pose.position, dir);
        if (!hit || hit->label < 0) throw Error(ErrorCode::NoBuildingAtPixel, std::to_string(u) + "," + std::to_string(v));
        const Building& b = world_->scene.buildings.at(static_cast<std::size_t>(hit->label));
        json j{{"type", "info"}, {"u", u}, {"v", v}};
        json bj{{"id", b.id}, {"height_m", b.height_m}, {"base_elevation_m", b.base_elevation_m}};
        bj["attributes"] = json::object();
        for (const auto& [k, val] : b.attributes) bj["attributes"][k] = val;
        j["building"] = std::move(bj);
        j["distance_m"] = hit->distance;
        j["scenario"] = s->scenario ? json(*s->scenario) : json(nullptr);
        j["flood_depth_m"] = s->scenario ? json(flood_depth(world_->scene, b.id, *s->scenario)) : json(nullptr);
        return j;
    }

    /// Dispatches one client message; errors become error messages.
    json handle(const std::string& id, const std::string& text) {
        try {
            json msg;
            try {
                msg = json::parse(text);
            } catch (const json::exception& e) {
                throw Error(ErrorCode::InvalidFormat, std::string("bad JSON: ") + e.what());
            }
            const std::string type = msg.value("type", "");
            try {
                if (type == "move") return move(id, msg.at("dx").get<double>(), msg.at("dy").get<double>());
                if (type == "scenario") {
                    const auto& sid = msg.at("id");
                    return set_scenario(id, sid.is_null() ? std::nullopt
                                                          : std::optional<std::string>(sid.get<std::string>()));
                }
                if (type == "time") {
                    if (msg.contains("iso") && msg["iso"].is_null()) return set_light(id, std::nullopt);
                    LightSetting light;
                    if (msg.contains("iso")) {
                        light.time = parse_iso8601(msg["iso"].get<std::string>());
                    } else {
                        light.azimuth_deg = msg.at("azimuth_deg").get<double>();
                        light.elevation_deg = msg.at("elevation_deg").get<double>();
                    }
                    return set_light(id, light);
                }
                if (type == "click") return building_info(id, msg.at("u").get<int>(), msg.at("v").get<int>());
            } catch (const json::exception& e) {
                throw Error(ErrorCode::InvalidFormat, type + ": " + e.what());
            }
            throw Error(ErrorCode::InvalidFormat, "unknown message type '" + type + "'");
        } catch (const Error& e) {
            return error_message(e);
        }
    }

private:
    std::shared_ptr<Session> find(const std::string& id) const {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw Error(ErrorCode::SessionUnknown, id);
        return it->second;
    }

    json packet(const Session& s) const {
        const GlobalTrajectory& t = world_->trajectories[s.view.street];
        const std::size_t i = s.view.frame_index;
        const int fid = t.frame_id(i);
        json j{{"type", "view"}, {"session", s.id}, {"tick", s.tick}};
        j["frame"] = {{"street", t.street_id},
                      {"index", i},
                      {"id", fid},
                      {"url", "/pano/" + t.street_id + "/" + std::to_string(fid) + "." + world_->pano_ext}};
        const auto q = s.view.q_view.wxyz();
        j["q_view"] = {q[0], q[1], q[2], q[3]};
        const Vec3& c = t.frames[i].position;
        j["camera"] = {c.x, c.y, c.z};
        j["avatar"] = {s.avatar.position.x, s.avatar.position.y, s.avatar.position.z};
        json overlays = json::object();
        json flags{{"street_switched", s.view.switched}, {"orientation_held", s.view.held}};
        if (s.scenario) {
            const std::size_t k = *world_->scenario_index(*s.scenario);
            overlays["water"] = "/overlay/" + OverlayCache::water_key(s.view.street, i, k) + ".pgm";
            bool under = false;
            for (const WaterBody& w : world_->scene.water) {
                if (w.scenario_id == *s.scenario && c.z < w.level_m) under = true;
            }
            flags["camera_under_water"] = under;
        }
        if (s.light) {
            const SunState sun = s.light->sun(world_->scene.origin);
            flags["sun_below_horizon"] = sun.below_horizon;
            if (!sun.below_horizon) {
                overlays["shadow"] = "/overlay/" + OverlayCache::shadow_key(s.view.street, i, *s.light) + ".pgm";
            }
        }
        j["overlays"] = std::move(overlays);
        j["flags"] = std::move(flags);
        return j;
    }

    std::shared_ptr<const WalkWorld> world_;
    OverlayCache overlays_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 0;
};

/// Loads `<dir>/*.traj`; each street uses `<dir>/<stem>.params.json` when
/// present and otherwise its annotation-based initial parameters.
inline std::vector<GlobalTrajectory> load_aligned_trajectories(const std::string& dir, const CityScene& scene) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".traj") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<GlobalTrajectory> out;
    for (const fs::path& f : files) {
        const LocalTrajectory local = load_trajectory(f.string());
        fs::path params_path = f;
        params_path.replace_extension(".params.json");
        const AlignParams params = fs::exists(params_path)
                                       ? params_from_json(json::parse(read_text_file(params_path.string())))
                                       : init_params(local, scene);
        out.push_back(apply_transform(build_transform(local, params), local));
    }
    return out;
}

} // namespace citypano
