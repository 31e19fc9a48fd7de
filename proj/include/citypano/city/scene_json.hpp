#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "citypano/city/scene.hpp"
#include "citypano/error.hpp"

namespace citypano {

inline constexpr const char* kSceneFormat = "cityscene/1";

namespace detail {

inline nlohmann::ordered_json ring_to_json(const Polygon2& ring) {
    auto arr = nlohmann::ordered_json::array();
    for (const Vec2& p : ring) arr.push_back({p.x, p.y});
    return arr;
}

inline Polygon2 ring_from_json(const nlohmann::ordered_json& j) {
    Polygon2 ring;
    for (const auto& p : j) ring.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return ring;
}

} // namespace detail

/// Canonical JSON form; field order is fixed so equal scenes give equal bytes.
inline nlohmann::ordered_json scene_to_json(const CityScene& scene) {
    nlohmann::ordered_json j;
    j["format"] = kSceneFormat;
    j["origin"] = {{"latitude_deg", scene.origin.latitude_deg},
                   {"longitude_deg", scene.origin.longitude_deg},
                   {"height_m", scene.origin.height_m}};
    const Terrain& t = scene.terrain;
    j["terrain"] = {{"origin", {t.origin.x, t.origin.y}},
                    {"cell_size", t.cell_size},
                    {"rows", t.rows},
                    {"cols", t.cols},
                    {"heights", t.heights}};
    auto buildings = nlohmann::ordered_json::array();
    for (const Building& b : scene.buildings) {
        nlohmann::ordered_json jb;
        jb["id"] = b.id;
        jb["footprint"] = detail::ring_to_json(b.footprint);
        jb["base_elevation_m"] = b.base_elevation_m;
        jb["height_m"] = b.height_m;
        jb["attributes"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : b.attributes) jb["attributes"][k] = v;
        buildings.push_back(std::move(jb));
    }
    j["buildings"] = std::move(buildings);
    auto water = nlohmann::ordered_json::array();
    for (const WaterBody& w : scene.water) {
        water.push_back({{"scenario_id", w.scenario_id},
                         {"level_m", w.level_m},
                         {"extent", detail::ring_to_json(w.extent)}});
    }
    j["water"] = std::move(water);
    return j;
}

inline std::string serialize_scene(const CityScene& scene) { return scene_to_json(scene).dump(1); }

inline CityScene scene_from_json(const nlohmann::ordered_json& j) {
    try {
        if (j.at("format").get<std::string>() != kSceneFormat) {
            throw Error(ErrorCode::InvalidFormat, "unsupported scene format " + j.at("format").dump());
        }
        CityScene s;
        const auto& o = j.at("origin");
        s.origin = {o.at("latitude_deg").get<double>(), o.at("longitude_deg").get<double>(),
                    o.at("height_m").get<double>()};
        const auto& t = j.at("terrain");
        s.terrain.origin = {t.at("origin").at(0).get<double>(), t.at("origin").at(1).get<double>()};
        s.terrain.cell_size = t.at("cell_size").get<double>();
        s.terrain.rows = t.at("rows").get<int>();
        s.terrain.cols = t.at("cols").get<int>();
        s.terrain.heights = t.at("heights").get<std::vector<double>>();
        for (const auto& jb : j.at("buildings")) {
            Building b;
            b.id = jb.at("id").get<std::string>();
            b.footprint = detail::ring_from_json(jb.at("footprint"));
            b.base_elevation_m = jb.at("base_elevation_m").get<double>();
            b.height_m = jb.at("height_m").get<double>();
            for (const auto& [k, v] : jb.at("attributes").items()) b.attributes[k] = v.get<std::string>();
            s.buildings.push_back(std::move(b));
        }
        for (const auto& jw : j.at("water")) {
            s.water.push_back({jw.at("scenario_id").get<std::string>(), jw.at("level_m").get<double>(),
                               detail::ring_from_json(jw.at("extent"))});
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidFormat, std::string("scene json: ") + e.what());
    }
}

inline CityScene parse_scene_json(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidFormat, std::string("scene json: ") + e.what());
    }
    return scene_from_json(j);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << text;
}

} // namespace citypano
