#pragma once

// CityGML LOD1 subset reader. The accepted element paths are listed in the
// README; anything else in the document is ignored.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "citypano/city/polygon.hpp"
#include "citypano/city/scene.hpp"
#include "citypano/error.hpp"
#include "citypano/geo/geodetic.hpp"

namespace citypano {

struct CityGmlOptions {
    /// Overrides the document's reference point.
    std::optional<GeodeticPoint> origin;
    double terrain_cell_m = 2.0;
    /// Ground added around the data extent so streets at the edge have terrain.
    double terrain_margin_m = 20.0;
};

namespace gml {

using boost::property_tree::ptree;

inline std::string local_name(const std::string& tag) {
    const auto colon = tag.find(':');
    return colon == std::string::npos ? tag : tag.substr(colon + 1);
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::optional<std::string> attr(const ptree& node, const std::string& local) {
    if (auto a = node.get_child_optional("<xmlattr>")) {
        for (const auto& [k, v] : *a) {
            if (local_name(k) == local) return v.data();
        }
    }
    return std::nullopt;
}

inline const ptree* child(const ptree& node, const std::string& local) {
    for (const auto& [k, v] : node) {
        if (local_name(k) == local) return &v;
    }
    return nullptr;
}

/// Every descendant (not only direct children) named `local`, document order.
/// Does not descend into matches.
inline void find_all(const ptree& node, const std::string& local, std::vector<const ptree*>& out) {
    for (const auto& [k, v] : node) {
        if (k == "<xmlattr>" || k == "<xmlcomment>") continue;
        if (local_name(k) == local) {
            out.push_back(&v);
        } else {
            find_all(v, local, out);
        }
    }
}

inline std::vector<const ptree*> find_all(const ptree& node, const std::string& local) {
    std::vector<const ptree*> out;
    find_all(node, local, out);
    return out;
}

inline std::vector<double> parse_numbers(const std::string& text, const std::string& context) {
    std::vector<double> values;
    std::istringstream in(text);
    std::string token;
    while (in >> token) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(token, &used));
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw Error(ErrorCode::MalformedXml, "bad number '" + token + "' in " + context);
        }
    }
    return values;
}

/// Raw coordinate triple as written in the file (lat lon h, or x y z).
struct RawPoint {
    double a, b, c;
    bool has_z = true;
};

inline std::vector<RawPoint> ring_points(const ptree& ring, int default_dim) {
    std::vector<RawPoint> pts;
    auto push = [&](const std::vector<double>& v, int dim) {
        if (dim != 2 && dim != 3) throw Error(ErrorCode::MalformedXml, "srsDimension must be 2 or 3");
        if (v.size() % static_cast<std::size_t>(dim) != 0) {
            throw Error(ErrorCode::MalformedXml, "coordinate count not a multiple of srsDimension");
        }
        for (std::size_t i = 0; i < v.size(); i += static_cast<std::size_t>(dim)) {
            pts.push_back({v[i], v[i + 1], dim == 3 ? v[i + 2] : 0.0, dim == 3});
        }
    };
    if (const ptree* pl = child(ring, "posList")) {
        int dim = default_dim;
        if (auto d = attr(*pl, "srsDimension")) dim = std::stoi(*d);
        push(parse_numbers(pl->data(), "posList"), dim);
        return pts;
    }
    for (const auto& [k, v] : ring) {
        if (local_name(k) != "pos") continue;
        const auto nums = parse_numbers(v.data(), "pos");
        push(nums, static_cast<int>(nums.size()));
    }
    return pts;
}

/// Exterior rings of every gml:Polygon / gml:Triangle below `node`.
inline std::vector<std::vector<RawPoint>> exterior_rings(const ptree& node, int dim) {
    std::vector<std::vector<RawPoint>> rings;
    std::vector<const ptree*> polys;
    find_all(node, "Polygon", polys);
    find_all(node, "Triangle", polys);
    for (const ptree* poly : polys) {
        const ptree* ext = child(*poly, "exterior");
        if (!ext) continue;
        const ptree* ring = child(*ext, "LinearRing");
        if (!ring) continue;
        auto pts = ring_points(*ring, dim);
        if (!pts.empty()) rings.push_back(std::move(pts));
    }
    return rings;
}

/// Concatenated text of all leaf elements below `node`.
inline std::string leaf_text(const ptree& node) {
    std::string out;
    bool has_child = false;
    for (const auto& [k, v] : node) {
        if (k == "<xmlattr>" || k == "<xmlcomment>") continue;
        has_child = true;
        const std::string t = leaf_text(v);
        if (t.empty()) continue;
        if (!out.empty()) out += ' ';
        out += t;
    }
    return has_child ? out : trim(node.data());
}

inline bool geographic_srs(const std::string& srs) {
    for (const char* code : {"4326", "4979", "6697", "6668", "4612", "CRS84"}) {
        if (srs.find(code) != std::string::npos) return true;
    }
    return false;
}

inline std::string flood_scenario_id(const ptree& risk) {
    std::string desc, scale;
    if (const ptree* d = child(risk, "description")) desc = trim(d->data());
    if (const ptree* s = child(risk, "scale")) scale = trim(s->data());
    if (desc.empty()) return scale;
    if (scale.empty()) return desc;
    return desc + "-" + scale;
}

/// Generic attributes (gen:stringAttribute and friends) as name -> text.
inline void collect_generic(const ptree& node, std::map<std::string, std::string>& out) {
    for (const auto& [k, v] : node) {
        const std::string ln = local_name(k);
        if (ln.size() > 9 && ln.compare(ln.size() - 9, 9, "Attribute") == 0 && ln != "genericAttribute") {
            const auto name = attr(v, "name");
            const ptree* value = child(v, "value");
            if (name && value) out[*name] = trim(value->data());
        }
    }
}

// Nearest-sample lookup on a bucket grid, used to fill terrain nodes that no
// TIN triangle covers.
class NearestSample {
public:
    NearestSample(std::vector<Vec3> pts, double bucket) : pts_(std::move(pts)), bucket_(bucket) {
        for (const Vec3& p : pts_) {
            lo_.x = std::min(lo_.x, p.x);
            lo_.y = std::min(lo_.y, p.y);
            hi_.x = std::max(hi_.x, p.x);
            hi_.y = std::max(hi_.y, p.y);
        }
        nx_ = std::max(1, static_cast<int>((hi_.x - lo_.x) / bucket_) + 1);
        ny_ = std::max(1, static_cast<int>((hi_.y - lo_.y) / bucket_) + 1);
        cells_.resize(static_cast<std::size_t>(nx_) * ny_);
        for (std::size_t i = 0; i < pts_.size(); ++i) cells_[cell_of(xy(pts_[i]))].push_back(i);
    }

    double query(const Vec2& q) const {
        const int cx = std::clamp(static_cast<int>((q.x - lo_.x) / bucket_), 0, nx_ - 1);
        const int cy = std::clamp(static_cast<int>((q.y - lo_.y) / bucket_), 0, ny_ - 1);
        double best = std::numeric_limits<double>::infinity();
        double value = 0.0;
        for (int ring = 0; ring <= std::max(nx_, ny_); ++ring) {
            for (int y = cy - ring; y <= cy + ring; ++y) {
                for (int x = cx - ring; x <= cx + ring; ++x) {
                    if (std::max(std::abs(x - cx), std::abs(y - cy)) != ring) continue;
                    if (x < 0 || y < 0 || x >= nx_ || y >= ny_) continue;
                    for (std::size_t i : cells_[static_cast<std::size_t>(y) * nx_ + x]) {
                        const double d = (xy(pts_[i]) - q).norm();
                        if (d < best) {
                            best = d;
                            value = pts_[i].z;
                        }
                    }
                }
            }
            // Anything in a farther ring is at least ring*bucket away.
            if (best <= ring * bucket_) break;
        }
        return value;
    }

private:
    std::size_t cell_of(const Vec2& p) const {
        const int x = std::clamp(static_cast<int>((p.x - lo_.x) / bucket_), 0, nx_ - 1);
        const int y = std::clamp(static_cast<int>((p.y - lo_.y) / bucket_), 0, ny_ - 1);
        return static_cast<std::size_t>(y) * nx_ + x;
    }

    std::vector<Vec3> pts_;
    double bucket_;
    Vec2 lo_{1e300, 1e300}, hi_{-1e300, -1e300};
    int nx_ = 1, ny_ = 1;
    std::vector<std::vector<std::size_t>> cells_;
};

} // namespace gml

/// Parses the supported CityGML subset into an ENU scene.
///
/// Buildings need either an LOD1 solid (footprint = bottom face, height =
/// vertical extent of the shell) or an LOD0 footprint plus measuredHeight.
/// Relief (TIN triangles and mass points) is resampled onto a regular grid.
inline CityScene parse_citygml(const std::string& document, const CityGmlOptions& options = {}) {
    using gml::ptree;
    ptree doc;
    try {
        std::istringstream in(document);
        boost::property_tree::read_xml(in, doc, boost::property_tree::xml_parser::trim_whitespace);
    } catch (const boost::property_tree::xml_parser_error& e) {
        throw Error(ErrorCode::MalformedXml, e.what());
    }
    const ptree* root = nullptr;
    for (const auto& [k, v] : doc) {
        if (gml::local_name(k) == "CityModel") root = &v;
    }
    if (!root) throw Error(ErrorCode::MalformedXml, "document has no CityModel root element");

    // Reference system and origin.
    bool geographic = false;
    std::optional<GeodeticPoint> origin = options.origin;
    int dim = 3;
    if (const ptree* bounded = gml::child(*root, "boundedBy")) {
        if (const ptree* env = gml::child(*bounded, "Envelope")) {
            const std::string srs = gml::attr(*env, "srsName").value_or("");
            geographic = gml::geographic_srs(srs);
            if (auto d = gml::attr(*env, "srsDimension")) dim = std::stoi(*d);
            if (const ptree* lc = gml::child(*env, "lowerCorner"); lc && !origin && geographic) {
                const auto v = gml::parse_numbers(lc->data(), "lowerCorner");
                if (v.size() < 2) throw Error(ErrorCode::MalformedXml, "lowerCorner needs lat lon");
                origin = GeodeticPoint{v[0], v[1], v.size() > 2 ? v[2] : 0.0};
            }
        }
    }

    CityScene scene;
    auto to_enu = [&](const gml::RawPoint& p) -> Vec3 {
        if (!geographic) return {p.a, p.b, p.c};
        if (!origin) origin = GeodeticPoint{p.a, p.b, p.c};
        const GeodeticPoint g{p.a, p.b, p.c};
        if (!g.valid()) throw Error(ErrorCode::MalformedXml, "coordinate outside lat/lon range");
        return enu_from_geodetic(*origin, g);
    };

    struct PendingBuilding {
        Building b;
        bool has_base = false;
    };
    std::vector<PendingBuilding> pending;

    for (const ptree* node : gml::find_all(*root, "Building")) {
        PendingBuilding pb;
        Building& b = pb.b;
        b.id = gml::attr(*node, "id").value_or("building_" + std::to_string(pending.size()));
        gml::collect_generic(*node, b.attributes);
        if (const ptree* name = gml::child(*node, "name")) b.attributes["name"] = gml::trim(name->data());
        if (const ptree* addr = gml::child(*node, "address")) b.attributes["address"] = gml::leaf_text(*addr);
        std::optional<double> measured;
        if (const ptree* mh = gml::child(*node, "measuredHeight")) {
            const auto v = gml::parse_numbers(mh->data(), "measuredHeight of " + b.id);
            if (v.size() != 1) throw Error(ErrorCode::MalformedXml, "measuredHeight of " + b.id);
            measured = v[0];
            b.attributes["measured_height"] = gml::trim(mh->data());
        }
        for (const ptree* risk : gml::find_all(*node, "BuildingRiverFloodingRiskAttribute")) {
            if (const ptree* depth = gml::child(*risk, "depth")) {
                b.attributes["flood_depth:" + gml::flood_scenario_id(*risk)] = gml::trim(depth->data());
            }
        }

        Polygon2 ring;
        if (const ptree* solid = gml::child(*node, "lod1Solid")) {
            double zmin = std::numeric_limits<double>::infinity();
            double zmax = -zmin;
            std::vector<std::vector<Vec3>> faces;
            for (const auto& raw : gml::exterior_rings(*solid, dim)) {
                std::vector<Vec3> face;
                for (const auto& p : raw) {
                    face.push_back(to_enu(p));
                    zmin = std::min(zmin, face.back().z);
                    zmax = std::max(zmax, face.back().z);
                }
                faces.push_back(std::move(face));
            }
            if (faces.empty()) throw Error(ErrorCode::UnsupportedLod, "empty lod1Solid in building " + b.id);
            double best_area = 0.0;
            for (const auto& face : faces) {
                const bool bottom = std::all_of(face.begin(), face.end(),
                                                [&](const Vec3& p) { return std::abs(p.z - zmin) < 1e-6; });
                if (!bottom) continue;
                Polygon2 candidate;
                for (const Vec3& p : face) candidate.push_back(xy(p));
                const double area = std::abs(signed_area(candidate));
                if (area > best_area) {
                    best_area = area;
                    ring = std::move(candidate);
                }
            }
            if (ring.empty()) {
                throw Error(ErrorCode::UnsupportedLod, "lod1Solid without a horizontal bottom face in building " + b.id);
            }
            b.base_elevation_m = zmin;
            b.height_m = zmax - zmin;
            pb.has_base = true;
        } else {
            const ptree* fp = gml::child(*node, "lod0FootPrint");
            const bool roof_edge = fp == nullptr;
            if (!fp) fp = gml::child(*node, "lod0RoofEdge");
            if (!fp || !measured) {
                throw Error(ErrorCode::UnsupportedLod,
                            "building " + b.id + " has neither an LOD1 solid nor footprint + measuredHeight");
            }
            const auto rings = gml::exterior_rings(*fp, dim);
            if (rings.empty()) throw Error(ErrorCode::UnsupportedLod, "empty footprint in building " + b.id);
            double zmin = std::numeric_limits<double>::infinity();
            bool has_z = !roof_edge;
            for (const auto& p : rings.front()) {
                const Vec3 e = to_enu(p);
                ring.push_back(xy(e));
                zmin = std::min(zmin, e.z);
                has_z = has_z && p.has_z;
            }
            // A 3-D footprint carries the ground level; a roof edge does not.
            if (has_z) {
                b.base_elevation_m = zmin;
                pb.has_base = true;
            }
            b.height_m = *measured;
        }
        if (!(b.height_m > 0.0)) throw Error(ErrorCode::UnsupportedLod, "non-positive height in building " + b.id);
        b.footprint = clean_ring(std::move(ring));
        if (b.footprint.size() < 3 || !is_simple(b.footprint)) {
            throw Error(ErrorCode::InvalidPolygon, "self-intersecting or degenerate footprint in building " + b.id);
        }
        pending.push_back(std::move(pb));
    }

    // Water bodies.
    for (const ptree* node : gml::find_all(*root, "WaterBody")) {
        std::map<std::string, std::string> gen;
        gml::collect_generic(*node, gen);
        std::string scenario;
        if (auto it = gen.find("scenario"); it != gen.end()) scenario = it->second;
        if (scenario.empty()) {
            const auto risks = gml::find_all(*node, "WaterBodyRiverFloodingRiskAttribute");
            if (!risks.empty()) scenario = gml::flood_scenario_id(*risks.front());
        }
        if (scenario.empty()) {
            if (const ptree* name = gml::child(*node, "name")) scenario = gml::trim(name->data());
        }
        if (scenario.empty()) scenario = gml::attr(*node, "id").value_or("water");
        for (const auto& raw : gml::exterior_rings(*node, dim)) {
            WaterBody w;
            w.scenario_id = scenario;
            double zsum = 0.0;
            for (const auto& p : raw) {
                const Vec3 e = to_enu(p);
                w.extent.push_back(xy(e));
                zsum += e.z;
            }
            w.level_m = zsum / static_cast<double>(raw.size());
            w.extent = clean_ring(std::move(w.extent));
            if (w.extent.size() < 3 || !is_simple(w.extent)) {
                throw Error(ErrorCode::InvalidPolygon, "water extent for scenario " + scenario);
            }
            scene.water.push_back(std::move(w));
        }
    }

    // Relief samples.
    std::vector<std::array<Vec3, 3>> tin;
    std::vector<Vec3> samples;
    for (const ptree* relief : gml::find_all(*root, "ReliefFeature")) {
        for (const auto& raw : gml::exterior_rings(*relief, dim)) {
            std::vector<Vec3> pts;
            for (const auto& p : raw) pts.push_back(to_enu(p));
            if (pts.size() >= 2 && pts.front() == pts.back()) pts.pop_back();
            if (pts.size() == 3) tin.push_back({pts[0], pts[1], pts[2]});
            samples.insert(samples.end(), pts.begin(), pts.end());
        }
        for (const ptree* pt : gml::find_all(*relief, "Point")) {
            if (const ptree* pos = gml::child(*pt, "pos")) {
                const auto v = gml::parse_numbers(pos->data(), "relief point");
                if (v.size() == 3) samples.push_back(to_enu({v[0], v[1], v[2]}));
            }
        }
    }

    scene.origin = origin.value_or(GeodeticPoint{});

    // Terrain grid over everything, plus a margin.
    Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
    auto grow = [&](const Vec2& p) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    };
    for (const auto& pb : pending) {
        for (const Vec2& p : pb.b.footprint) grow(p);
    }
    for (const Vec3& s : samples) grow(xy(s));
    for (const WaterBody& w : scene.water) {
        for (const Vec2& p : w.extent) grow(p);
    }
    if (lo.x > hi.x) {
        lo = {0.0, 0.0};
        hi = {0.0, 0.0};
    }
    const double m = options.terrain_margin_m;
    const double cell = options.terrain_cell_m;
    lo = {std::floor((lo.x - m) / cell) * cell, std::floor((lo.y - m) / cell) * cell};
    hi = {hi.x + m, hi.y + m};

    if (samples.empty()) {
        double ground = 0.0;
        bool any = false;
        for (const auto& pb : pending) {
            if (!pb.has_base) continue;
            ground = any ? std::min(ground, pb.b.base_elevation_m) : pb.b.base_elevation_m;
            any = true;
        }
        scene.terrain = Terrain::flat(lo, hi, ground, cell);
    } else {
        Terrain t = Terrain::flat(lo, hi, 0.0, cell);
        std::vector<char> covered(t.heights.size(), 0);
        for (const auto& tri : tin) {
            const Vec2 a = xy(tri[0]), b = xy(tri[1]), c = xy(tri[2]);
            const double det = (b - a).cross(c - a);
            if (std::abs(det) < 1e-12) continue;
            const double x0 = std::min({a.x, b.x, c.x}), x1 = std::max({a.x, b.x, c.x});
            const double y0 = std::min({a.y, b.y, c.y}), y1 = std::max({a.y, b.y, c.y});
            const int c0 = std::max(0, static_cast<int>(std::ceil((x0 - t.origin.x) / cell)));
            const int c1 = std::min(t.cols - 1, static_cast<int>(std::floor((x1 - t.origin.x) / cell)));
            const int r0 = std::max(0, static_cast<int>(std::ceil((y0 - t.origin.y) / cell)));
            const int r1 = std::min(t.rows - 1, static_cast<int>(std::floor((y1 - t.origin.y) / cell)));
            for (int r = r0; r <= r1; ++r) {
                for (int col = c0; col <= c1; ++col) {
                    const Vec2 p = t.node_xy(r, col);
                    const double l1 = (b - p).cross(c - p) / det;
                    const double l2 = (c - p).cross(a - p) / det;
                    const double l3 = 1.0 - l1 - l2;
                    if (l1 < -1e-9 || l2 < -1e-9 || l3 < -1e-9) continue;
                    t.at(r, col) = l1 * tri[0].z + l2 * tri[1].z + l3 * tri[2].z;
                    covered[static_cast<std::size_t>(r) * t.cols + col] = 1;
                }
            }
        }
        const gml::NearestSample nearest(samples, std::max(cell * 8.0, 10.0));
        for (int r = 0; r < t.rows; ++r) {
            for (int col = 0; col < t.cols; ++col) {
                if (!covered[static_cast<std::size_t>(r) * t.cols + col]) t.at(r, col) = nearest.query(t.node_xy(r, col));
            }
        }
        scene.terrain = std::move(t);
    }

    for (auto& pb : pending) {
        if (!pb.has_base) pb.b.base_elevation_m = scene.terrain.elevation(polygon_centroid(pb.b.footprint));
        scene.buildings.push_back(std::move(pb.b));
    }
    scene.validate();
    return scene;
}

inline CityScene load_citygml(const std::string& path, const CityGmlOptions& options = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_citygml(ss.str(), options);
}

} // namespace citypano
