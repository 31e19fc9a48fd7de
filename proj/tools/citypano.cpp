#include <csignal>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "citypano/align/alignment.hpp"
#include "citypano/city/citygml.hpp"
#include "citypano/city/scene_json.hpp"
#include "citypano/raster/mask_io.hpp"
#include "citypano/service/server.hpp"
#include "citypano/synth/bench.hpp"

namespace fs = std::filesystem;
using namespace citypano;

namespace {

struct Common {
    std::uint64_t seed = 1;
    int mask_res = 512;
    int iters = 700;
    unsigned threads = 1;
};

CityScene load_scene(const std::string& path, const std::vector<double>& origin) {
    const std::string ext = fs::path(path).extension().string();
    if (ext == ".json") return parse_scene_json(read_text_file(path));
    CityGmlOptions opt;
    if (origin.size() == 3) opt.origin = GeodeticPoint{origin[0], origin[1], origin[2]};
    return load_citygml(path, opt);
}

int mask_height(int res) {
    if (res < 2 || res % 2) throw Error(ErrorCode::InvalidArgument, "--mask-res must be an even width >= 2");
    return res / 2;
}

/// Masks named <frame_id>.pgm or .png, keyed by trajectory position.
MaskMap load_masks(const std::string& dir, const LocalTrajectory& traj) {
    MaskMap out;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        for (const char* ext : {".pgm", ".png"}) {
            const fs::path p = fs::path(dir) / (std::to_string(traj.frame_id(i)) + ext);
            if (fs::exists(p)) {
                out.emplace(i, read_mask(p.string()));
                break;
            }
        }
    }
    if (out.empty()) throw Error(ErrorCode::IoError, "no masks found in " + dir);
    return out;
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) { write_text_file(path, j.dump(2) + "\n"); }

WalkServer* g_server = nullptr;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Street-level panorama registration against LOD1 city models, and walkthrough service"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", common.seed, "Random seed");
        sub->add_option("--mask-res", common.mask_res, "Mask width in pixels (height is half)");
        sub->add_option("--iters", common.iters, "CMA-ES generations");
        sub->add_option("--threads", common.threads, "Worker threads");
    };

    // serve
    auto* serve = app.add_subcommand("serve", "Run the walkthrough WebSocket/HTTP service");
    std::string scene_path, traj_dir, assets_dir, address = "127.0.0.1", pano_ext = "jpg";
    std::vector<double> origin;
    unsigned short port = 8080;
    serve->add_option("--scene", scene_path, "Scene (.json cityscene/1 or CityGML)")->required();
    serve->add_option("--trajectories", traj_dir, "Directory of <street>.traj (+ <street>.params.json)")->required();
    serve->add_option("--assets", assets_dir, "Panorama directory: <street>/<frame>.<ext>");
    serve->add_option("--port", port, "TCP port");
    serve->add_option("--address", address, "Bind address");
    serve->add_option("--pano-ext", pano_ext, "Panorama file extension");
    serve->add_option("--origin", origin, "lat lon h origin for CityGML input")->expected(3);
    add_common(serve);

    // align
    auto* align = app.add_subcommand("align", "Register one street trajectory to the city model");
    std::string traj_path, masks_dir, out_path, report_path, init_path;
    int samples = kDefaultSampleCount, stride = kDefaultHeldOutStride;
    align->add_option("--scene", scene_path)->required();
    align->add_option("--trajectory", traj_path)->required();
    align->add_option("--masks", masks_dir, "Directory of <frame>.pgm|png reference masks")->required();
    align->add_option("--init", init_path, "Initial params JSON (default: from annotations)");
    align->add_option("--out", out_path, "Optimized params JSON")->required();
    align->add_option("--report", report_path, "Alignment report JSON");
    align->add_option("--samples", samples, "Frames sampled for the objective");
    align->add_option("--held-out-stride", stride, "Evaluate every k-th non-sampled frame");
    align->add_option("--origin", origin)->expected(3);
    add_common(align);

    // eval-alignment
    auto* eval = app.add_subcommand("eval-alignment", "Held-out misalignment rate of params");
    std::string params_path;
    eval->add_option("--scene", scene_path)->required();
    eval->add_option("--trajectory", traj_path)->required();
    eval->add_option("--masks", masks_dir)->required();
    eval->add_option("--params", params_path)->required();
    eval->add_option("--init", init_path, "Baseline params (default: from annotations)");
    eval->add_option("--samples", samples);
    eval->add_option("--held-out-stride", stride);
    eval->add_option("--origin", origin)->expected(3);
    add_common(eval);

    // synth-city
    auto* synth = app.add_subcommand("synth-city", "Write a synthetic city, street trajectories and masks");
    std::string out_dir;
    SynthSpec spec;
    std::vector<std::string> floods;
    int streets = -1;
    double perturb_m = 0.0, perturb_deg = 0.0;
    synth->add_option("--out", out_dir)->required();
    synth->add_option("--blocks", spec.block_rows, "Blocks per side")->each([&](const std::string&) {
        spec.block_cols = spec.block_rows;
    });
    synth->add_option("--frames", spec.frames_per_street);
    synth->add_option("--occluders", spec.occluder_fraction);
    synth->add_option("--jitter", spec.jitter_m);
    synth->add_option("--slope", spec.slope_x);
    synth->add_option("--streets", streets, "Number of streets to write (default all)");
    synth->add_option("--flood", floods, "Flood scenario over the whole city, e.g. L1=0.8");
    synth->add_option("--perturb-m", perturb_m, "Also write <street>.init.json with this endpoint SD (m)");
    synth->add_option("--perturb-deg", perturb_deg, "Lambda SD (deg) for <street>.init.json");
    add_common(synth);

    // run-bench
    auto* bench = app.add_subcommand("run-bench", "End-to-end synthetic alignment benchmark");
    BenchConfig bcfg;
    bench->add_option("--streets", bcfg.streets);
    bench->add_option("--sigma-m", bcfg.sigma_m, "Endpoint perturbation SD (m)");
    bench->add_option("--sigma-deg", bcfg.sigma_deg, "Lambda perturbation SD (deg)");
    bench->add_option("--occluders", spec.occluder_fraction)->default_val(0.1);
    bench->add_option("--frames", spec.frames_per_street);
    bench->add_option("--samples", samples);
    bench->add_option("--out", out_dir, "Directory for bench.json, histogram.csv, summary.txt");
    add_common(bench);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) {
            CityScene scene = load_scene(scene_path, origin);
            auto trajectories = load_aligned_trajectories(traj_dir, scene);
            auto world = std::make_shared<WalkWorld>();
            world->scene = std::move(scene);
            world->mesh = scene_to_mesh(world->scene);
            world->index = RayIndex::build(world->mesh, world->scene);
            world->trajectories = std::move(trajectories);
            world->assets_dir = assets_dir;
            world->pano_ext = pano_ext;
            world->overlay_width = common.mask_res;
            world->overlay_height = mask_height(common.mask_res);
            world->threads = common.threads;
            auto service = std::make_shared<WalkService>(world);
            WalkServer server(service, address, port);
            g_server = &server;
            std::signal(SIGINT, [](int) {
                if (g_server) std::thread([] { g_server->stop(); }).detach();
            });
            std::cout << "serving " << world->trajectories.size() << " streets on " << address << ":"
                      << server.port() << " (proto " << kProtocolVersion << ")" << std::endl;
            server.run();
            return 0;
        }

        if (*align || *eval) {
            const CityScene scene = load_scene(scene_path, origin);
            const TriangleMesh mesh = scene_to_mesh(scene);
            const RayIndex index = RayIndex::build(mesh, scene);
            const LocalTrajectory traj = load_trajectory(traj_path);
            const MaskMap masks = load_masks(masks_dir, traj);
            AlignmentProblem pb{&mesh, &index, &traj, &masks, common.threads};
            const AlignParams init = init_path.empty()
                                         ? init_params(traj, scene)
                                         : params_from_json(nlohmann::ordered_json::parse(read_text_file(init_path)));
            if (*align) {
                AlignConfig cfg;
                cfg.samples = samples;
                cfg.held_out_stride = stride;
                cfg.cmaes.iterations = common.iters;
                cfg.cmaes.seed = common.seed;
                cfg.cmaes.threads = common.threads;
                const AlignmentReport r = align_street(pb, init, cfg);
                write_json(out_path, params_to_json(r.params_opt));
                if (!report_path.empty()) write_json(report_path, report_to_json(r));
                std::printf("%s: objective %.0f -> %.0f, held-out rate %.4f -> %.4f (%d generations, %s)\n",
                            r.street_id.c_str(), r.objective_init, r.objective_opt, r.rate_pre, r.rate_post,
                            r.generations, r.stop_reason.c_str());
            } else {
                const AlignParams p = params_from_json(nlohmann::ordered_json::parse(read_text_file(params_path)));
                const auto sampled = sample_frames(traj.size(), samples);
                const AlignmentReport r = evaluate_alignment(pb, init, p, sampled, stride);
                nlohmann::ordered_json j{{"street_id", r.street_id},
                                         {"rate_init", r.rate_pre},
                                         {"rate", r.rate_post},
                                         {"held_out", r.held_out.size()}};
                std::cout << j.dump(2) << std::endl;
            }
            return 0;
        }

        if (*synth) {
            spec.seed = common.seed;
            const CityScene base = generate_city(spec);
            CityScene scene = base;
            const Vec2 lo = scene.terrain.origin, hi = scene.terrain.max_corner();
            for (const std::string& f : floods) {
                const auto eq = f.find('=');
                if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--flood expects ID=LEVEL");
                scene.water.push_back({f.substr(0, eq), std::stod(f.substr(eq + 1)),
                                       {{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {lo.x, hi.y}}});
            }
            const int W = common.mask_res, H = mask_height(W);
            const TriangleMesh mesh = scene_to_mesh(scene);
            const RayIndex index = RayIndex::build(mesh, scene);
            fs::create_directories(fs::path(out_dir) / "trajectories");
            write_text_file((fs::path(out_dir) / "scene.json").string(), serialize_scene(scene) + "\n");
            const int n = streets < 0 ? spec.street_count() : std::min(streets, spec.street_count());
            for (int k = 0; k < n; ++k) {
                const SynthStreet s = generate_street(scene, k, spec);
                const std::string id = s.local.street_id;
                write_text_file((fs::path(out_dir) / "trajectories" / (id + ".traj")).string(),
                                format_trajectory(s.local));
                write_json((fs::path(out_dir) / "trajectories" / (id + ".gt.json")).string(), params_to_json(s.gt));
                if (perturb_m > 0 || perturb_deg > 0) {
                    const AlignParams init = perturb_params(s.gt, scene, perturb_m, perturb_deg,
                                                            mix_seed(spec.seed, 0x9E70 + k), spec.camera_height_m);
                    write_json((fs::path(out_dir) / "trajectories" / (id + ".init.json")).string(),
                               params_to_json(init));
                }
                const MaskMap masks = render_reference_masks(mesh, index, s.global, spec.occluder_fraction,
                                                             mix_seed(spec.seed, 0x0CC1 + k), W, H, common.threads);
                const fs::path mdir = fs::path(out_dir) / "masks" / id;
                fs::create_directories(mdir);
                for (const auto& [i, m] : masks) write_mask((mdir / (std::to_string(i) + ".pgm")).string(), m);
                std::cout << id << ": " << s.local.size() << " frames" << std::endl;
            }
            return 0;
        }

        if (*bench) {
            spec.seed = common.seed;
            bcfg.mask_width = common.mask_res;
            bcfg.mask_height = mask_height(common.mask_res);
            bcfg.threads = common.threads;
            bcfg.align.samples = samples;
            bcfg.align.cmaes.iterations = common.iters;
            bcfg.align.cmaes.seed = common.seed;
            const BenchResult r = run_benchmark(spec, bcfg, [](const StreetOutcome& s) {
                std::fprintf(stderr, "%s: rate %.4f -> %.4f (%.0f s)\n", s.report.street_id.c_str(),
                             s.report.rate_pre, s.report.rate_post, s.seconds);
            });
            const std::string summary = bench_summary(r);
            std::cout << summary;
            if (!out_dir.empty()) {
                fs::create_directories(out_dir);
                write_json((fs::path(out_dir) / "bench.json").string(), bench_to_json(r));
                write_text_file((fs::path(out_dir) / "histogram.csv").string(), bench_histogram_csv(r));
                write_text_file((fs::path(out_dir) / "summary.txt").string(), summary);
            }
            return r.error.empty() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
