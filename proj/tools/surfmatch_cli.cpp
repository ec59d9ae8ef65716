// surfmatch: dataset generation, training, matching, registration,
// benchmarking and match visualization.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "surfmatch/error.hpp"
#include "surfmatch/eval/benchmark.hpp"
#include "surfmatch/eval/metrics.hpp"
#include "surfmatch/geom/ply.hpp"
#include "surfmatch/geom/random.hpp"
#include "surfmatch/net/model.hpp"
#include "surfmatch/reg/registration.hpp"
#include "surfmatch/synth/dataset.hpp"
#include "surfmatch/train/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using surfmatch::cli::RunConfig;

namespace surfmatch::cli {
namespace {

void add_common(RunConfig &rc, CLI::App &app, bool needs_out = true) {
    rc.add<std::uint64_t>(app, "seed", 0, "Random seed");
    rc.add<std::string>(app, "out", needs_out ? "" : ".", "Output directory");
    rc.add_flag(app, "force", "Overwrite existing outputs");
    rc.add_config_option(app);
}

fs::path require_out(const RunConfig &rc) {
    const std::string out = rc.get<std::string>("out");
    if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
    return out;
}

void require_exists(const fs::path &p, const std::string &what) {
    if (!fs::exists(p)) throw Error(ErrorCode::kIo, what + " not found: " + p.string());
}

/// Creates `dir` and refuses to replace any of `files` unless forced.
void prepare_outputs(const fs::path &dir, const std::vector<std::string> &files, bool force) {
    if (!force) {
        for (const auto &f : files) {
            if (fs::exists(dir / f)) {
                throw Error(ErrorCode::kIo, (dir / f).string() + " already exists (pass --force to overwrite)");
            }
        }
    }
    fs::create_directories(dir);
}

fs::path manifest_path(const std::string &data) {
    fs::path p(data);
    if (fs::is_directory(p)) p /= "manifest.json";
    require_exists(p, "dataset manifest");
    return p;
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream f(path);
    if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    f << text;
}

/// Source/target clouds from --sample or --source/--target; the full
/// sample (with ground truth) when it came from a sample directory.
struct Inputs {
    PointCloud source;
    PointCloud target;
    std::optional<SamplePair> sample;
    fs::path sample_dir;
};

void add_input_options(RunConfig &rc, CLI::App &app) {
    rc.add<std::string>(app, "sample", "", "Sample directory (source.ply, target.ply, ground truth)");
    rc.add<std::string>(app, "source", "", "Source point cloud PLY");
    rc.add<std::string>(app, "target", "", "Target point cloud PLY");
}

Inputs load_inputs(const RunConfig &rc) {
    Inputs in;
    const std::string sample = rc.get<std::string>("sample");
    const std::string source = rc.get<std::string>("source");
    const std::string target = rc.get<std::string>("target");
    if (!sample.empty()) {
        if (!source.empty() || !target.empty()) {
            throw Error(ErrorCode::kInvalidArgument, "give either --sample or --source/--target, not both");
        }
        require_exists(sample, "sample directory");
        in.sample_dir = sample;
        in.sample = read_sample(sample);
        in.source = in.sample->source;
        in.target = in.sample->target;
        return in;
    }
    if (source.empty() || target.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "need --sample or both --source and --target");
    }
    require_exists(source, "source cloud");
    require_exists(target, "target cloud");
    in.source = read_point_cloud(source);
    in.target = read_point_cloud(target);
    return in;
}

void add_registration_options(RunConfig &rc, CLI::App &app) {
    const RansacConfig r;
    const IcpConfig i;
    rc.add<int>(app, "ransac-iterations", r.n_iterations, "RANSAC hypotheses");
    rc.add<double>(app, "ransac-threshold-mm", r.inlier_threshold_mm, "RANSAC inlier distance");
    rc.add<int>(app, "icp-iterations", i.max_iterations, "ICP iteration cap");
    rc.add<double>(app, "icp-max-dist-mm", i.max_corr_dist_mm, "ICP correspondence gate");
    rc.add<double>(app, "icp-convergence-mm", i.convergence_mm, "ICP stop when points move less than this");
}

RansacConfig ransac_config(const RunConfig &rc) {
    RansacConfig r;
    r.n_iterations = rc.get<int>("ransac-iterations");
    r.inlier_threshold_mm = rc.get<double>("ransac-threshold-mm");
    r.rng_seed = rc.get<std::uint64_t>("seed");
    r.validate();
    return r;
}

IcpConfig icp_config(const RunConfig &rc) {
    IcpConfig i;
    i.max_iterations = rc.get<int>("icp-iterations");
    i.max_corr_dist_mm = rc.get<double>("icp-max-dist-mm");
    i.convergence_mm = rc.get<double>("icp-convergence-mm");
    i.validate();
    return i;
}

// ---------------------------------------------------------------- gen-data

void register_gen_data(CLI::App &app, RunConfig &rc) {
    const DatasetSpec d;
    add_common(rc, app);
    rc.add<int>(app, "meshes", d.n_meshes, "Number of meshes (ignored with --mesh-files)");
    rc.add<int>(app, "samples", d.samples_per_mesh, "Samples per mesh");
    rc.add<int>(app, "vertices", d.n_vertices, "Vertices per synthetic mesh");
    rc.add<int>(app, "test-meshes", -1, "Meshes held out for testing (-1: one per eight meshes, at least one)");
    rc.add<double>(app, "noise-mm", d.options.noise_max_mm, "Maximum target noise radius");
    rc.add<double>(app, "max-translation-mm", d.options.max_translation_mm, "Maximum rigid translation");
    rc.add<bool>(app, "rigid-motion", d.options.rigid_motion, "Apply a random rigid motion to the target");
    rc.add<std::vector<std::string>>(app, "mesh-files", {}, "PLY surface meshes to use instead of synthetic ones")
        ->delimiter(',');
}

int run_gen_data(const RunConfig &rc) {
    const fs::path out = require_out(rc);
    DatasetSpec spec;
    spec.n_meshes = rc.get<int>("meshes");
    spec.samples_per_mesh = rc.get<int>("samples");
    spec.n_vertices = rc.get<int>("vertices");
    spec.seed = rc.get<std::uint64_t>("seed");
    spec.options.noise_max_mm = rc.get<double>("noise-mm");
    spec.options.max_translation_mm = rc.get<double>("max-translation-mm");
    spec.options.rigid_motion = rc.get<bool>("rigid-motion");
    for (const auto &f : rc.get<std::vector<std::string>>("mesh-files")) {
        require_exists(f, "mesh file");
        spec.mesh_files.emplace_back(f);
    }
    if (spec.samples_per_mesh < 1) throw Error(ErrorCode::kInvalidArgument, "--samples must be >= 1");
    const int n_meshes = spec.mesh_files.empty() ? spec.n_meshes : static_cast<int>(spec.mesh_files.size());
    const int test = rc.get<int>("test-meshes");
    spec.n_test_meshes = test >= 0 ? test : std::max(1, static_cast<int>(std::lround(n_meshes / 8.0)));
    if (n_meshes == 1 && test < 0) spec.n_test_meshes = 0;

    const Manifest m = generate_dataset(out, spec, rc.get<bool>("force"), rc.meta());
    std::cout << "wrote " << m.samples.size() << " samples (" << m.train_meshes.size() << " train meshes, "
              << m.test_meshes.size() << " test meshes) to " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

void register_train(CLI::App &app, RunConfig &rc) {
    const TrainConfig t;
    const NetworkConfig n;
    add_common(rc, app);
    rc.add<std::string>(app, "data", "", "Dataset directory or manifest.json");
    rc.add<int>(app, "epochs", t.epochs, "Training epochs");
    rc.add<int>(app, "batch-size", t.batch_size, "Samples per SGD step");
    rc.add<double>(app, "lr", t.learning_rate, "Learning rate");
    rc.add<double>(app, "lr-decay", t.lr_decay, "Per-epoch learning-rate factor");
    rc.add<double>(app, "max-grad-norm", t.max_grad_norm, "Gradient norm cap per step (0: off)");
    rc.add<double>(app, "focal-alpha", t.focal_alpha, "Focal loss alpha");
    rc.add<double>(app, "focal-gamma", t.focal_gamma, "Focal loss gamma");
    rc.add<int>(app, "d", n.d, "Descriptor width");
    rc.add<int>(app, "hidden", n.hidden, "Encoder hidden width");
    rc.add<int>(app, "k", n.k, "Encoder neighborhood size");
    rc.add<int>(app, "super-points", n.n_super, "Super-points per cloud");
    rc.add<int>(app, "blocks", n.n_blocks, "Self + cross attention blocks");
}

int run_train(const RunConfig &rc) {
    const fs::path out = require_out(rc);
    const std::string data = rc.get<std::string>("data");
    if (data.empty()) throw Error(ErrorCode::kInvalidArgument, "--data is required");
    const fs::path manifest = manifest_path(data);
    prepare_outputs(out, {"checkpoint.bin", "loss.csv", "train.json"}, rc.get<bool>("force"));

    NetworkConfig net;
    net.d = rc.get<int>("d");
    net.hidden = rc.get<int>("hidden");
    net.k = rc.get<int>("k");
    net.n_super = rc.get<int>("super-points");
    net.n_blocks = rc.get<int>("blocks");
    net.validate();

    TrainConfig cfg;
    cfg.epochs = rc.get<int>("epochs");
    cfg.batch_size = rc.get<int>("batch-size");
    cfg.learning_rate = rc.get<double>("lr");
    cfg.lr_decay = rc.get<double>("lr-decay");
    cfg.max_grad_norm = rc.get<double>("max-grad-norm");
    cfg.focal_alpha = rc.get<double>("focal-alpha");
    cfg.focal_gamma = rc.get<double>("focal-gamma");
    const std::uint64_t seed = rc.get<std::uint64_t>("seed");
    cfg.rng_seed = derive_seed(seed, 2);
    cfg.validate();

    const std::vector<TrainingSample> samples = load_training_split(manifest, net);
    const NetworkParams init = NetworkParams::initialize(net, derive_seed(seed, 1));
    std::cout << "training on " << samples.size() << " samples, " << init.parameter_count() << " parameters\n";
    const TrainResult result = train(samples, init, cfg, [](const EpochLog &e) {
        std::cout << "epoch " << e.epoch << "  matching " << e.matching << "  visibility " << e.visibility
                  << "  total " << e.total << std::endl;
    });

    json meta = rc.meta();
    meta["n_samples"] = samples.size();
    meta["manifest"] = manifest.string();
    save_checkpoint(out / "checkpoint.bin", result.params, meta);
    write_loss_csv(out / "loss.csv", result.log);
    json log = json::array();
    for (const auto &e : result.log) {
        log.push_back({{"epoch", e.epoch},
                       {"matching_loss", e.matching},
                       {"visibility_loss", e.visibility},
                       {"total_loss", e.total},
                       {"learning_rate", e.learning_rate}});
    }
    write_json(out / "train.json",
               {{"meta", meta}, {"network", to_json(net)}, {"training", to_json(cfg)}, {"epochs", log}});
    return 0;
}

// ---------------------------------------------------------------- match

void register_match(CLI::App &app, RunConfig &rc) {
    add_common(rc, app);
    add_input_options(rc, app);
    rc.add<std::string>(app, "checkpoint", "", "Trained network checkpoint");
    rc.add<std::string>(app, "method", "learned", "learned, gt or random");
}

int run_match(const RunConfig &rc) {
    const fs::path out = require_out(rc);
    const MatchMethod method = parse_method(rc.get<std::string>("method"));
    const std::string ck = rc.get<std::string>("checkpoint");
    if (method == MatchMethod::kFpfh) {
        throw Error(ErrorCode::kInvalidArgument,
                    "fpfh matches refer to voxelized clouds and are only available through eval");
    }
    if (method == MatchMethod::kLearned) {
        if (ck.empty()) throw Error(ErrorCode::kInvalidArgument, "--checkpoint is required for the learned method");
        require_exists(ck, "checkpoint");
    }
    const Inputs in = load_inputs(rc);
    prepare_outputs(out, {"matches.json"}, rc.get<bool>("force"));

    json meta = rc.meta();
    meta["n_source"] = in.source.size();
    meta["n_target"] = in.target.size();
    MatchResult result;
    if (method == MatchMethod::kLearned) {
        const NetworkParams params = load_checkpoint(ck);
        meta["checkpoint"] = read_checkpoint_header(ck);
        result = match(in.source, in.target, params);
    } else {
        if (method == MatchMethod::kGroundTruth && !in.sample) {
            throw Error(ErrorCode::kInvalidArgument, "the gt method needs --sample");
        }
        SamplePair pair;
        if (in.sample) {
            pair = *in.sample;
        } else {
            pair.source = in.source;
            pair.target = in.target;
        }
        BenchmarkConfig bc;
        result.matches = run_matcher(method, pair, bc, nullptr, rc.get<std::uint64_t>("seed")).matches;
        result.match_confidence.assign(result.matches.size(), 1.0);
    }
    write_matches_json(out / "matches.json", result, meta);
    std::cout << result.matches.size() << " matches written to " << (out / "matches.json").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- register

void register_register(CLI::App &app, RunConfig &rc) {
    add_common(rc, app);
    add_input_options(rc, app);
    rc.add<std::string>(app, "matches", "", "matches.json (default: the sample's ground-truth matches)");
    add_registration_options(rc, app);
}

int run_register(const RunConfig &rc) {
    const fs::path out = require_out(rc);
    const Inputs in = load_inputs(rc);
    fs::path matches_path = rc.get<std::string>("matches");
    if (matches_path.empty()) {
        if (!in.sample) throw Error(ErrorCode::kInvalidArgument, "--matches is required without --sample");
        matches_path = in.sample_dir / "matches.json";
    }
    require_exists(matches_path, "matches file");
    const CorrespondenceSet matches = read_matches_json(matches_path);
    matches.validate(in.source.size(), in.target.size());
    const RansacConfig ransac = ransac_config(rc);
    const IcpConfig icp = icp_config(rc);
    prepare_outputs(out, {"transform.json", "registration.json"}, rc.get<bool>("force"));

    const RegistrationResult r = register_pair(matches, in.source, in.target, ransac, icp);
    const json meta = rc.meta();
    json transform = transform_to_json(r.transform);
    transform["meta"] = meta;
    write_json(out / "transform.json", transform);

    json report = to_json(r);
    report["meta"] = meta;
    report["n_matches"] = matches.size();
    report["rotation_det"] = r.transform.rotation.determinant();
    if (in.sample) {
        report["re_mm"] = registration_error(in.sample->gt_displacement, predicted_displacements(in.source, r.transform));
    }
    write_json(out / "registration.json", report);
    std::cout << (r.success ? "registered" : "registration failed") << ", det(R) = " << report["rotation_det"];
    if (report.contains("re_mm")) std::cout << ", RE = " << report["re_mm"].get<double>() << " mm";
    std::cout << "\n";
    return 0;
}

// ---------------------------------------------------------------- eval

void register_eval(CLI::App &app, RunConfig &rc) {
    add_common(rc, app);
    rc.add<std::string>(app, "data", "", "Dataset directory or manifest.json");
    rc.add<std::string>(app, "split", "test", "Manifest split to evaluate");
    rc.add<std::vector<std::string>>(app, "methods", {"learned", "fpfh", "gt"}, "Comma-separated methods")
        ->delimiter(',');
    rc.add<std::string>(app, "checkpoint", "", "Checkpoint for the learned method");
    rc.add<std::vector<double>>(app, "sigma-mm", MetricConfig{}.sigma_mm, "Comma-separated inlier radii")
        ->delimiter(',');
    rc.add<int>(app, "max-samples", -1, "Evaluate at most this many samples (-1: all)");
    rc.add<double>(app, "fpfh-voxel-mm", FpfhConfig{}.voxel_mm, "FPFH voxel size");
    add_registration_options(rc, app);
}

int run_eval(const RunConfig &rc) {
    const fs::path out = require_out(rc);
    const std::string data = rc.get<std::string>("data");
    if (data.empty()) throw Error(ErrorCode::kInvalidArgument, "--data is required");
    const fs::path manifest = manifest_path(data);

    BenchmarkConfig bc;
    bc.methods.clear();
    for (const auto &m : rc.get<std::vector<std::string>>("methods")) bc.methods.push_back(parse_method(m));
    if (bc.methods.empty()) throw Error(ErrorCode::kInvalidArgument, "--methods is empty");
    bc.metrics.sigma_mm = rc.get<std::vector<double>>("sigma-mm");
    bc.metrics.validate();
    bc.ransac = ransac_config(rc);
    bc.icp = icp_config(rc);
    bc.fpfh.voxel_mm = rc.get<double>("fpfh-voxel-mm");
    bc.seed = rc.get<std::uint64_t>("seed");

    std::optional<NetworkParams> params;
    const std::string ck = rc.get<std::string>("checkpoint");
    const bool wants_learned =
        std::find(bc.methods.begin(), bc.methods.end(), MatchMethod::kLearned) != bc.methods.end();
    if (wants_learned) {
        if (ck.empty()) throw Error(ErrorCode::kInvalidArgument, "--checkpoint is required for the learned method");
        require_exists(ck, "checkpoint");
        params = load_checkpoint(ck);
    }
    prepare_outputs(out, {"report.json", "tables.txt", "samples.csv"}, rc.get<bool>("force"));

    const auto samples = load_benchmark_split(manifest, rc.get<std::string>("split"), rc.get<int>("max-samples"));
    BenchmarkReport report = run_benchmark(samples, bc, params ? &*params : nullptr);
    report.meta = rc.meta();
    report.meta["manifest"] = manifest.string();
    if (wants_learned) report.meta["checkpoint"] = read_checkpoint_header(ck);

    write_json(out / "report.json", to_json(report));
    const std::string tables = format_tables(report);
    write_text(out / "tables.txt", tables);
    write_sample_csv(out / "samples.csv", report);
    std::cout << tables;
    return 0;
}

// ---------------------------------------------------------------- export-vis

constexpr Rgb kGray{128, 128, 128};

/// Saturated color for match number `k`; never gray.
Rgb match_color(std::size_t k, std::size_t count) {
    const double h = 6.0 * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(count, 1));
    const double f = h - std::floor(h);
    const auto c = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * v)); };
    switch (static_cast<int>(h) % 6) {
        case 0: return {255, c(f), 0};
        case 1: return {c(1 - f), 255, 0};
        case 2: return {0, 255, c(f)};
        case 3: return {0, c(1 - f), 255};
        case 4: return {c(f), 0, 255};
        default: return {255, 0, c(1 - f)};
    }
}

void register_export_vis(CLI::App &app, RunConfig &rc) {
    add_common(rc, app);
    add_input_options(rc, app);
    rc.add<std::string>(app, "matches", "", "matches.json (default: the sample's ground-truth matches)");
    rc.add<std::string>(app, "transform", "", "transform.json; adds the registered source cloud");
}

int run_export_vis(const RunConfig &rc) {
    const fs::path out = require_out(rc);
    const Inputs in = load_inputs(rc);
    fs::path matches_path = rc.get<std::string>("matches");
    if (matches_path.empty()) {
        if (!in.sample) throw Error(ErrorCode::kInvalidArgument, "--matches is required without --sample");
        matches_path = in.sample_dir / "matches.json";
    }
    require_exists(matches_path, "matches file");
    const CorrespondenceSet matches = read_matches_json(matches_path);
    matches.validate(in.source.size(), in.target.size());
    const std::string transform_path = rc.get<std::string>("transform");
    if (!transform_path.empty()) require_exists(transform_path, "transform file");
    std::vector<std::string> files{"source_vis.ply", "target_vis.ply", "match_lines.ply", "vis.json"};
    if (!transform_path.empty()) files.push_back("source_registered.ply");
    prepare_outputs(out, files, rc.get<bool>("force"));

    PlyData src{in.source.points, {}, std::vector<Rgb>(in.source.size(), kGray), {}, {}};
    PlyData tgt{in.target.points, {}, std::vector<Rgb>(in.target.size(), kGray), {}, {}};
    PlyData lines;
    for (std::size_t k = 0; k < matches.size(); ++k) {
        const auto &c = matches.pairs[k];
        const Rgb color = match_color(k, matches.size());
        src.colors[c.source] = color;
        tgt.colors[c.target] = color;
        const int base = static_cast<int>(lines.vertices.size());
        lines.vertices.push_back(in.source[c.source]);
        lines.vertices.push_back(in.target[c.target]);
        lines.colors.push_back(color);
        lines.colors.push_back(color);
        lines.edges.emplace_back(base, base + 1);
    }
    write_ply(out / "source_vis.ply", src);
    write_ply(out / "target_vis.ply", tgt);
    write_ply(out / "match_lines.ply", lines);
    if (!transform_path.empty()) {
        const RigidTransform t = transform_from_json(read_json(transform_path));
        PlyData reg = src;
        for (auto &p : reg.vertices) p = t.apply(p);
        write_ply(out / "source_registered.ply", reg);
    }
    write_json(out / "vis.json", {{"meta", rc.meta()},
                                  {"n_matches", matches.size()},
                                  {"n_source", in.source.size()},
                                  {"n_target", in.target.size()}});
    std::cout << matches.size() << " matches exported to " << out.string() << "\n";
    return 0;
}

void print_error(const std::string &code, const std::string &message) {
    std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
}

}  // namespace
}  // namespace surfmatch::cli

int main(int argc, char **argv) {
    using namespace surfmatch::cli;
    CLI::App app{"Surface point cloud matching and registration"};
    app.require_subcommand(1);

    struct Command {
        std::string name;
        std::string help;
        void (*setup)(CLI::App &, RunConfig &);
        int (*run)(const RunConfig &);
    };
    const std::vector<Command> commands{
        {"gen-data", "Generate a synthetic dataset", register_gen_data, run_gen_data},
        {"train", "Train the matching network", register_train, run_train},
        {"match", "Match one source/target pair", register_match, run_match},
        {"register", "Rigidly register one pair from matches", register_register, run_register},
        {"eval", "Benchmark matching methods on a dataset split", register_eval, run_eval},
        {"export-vis", "Write colored PLY files of matches", register_export_vis, run_export_vis},
    };
    std::vector<std::unique_ptr<RunConfig>> configs;
    std::vector<CLI::App *> subs;
    for (const auto &c : commands) {
        configs.push_back(std::make_unique<RunConfig>(c.name));
        subs.push_back(app.add_subcommand(c.name, c.help));
        c.setup(*subs.back(), *configs.back());
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        print_error("invalid_argument", e.what());
        return 2;
    }

    try {
        for (std::size_t i = 0; i < commands.size(); ++i) {
            if (!subs[i]->parsed()) continue;
            configs[i]->resolve();
            return commands[i].run(*configs[i]);
        }
    } catch (const surfmatch::Error &e) {
        print_error(surfmatch::error_code_name(e.code()), e.what());
        return 1;
    } catch (const std::exception &e) {
        print_error("internal", e.what());
        return 1;
    }
    return 1;
}
