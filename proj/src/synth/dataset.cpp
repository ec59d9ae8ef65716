#include "surfmatch/synth/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "surfmatch/error.hpp"
#include "surfmatch/geom/ply.hpp"
#include "surfmatch/geom/random.hpp"

namespace surfmatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string padded(int value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*d", width, value);
    return buf;
}

json options_json(const SampleOptions &o) {
    return {{"noise_max_mm", o.noise_max_mm},
            {"max_translation_mm", o.max_translation_mm},
            {"random_rotation", o.random_rotation},
            {"rigid_motion", o.rigid_motion},
            {"ratio_range", {o.ratio.lo, o.ratio.hi}}};
}

SampleOptions options_from_json(const json &j) {
    SampleOptions o;
    o.noise_max_mm = j.at("noise_max_mm").get<double>();
    o.max_translation_mm = j.at("max_translation_mm").get<double>();
    o.random_rotation = j.at("random_rotation").get<bool>();
    o.rigid_motion = j.at("rigid_motion").get<bool>();
    o.ratio.lo = j.at("ratio_range").at(0).get<double>();
    o.ratio.hi = j.at("ratio_range").at(1).get<double>();
    return o;
}

}  // namespace

json read_json(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
    }
}

void write_json(const fs::path &path, const json &j) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

json to_json(const DeformationParams &p) {
    return {{"n_force_sites", p.n_force_sites},
            {"force_region_radius_mm", p.force_region_radius_mm},
            {"n_boundary_regions", p.n_boundary_regions},
            {"boundary_radius_mm", p.boundary_radius_mm},
            {"boundary_ramp_mm", p.boundary_ramp_mm},
            {"max_displacement_target_mm", p.max_displacement_target_mm},
            {"youngs_modulus_kpa", p.youngs_modulus_kpa},
            {"poisson_ratio", p.poisson_ratio},
            {"max_force_n", p.max_force_n}};
}

DeformationParams deformation_params_from_json(const json &j) {
    DeformationParams p;
    p.n_force_sites = j.at("n_force_sites").get<int>();
    p.force_region_radius_mm = j.at("force_region_radius_mm").get<double>();
    p.n_boundary_regions = j.at("n_boundary_regions").get<int>();
    p.boundary_radius_mm = j.at("boundary_radius_mm").get<double>();
    p.boundary_ramp_mm = j.at("boundary_ramp_mm").get<double>();
    p.max_displacement_target_mm = j.at("max_displacement_target_mm").get<double>();
    p.youngs_modulus_kpa = j.at("youngs_modulus_kpa").get<double>();
    p.poisson_ratio = j.at("poisson_ratio").get<double>();
    p.max_force_n = j.at("max_force_n").get<double>();
    return p;
}

void write_sample(const fs::path &dir, const SamplePair &pair, const SampleMeta &meta,
                  const json &run_config) {
    fs::create_directories(dir);
    write_point_cloud(dir / "source.ply", pair.source);
    write_point_cloud(dir / "target.ply", pair.target);

    json m = {{"version", kDatasetVersion},
              {"id", meta.id},
              {"mesh_id", meta.mesh_id},
              {"seed", meta.seed},
              {"params", to_json(meta.params)},
              {"options", options_json(meta.options)},
              {"rigid", pair.rigid.to_row_major()},
              {"visibility_ratio", pair.visibility_ratio},
              {"n_source", pair.n()},
              {"n_target", pair.m()},
              {"config", run_config}};
    write_json(dir / "meta.json", m);

    json matches = json::array();
    for (const auto &c : pair.gt_matches.pairs) matches.push_back({c.source, c.target});
    write_json(dir / "matches.json", matches);

    json disp = json::array();
    for (const auto &v : pair.gt_displacement) disp.push_back({v.x(), v.y(), v.z()});
    write_json(dir / "displacement.json", disp);
}

SampleMeta read_sample_meta(const fs::path &dir) {
    const json m = read_json(dir / "meta.json");
    SampleMeta meta;
    try {
        meta.id = m.at("id").get<std::string>();
        meta.mesh_id = m.at("mesh_id").get<int>();
        meta.seed = m.at("seed").get<std::uint64_t>();
        meta.params = deformation_params_from_json(m.at("params"));
        meta.options = options_from_json(m.at("options"));
    } catch (const json::exception &e) {
        throw Error(ErrorCode::kFormat, (dir / "meta.json").string() + ": " + e.what());
    }
    return meta;
}

SamplePair read_sample(const fs::path &dir) {
    SamplePair pair;
    pair.source = read_point_cloud(dir / "source.ply");
    pair.target = read_point_cloud(dir / "target.ply");
    const json meta = read_json(dir / "meta.json");
    const json matches = read_json(dir / "matches.json");
    const json disp = read_json(dir / "displacement.json");
    try {
        pair.rigid = RigidTransform::from_row_major(meta.at("rigid").get<std::vector<double>>());
        pair.visibility_ratio = meta.at("visibility_ratio").get<double>();
        for (const auto &p : matches) pair.gt_matches.pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
        for (const auto &v : disp) pair.gt_displacement.emplace_back(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
    } catch (const json::exception &e) {
        throw Error(ErrorCode::kFormat, dir.string() + ": " + e.what());
    }
    if (pair.gt_displacement.size() != pair.n()) {
        throw Error(ErrorCode::kFormat, dir.string() + ": displacement count differs from source size");
    }
    pair.gt_matches.validate(pair.n(), pair.m());
    pair.visibility.assign(pair.n(), 0);
    for (const auto &c : pair.gt_matches.pairs) pair.visibility[c.source] = 1;
    const RigidTransform inv = pair.rigid.inverse();
    pair.deformation.resize(pair.n());
    for (std::size_t i = 0; i < pair.n(); ++i) {
        const Vec3 &s = pair.source[i];
        pair.deformation[i] = inv.apply(s + pair.gt_displacement[i]) - s;
    }
    return pair;
}

void Manifest::check_split() const {
    const std::set<int> train(train_meshes.begin(), train_meshes.end());
    for (int t : test_meshes) {
        if (train.count(t)) {
            throw Error(ErrorCode::kSplitLeakage,
                        "mesh " + std::to_string(t) + " appears in both train and test splits");
        }
    }
    const std::set<int> test(test_meshes.begin(), test_meshes.end());
    for (const auto &s : samples) {
        const bool ok = (s.split == "train" && train.count(s.mesh_id)) ||
                        (s.split == "test" && test.count(s.mesh_id));
        if (!ok) {
            throw Error(ErrorCode::kSplitLeakage,
                        "sample " + s.id + " (mesh " + std::to_string(s.mesh_id) + ") is assigned to '" +
                            s.split + "' but its mesh is not in that split");
        }
    }
}

std::vector<ManifestEntry> Manifest::split(const std::string &name) const {
    std::vector<ManifestEntry> out;
    for (const auto &s : samples) {
        if (s.split == name) out.push_back(s);
    }
    return out;
}

void write_manifest(const fs::path &path, const Manifest &manifest) {
    json samples = json::array();
    for (const auto &s : manifest.samples) {
        samples.push_back({{"id", s.id}, {"path", s.path}, {"mesh_id", s.mesh_id}, {"split", s.split}, {"seed", s.seed}});
    }
    write_json(path, {{"version", manifest.version},
                      {"samples", samples},
                      {"train_meshes", manifest.train_meshes},
                      {"test_meshes", manifest.test_meshes},
                      {"config", manifest.config}});
}

Manifest read_manifest(const fs::path &path) {
    if (!fs::exists(path)) throw Error(ErrorCode::kIo, "manifest not found: " + path.string());
    const json j = read_json(path);
    Manifest m;
    try {
        m.version = j.at("version").get<int>();
        if (m.version != kDatasetVersion) {
            throw Error(ErrorCode::kVersionMismatch, "manifest version " + std::to_string(m.version) +
                                                         ", expected " + std::to_string(kDatasetVersion));
        }
        for (const auto &s : j.at("samples")) {
            m.samples.push_back({s.at("id").get<std::string>(), s.at("path").get<std::string>(),
                                 s.at("mesh_id").get<int>(), s.at("split").get<std::string>(),
                                 s.at("seed").get<std::uint64_t>()});
        }
        m.train_meshes = j.at("train_meshes").get<std::vector<int>>();
        m.test_meshes = j.at("test_meshes").get<std::vector<int>>();
        if (j.contains("config")) m.config = j.at("config");
    } catch (const json::exception &e) {
        throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
    }
    return m;
}

SurfaceMesh read_mesh(const fs::path &path) {
    PlyData data = read_ply(path);
    if (data.faces.empty()) throw Error(ErrorCode::kFormat, path.string() + ": mesh has no faces");
    SurfaceMesh mesh{std::move(data.vertices), std::move(data.faces)};
    mesh.validate();
    return mesh;
}

std::uint64_t sample_seed(std::uint64_t dataset_seed, int mesh_id, int s) {
    return derive_seed(derive_seed(dataset_seed, 1000 + static_cast<std::uint64_t>(mesh_id)),
                       static_cast<std::uint64_t>(s));
}

Manifest generate_dataset(const fs::path &out, const DatasetSpec &spec, bool force, const json &run_config) {
    const int n_meshes = spec.mesh_files.empty() ? spec.n_meshes : static_cast<int>(spec.mesh_files.size());
    if (n_meshes < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one mesh");
    if (spec.samples_per_mesh < 1) throw Error(ErrorCode::kInvalidArgument, "samples per mesh must be >= 1");
    if (spec.n_test_meshes < 0 || spec.n_test_meshes >= n_meshes) {
        throw Error(ErrorCode::kInvalidArgument, "test mesh count must leave at least one training mesh");
    }

    if (fs::exists(out) && !fs::is_empty(out)) {
        if (!force) {
            throw Error(ErrorCode::kIo, "output directory " + out.string() +
                                            " is not empty (pass --force to overwrite)");
        }
        fs::remove_all(out / "samples");
        fs::remove_all(out / "meshes");
        fs::remove(out / "manifest.json");
    }
    fs::create_directories(out / "meshes");

    Manifest manifest;
    manifest.config = run_config;
    for (int mesh_id = 0; mesh_id < n_meshes; ++mesh_id) {
        const bool test = mesh_id >= n_meshes - spec.n_test_meshes;
        (test ? manifest.test_meshes : manifest.train_meshes).push_back(mesh_id);

        const SurfaceMesh mesh = spec.mesh_files.empty()
                                     ? generate_liver_mesh(derive_seed(spec.seed, mesh_id), spec.n_vertices)
                                     : read_mesh(spec.mesh_files[mesh_id]);
        PlyData ply;
        ply.vertices = mesh.vertices;
        ply.faces = mesh.faces;
        write_ply(out / "meshes" / ("mesh_" + padded(mesh_id, 3) + ".ply"), ply);

        for (int s = 0; s < spec.samples_per_mesh; ++s) {
            SampleMeta meta;
            meta.id = "mesh_" + padded(mesh_id, 3) + "_sample_" + padded(s, 4);
            meta.mesh_id = mesh_id;
            meta.seed = sample_seed(spec.seed, mesh_id, s);
            meta.params = sample_deformation_params(derive_seed(meta.seed, 99));
            meta.options = spec.options;
            const SamplePair pair = make_sample_pair(mesh, meta.params, meta.seed, spec.options);
            const std::string rel = "samples/" + meta.id;
            write_sample(out / rel, pair, meta, run_config);
            manifest.samples.push_back({meta.id, rel, mesh_id, test ? "test" : "train", meta.seed});
        }
    }
    manifest.check_split();
    write_manifest(out / "manifest.json", manifest);
    return manifest;
}

}  // namespace surfmatch
