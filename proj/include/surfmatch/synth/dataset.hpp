#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "surfmatch/synth/sample.hpp"

namespace surfmatch {

inline constexpr int kDatasetVersion = 1;

struct SampleMeta {
    std::string id;
    int mesh_id = 0;
    std::uint64_t seed = 0;
    DeformationParams params;
    SampleOptions options;
};

struct ManifestEntry {
    std::string id;
    std::string path;  // relative to the manifest's directory
    int mesh_id = 0;
    std::string split;  // "train" or "test"
    std::uint64_t seed = 0;
};

struct Manifest {
    int version = kDatasetVersion;
    std::vector<ManifestEntry> samples;
    std::vector<int> train_meshes;
    std::vector<int> test_meshes;
    nlohmann::json config = nlohmann::json::object();

    /// Throws kSplitLeakage if a mesh id appears in both splits, or a sample's
    /// split disagrees with its mesh's split.
    void check_split() const;

    std::vector<ManifestEntry> split(const std::string &name) const;
};

struct DatasetSpec {
    int n_meshes = 16;
    int samples_per_mesh = 10;
    int n_vertices = 1500;
    int n_test_meshes = 2;
    std::uint64_t seed = 0;
    SampleOptions options;
    /// External PLY surfaces used instead of synthetic meshes when non-empty.
    std::vector<std::filesystem::path> mesh_files;
};

nlohmann::json to_json(const DeformationParams &p);
DeformationParams deformation_params_from_json(const nlohmann::json &j);

void write_sample(const std::filesystem::path &dir, const SamplePair &pair, const SampleMeta &meta,
                  const nlohmann::json &run_config = nlohmann::json::object());
SamplePair read_sample(const std::filesystem::path &dir);
SampleMeta read_sample_meta(const std::filesystem::path &dir);

void write_manifest(const std::filesystem::path &path, const Manifest &manifest);
Manifest read_manifest(const std::filesystem::path &path);

/// Loads a surface mesh from PLY (faces required).
SurfaceMesh read_mesh(const std::filesystem::path &path);

/// Generates meshes and samples under `out` and returns the manifest it wrote.
/// The last `n_test_meshes` mesh ids form the test split. Refuses to write
/// into a non-empty directory unless `force`.
Manifest generate_dataset(const std::filesystem::path &out, const DatasetSpec &spec, bool force,
                          const nlohmann::json &run_config = nlohmann::json::object());

/// Seed used for sample `s` of mesh `mesh_id`.
std::uint64_t sample_seed(std::uint64_t dataset_seed, int mesh_id, int s);

/// JSON helpers shared with other modules.
nlohmann::json read_json(const std::filesystem::path &path);
void write_json(const std::filesystem::path &path, const nlohmann::json &j);

}  // namespace surfmatch
