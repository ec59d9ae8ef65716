#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "surfmatch/eval/metrics.hpp"
#include "surfmatch/fpfh/fpfh.hpp"
#include "surfmatch/net/model.hpp"
#include "surfmatch/reg/registration.hpp"
#include "surfmatch/synth/sample.hpp"

namespace surfmatch {

enum class MatchMethod {
    kLearned,      // the trained network
    kFpfh,         // FPFH descriptors + mutual nearest neighbors on voxelized clouds
    kGroundTruth,  // the generator's correspondences
    kRandom,       // each target point paired with a random distinct source point
};

const char *method_name(MatchMethod m);
MatchMethod parse_method(const std::string &name);

struct BenchmarkConfig {
    std::vector<MatchMethod> methods{MatchMethod::kLearned, MatchMethod::kFpfh, MatchMethod::kGroundTruth};
    MetricConfig metrics;
    RansacConfig ransac;
    IcpConfig icp;
    FpfhConfig fpfh;
    std::uint64_t seed = 0;
};

struct BenchmarkSample {
    std::string id;
    SamplePair pair;
};

/// Matches of one method on one sample, in the index space of the raw clouds
/// when `index_space` holds. FPFH matches live on voxelized copies instead,
/// so IR and MS are not defined for it.
struct MethodMatches {
    CorrespondenceSet matches;
    bool index_space = true;
    PointCloud source_used;  // clouds the matches refer to
    PointCloud target_used;
    double feature_seconds = 0.0;
};

MethodMatches run_matcher(MatchMethod method, const SamplePair &pair, const BenchmarkConfig &config,
                          const NetworkParams *learned, std::uint64_t sample_seed);

struct SampleRecord {
    std::string id;
    std::string method;
    int n_predicted = 0;
    std::vector<std::optional<double>> ir;  // per sigma; nullopt when undefined
    std::vector<std::optional<double>> ms;  // per sigma; nullopt when not applicable
    double re_mm = 0.0;
    double feature_seconds = 0.0;
    bool registration_success = false;
    std::string failure;
};

struct Stat {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for fewer than two values
    int count = 0;
};

Stat summarize(const std::vector<double> &values);

struct MethodSummary {
    std::string method;
    int n_samples = 0;
    int n_failures = 0;
    std::vector<Stat> ir;  // per sigma, over samples where IR is defined
    std::vector<Stat> ms;  // per sigma
    Stat re_mm;
    Stat feature_seconds;
};

struct BenchmarkReport {
    std::vector<double> sigma_mm;
    int n_samples = 0;
    std::vector<MethodSummary> methods;
    std::vector<SampleRecord> samples;
    nlohmann::json meta = nlohmann::json::object();
};

BenchmarkReport run_benchmark(const std::vector<BenchmarkSample> &samples, const BenchmarkConfig &config,
                              const NetworkParams *learned = nullptr);

/// Recomputes the per-method summaries from the per-sample records.
std::vector<MethodSummary> aggregate(const std::vector<SampleRecord> &records, const std::vector<std::string> &methods,
                                     std::size_t n_sigma);

nlohmann::json to_json(const BenchmarkReport &r);
BenchmarkReport benchmark_report_from_json(const nlohmann::json &j);

/// Inlier-ratio / match-score table over sigma, then registration error and
/// feature-extraction time per method.
std::string format_tables(const BenchmarkReport &r);

void write_sample_csv(const std::filesystem::path &path, const BenchmarkReport &r);

/// Samples of one split of a generated dataset.
std::vector<BenchmarkSample> load_benchmark_split(const std::filesystem::path &manifest_path,
                                                  const std::string &split = "test", int max_samples = -1);

}  // namespace surfmatch
