#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "surfmatch/geom/types.hpp"
#include "surfmatch/net/tape.hpp"

namespace surfmatch {

struct NetworkConfig {
    int d = 64;          // descriptor / attention width
    int hidden = 64;     // encoder hidden width
    int k = 16;          // encoder neighborhood size
    int n_super = 256;   // super-points per cloud
    int n_blocks = 1;    // self + cross attention blocks
    double visibility_bias_init = 0.5;

    void validate() const;
};

nlohmann::json to_json(const NetworkConfig &c);
NetworkConfig network_config_from_json(const nlohmann::json &j);

/// Named parameter arrays in a fixed order. Matrices map inputs to outputs
/// as x W^T + b, so W is (out x in) and b is (1 x out).
///
///   enc.w1 enc.b1 enc.w2 enc.b2
///   block<i>.self.{wq,wk,wv,fc_w,fc_b}  block<i>.cross.{wq,wk,wv,fc_w,fc_b}
///   refine.w refine.b  desc.w desc.b  vis.w vis.b
struct NetworkParams {
    NetworkConfig config;
    std::uint64_t seed = 0;
    std::vector<std::string> names;
    std::vector<Eigen::MatrixXd> arrays;
    /// Fixed standardization of raw features, (raw - mean) / scale. Not
    /// trained; see fit_input_normalization().
    Eigen::RowVectorXd input_mean;
    Eigen::RowVectorXd input_scale;

    /// Every array uniform in [-1/sqrt(d), 1/sqrt(d)], except vis.b which
    /// starts at config.visibility_bias_init.
    static NetworkParams initialize(const NetworkConfig &config, std::uint64_t seed);

    int index_of(const std::string &name) const;
    const Eigen::MatrixXd &at(const std::string &name) const { return arrays[index_of(name)]; }
    Eigen::MatrixXd &at(const std::string &name) { return arrays[index_of(name)]; }
    std::size_t parameter_count() const;
    bool all_finite() const;

    Eigen::MatrixXd normalize_inputs(const Eigen::MatrixXd &raw) const;
};

/// Sets input_mean / input_scale to the per-column mean and standard
/// deviation over all rows of `raw_blocks` (scale 1 where the deviation is
/// below 1e-9).
void fit_input_normalization(NetworkParams &params, const std::vector<const Eigen::MatrixXd *> &raw_blocks);

/// Same shapes as NetworkParams::arrays.
using GradientSet = std::vector<Eigen::MatrixXd>;

struct AttentionParams {
    Eigen::MatrixXd wq, wk, wv;  // d x d
    Eigen::MatrixXd fc_w;        // d x 2d
    Eigen::MatrixXd fc_b;        // 1 x d
};

/// kind is "self" or "cross".
AttentionParams attention_params(const NetworkParams &p, int block, const std::string &kind);

struct VisibilityScores {
    Eigen::VectorXd score;           // clamped to [0,1]
    std::vector<std::uint8_t> mask;  // score > 0.9
};

inline constexpr double kVisibilityThreshold = 0.9;

/// Raw per-point features (n x kRawFeatureWidth) through the encoder MLP.
Eigen::MatrixXd encode_local_features(const PointCloud &cloud, int k, const NetworkParams &params);

Eigen::MatrixXd self_attention(const Eigen::MatrixXd &x, const AttentionParams &p);

/// Returns (updated source, updated target); both read the inputs before update.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> cross_attention(const Eigen::MatrixXd &x_s, const Eigen::MatrixXd &x_t,
                                                            const AttentionParams &p);

/// Head output x_s w^T + b, clamped and thresholded.
VisibilityScores decode_visibility(const Eigen::MatrixXd &x_s, const Eigen::MatrixXd &w, const Eigen::MatrixXd &b);
VisibilityScores visibility_from_raw(const Eigen::VectorXd &raw);

Eigen::MatrixXd score_matrix(const Eigen::MatrixXd &x_s, const Eigen::MatrixXd &x_t);
Eigen::MatrixXd dual_softmax(const Eigen::MatrixXd &scores);

/// (i,j) kept when M(i,j) is the maximum of its row and of its column, the
/// first maximum by index in each case.
CorrespondenceSet mutual_nn_select(const Eigen::MatrixXd &confidence);
CorrespondenceSet apply_visibility_mask(const CorrespondenceSet &matches, const std::vector<std::uint8_t> &mask);

/// Geometry-only preprocessing of one cloud, reusable across parameter updates.
struct PreparedCloud {
    Eigen::MatrixXd raw;           // local_geometry_features
    std::vector<int> super;        // super-point indices into the cloud
    std::vector<int> attach;       // per point, position in `super`
};

PreparedCloud prepare_cloud(const PointCloud &cloud, const NetworkConfig &config);

/// Tape handles for every parameter array, in NetworkParams order.
struct ParamVars {
    std::vector<ad::Var> vars;
    const NetworkParams *params = nullptr;
    ad::Var operator[](const std::string &name) const { return vars[params->index_of(name)]; }
};

ParamVars record_params(ad::Tape &tape, const NetworkParams &params, bool trainable);

struct ForwardVars {
    ad::Var desc_s, desc_t;   // n x d, m x d
    ad::Var scores;           // n x m
    ad::Var confidence;       // n x m, dual softmax
    ad::Var visibility_raw;   // n x 1, before clamping
    ad::Var visibility;       // n x 1
};

ForwardVars record_forward(ad::Tape &tape, const ParamVars &p, const PreparedCloud &s, const PreparedCloud &t);

struct MatchResult {
    CorrespondenceSet matches;        // mutual NN, visibility-masked
    std::vector<double> match_confidence;
    Eigen::MatrixXd confidence;
    VisibilityScores visibility;
};

MatchResult match(const PointCloud &source, const PointCloud &target, const NetworkParams &params);
MatchResult match_prepared(const PreparedCloud &source, const PreparedCloud &target, const NetworkParams &params);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: magic "SMNP", u32 version, u64 header length, JSON
/// header (config, seed, array names and shapes, `extra`), then every array
/// as little-endian doubles in column-major order, then the input mean and
/// scale rows.
void save_checkpoint(const std::filesystem::path &path, const NetworkParams &params,
                     const nlohmann::json &extra = nlohmann::json::object());
/// Throws kVersionMismatch for another container version, kFormat for
/// anything malformed.
NetworkParams load_checkpoint(const std::filesystem::path &path);
nlohmann::json read_checkpoint_header(const std::filesystem::path &path);

/// {"meta": ..., "matches": [[s, t], ...], "confidence": [...]}
void write_matches_json(const std::filesystem::path &path, const MatchResult &result,
                        const nlohmann::json &meta = nlohmann::json::object());
/// Accepts the object above or a bare [[s, t], ...] array.
CorrespondenceSet read_matches_json(const std::filesystem::path &path);

}  // namespace surfmatch
