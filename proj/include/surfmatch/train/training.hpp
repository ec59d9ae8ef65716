#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "surfmatch/net/model.hpp"
#include "surfmatch/synth/sample.hpp"

namespace surfmatch {

inline constexpr double kLogEpsilon = 1e-12;

struct TrainConfig {
    int epochs = 35;
    int batch_size = 1;
    double learning_rate = 0.2;
    double lr_decay = 0.95;  // multiplied in once per epoch
    std::uint64_t rng_seed = 0;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    /// Fit the raw-feature standardization on the training samples first.
    bool fit_normalization = true;
    /// Rescale each step's gradient to at most this global L2 norm; 0 disables.
    double max_grad_norm = 2.0;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig &c);

/// -(1/m) sum over gt pairs of alpha (1-M)^gamma log M, M floored at 1e-12.
/// Throws kEmptyResult for an empty gt set.
double focal_loss(const Eigen::MatrixXd &confidence, const CorrespondenceSet &gt, double alpha = 0.25,
                  double gamma = 2.0);

/// Mean binary cross entropy, predictions clipped to [1e-12, 1 - 1e-12].
double visibility_loss(const Eigen::VectorXd &scores, const std::vector<std::uint8_t> &labels);

inline double total_loss(double matching, double visibility) { return matching + visibility; }

struct LossBreakdown {
    double matching = 0.0;
    double visibility = 0.0;
    double total = 0.0;
};

/// A sample with its geometry preprocessing done once.
struct TrainingSample {
    std::string id;
    PreparedCloud source;
    PreparedCloud target;
    std::vector<Correspondence> gt;
    std::vector<double> visibility_labels;
};

TrainingSample prepare_training_sample(const SamplePair &pair, const NetworkConfig &config, std::string id = {});

struct BackwardResult {
    LossBreakdown loss;
    GradientSet grads;  // NetworkParams::arrays order
};

/// Loss and its exact gradient for every parameter array. Throws kNonFinite
/// naming the first non-finite graph node.
BackwardResult backward(const NetworkParams &params, const TrainingSample &sample, const TrainConfig &config = {});
BackwardResult backward(const NetworkParams &params, const SamplePair &pair, const TrainConfig &config = {});

/// Forward pass and losses only.
LossBreakdown evaluate_loss(const NetworkParams &params, const TrainingSample &sample, const TrainConfig &config = {});

/// p <- p - lr g for every array.
void sgd_step(NetworkParams &params, const GradientSet &grads, double lr);

/// L2 norm over all arrays together.
double global_norm(const GradientSet &grads);

struct EpochLog {
    int epoch = 0;  // 1-based
    double matching = 0.0;
    double visibility = 0.0;
    double total = 0.0;
    double learning_rate = 0.0;
};

struct TrainResult {
    NetworkParams params;
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog &)>;

/// Epoch loop with seeded per-epoch shuffling. Logged losses are the means
/// over the epoch of each step's pre-update loss.
TrainResult train(const std::vector<TrainingSample> &samples, const NetworkParams &init, const TrainConfig &config,
                  const EpochCallback &on_epoch = {});

/// Loads the train split of a dataset manifest after checking that no mesh
/// appears in both splits (kSplitLeakage otherwise).
std::vector<TrainingSample> load_training_split(const std::filesystem::path &manifest_path,
                                                const NetworkConfig &config, const std::string &split = "train");

/// Header: epoch,matching_loss,visibility_loss,total_loss,learning_rate
void write_loss_csv(const std::filesystem::path &path, const std::vector<EpochLog> &log);

}  // namespace surfmatch
