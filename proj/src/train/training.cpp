#include "surfmatch/train/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "surfmatch/error.hpp"
#include "surfmatch/geom/random.hpp"
#include "surfmatch/synth/dataset.hpp"

namespace surfmatch {

void TrainConfig::validate() const {
    if (epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
    if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw Error(ErrorCode::kInvalidArgument, "learning rate must be finite and >= 0");
    }
    if (!(lr_decay > 0.0) || !std::isfinite(lr_decay)) throw Error(ErrorCode::kInvalidArgument, "lr decay must be > 0");
    if (!(focal_alpha > 0.0) || !(focal_gamma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "bad focal parameters");
    if (!(max_grad_norm >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "max_grad_norm must be >= 0");
}

nlohmann::json to_json(const TrainConfig &c) {
    return {{"epochs", c.epochs},         {"batch_size", c.batch_size},   {"learning_rate", c.learning_rate},
            {"lr_decay", c.lr_decay},     {"rng_seed", c.rng_seed},       {"focal_alpha", c.focal_alpha},
            {"focal_gamma", c.focal_gamma}, {"fit_normalization", c.fit_normalization},
            {"max_grad_norm", c.max_grad_norm}};
}

double focal_loss(const Eigen::MatrixXd &confidence, const CorrespondenceSet &gt, double alpha, double gamma) {
    ad::Tape t;
    const ad::Var m = t.constant(confidence, "M");
    return t.value(t.focal_loss(m, gt.pairs, alpha, gamma, kLogEpsilon))(0, 0);
}

double visibility_loss(const Eigen::VectorXd &scores, const std::vector<std::uint8_t> &labels) {
    ad::Tape t;
    const ad::Var o = t.constant(Eigen::MatrixXd(scores), "o");
    const std::vector<double> y(labels.begin(), labels.end());
    return t.value(t.bce(o, y, kLogEpsilon))(0, 0);
}

TrainingSample prepare_training_sample(const SamplePair &pair, const NetworkConfig &config, std::string id) {
    TrainingSample s;
    s.id = std::move(id);
    s.source = prepare_cloud(pair.source, config);
    s.target = prepare_cloud(pair.target, config);
    s.gt = pair.gt_matches.pairs;
    s.visibility_labels.assign(pair.visibility.begin(), pair.visibility.end());
    if (s.visibility_labels.size() != pair.n()) {
        throw Error(ErrorCode::kInvalidArgument, "visibility labels do not cover the source cloud");
    }
    return s;
}

namespace {

struct Graph {
    ad::Tape tape;
    ParamVars params;
    ad::Var matching, visibility, total;
};

void build_loss(Graph &g, const NetworkParams &params, const TrainingSample &sample, const TrainConfig &cfg,
                bool trainable) {
    g.params = record_params(g.tape, params, trainable);
    const ForwardVars f = record_forward(g.tape, g.params, sample.source, sample.target);
    g.matching = g.tape.focal_loss(f.confidence, sample.gt, cfg.focal_alpha, cfg.focal_gamma, kLogEpsilon, "loss.matching");
    g.visibility = g.tape.bce(f.visibility, sample.visibility_labels, kLogEpsilon, "loss.visibility");
    g.total = g.tape.add(g.matching, g.visibility, "loss.total");
    if (!std::isfinite(g.tape.value(g.total)(0, 0))) {
        const auto bad = g.tape.first_non_finite();
        const std::string where = bad ? g.tape.name(ad::Var{*bad}) : std::string("loss");
        throw Error(ErrorCode::kNonFinite, "non-finite loss; first non-finite node: " + where);
    }
}

LossBreakdown breakdown(const Graph &g) {
    return {g.tape.value(g.matching)(0, 0), g.tape.value(g.visibility)(0, 0), g.tape.value(g.total)(0, 0)};
}

}  // namespace

BackwardResult backward(const NetworkParams &params, const TrainingSample &sample, const TrainConfig &config) {
    Graph g;
    build_loss(g, params, sample, config, true);
    g.tape.backward(g.total);
    BackwardResult r;
    r.loss = breakdown(g);
    r.grads.reserve(params.arrays.size());
    for (const ad::Var v : g.params.vars) r.grads.push_back(g.tape.grad(v));
    for (std::size_t i = 0; i < r.grads.size(); ++i) {
        if (!r.grads[i].allFinite()) {
            throw Error(ErrorCode::kNonFinite, "non-finite gradient for " + params.names[i]);
        }
    }
    return r;
}

BackwardResult backward(const NetworkParams &params, const SamplePair &pair, const TrainConfig &config) {
    return backward(params, prepare_training_sample(pair, params.config), config);
}

LossBreakdown evaluate_loss(const NetworkParams &params, const TrainingSample &sample, const TrainConfig &config) {
    Graph g;
    build_loss(g, params, sample, config, false);
    return breakdown(g);
}

void sgd_step(NetworkParams &params, const GradientSet &grads, double lr) {
    if (grads.size() != params.arrays.size()) throw Error(ErrorCode::kInvalidArgument, "gradient set size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].rows() != params.arrays[i].rows() || grads[i].cols() != params.arrays[i].cols()) {
            throw Error(ErrorCode::kInvalidArgument, "gradient shape mismatch for " + params.names[i]);
        }
    }
    for (std::size_t i = 0; i < grads.size(); ++i) params.arrays[i] -= lr * grads[i];
}

double global_norm(const GradientSet &grads) {
    double s = 0.0;
    for (const auto &g : grads) s += g.squaredNorm();
    return std::sqrt(s);
}

TrainResult train(const std::vector<TrainingSample> &samples, const NetworkParams &init, const TrainConfig &config,
                  const EpochCallback &on_epoch) {
    config.validate();
    if (samples.empty()) throw Error(ErrorCode::kInvalidArgument, "no training samples");
    TrainResult result{init, {}};
    NetworkParams &params = result.params;
    if (config.fit_normalization) {
        std::vector<const Eigen::MatrixXd *> blocks;
        for (const auto &s : samples) {
            blocks.push_back(&s.source.raw);
            blocks.push_back(&s.target.raw);
        }
        fit_input_normalization(params, blocks);
    }
    std::vector<std::size_t> order(samples.size());
    double lr = config.learning_rate;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(config.rng_seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        EpochLog log;
        log.epoch = epoch + 1;
        log.learning_rate = lr;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            GradientSet sum;
            for (std::size_t b = start; b < end; ++b) {
                BackwardResult r = backward(params, samples[order[b]], config);
                log.matching += r.loss.matching;
                log.visibility += r.loss.visibility;
                log.total += r.loss.total;
                if (sum.empty()) {
                    sum = std::move(r.grads);
                } else {
                    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += r.grads[i];
                }
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (auto &g : sum) g *= inv;
            if (config.max_grad_norm > 0.0) {
                const double norm = global_norm(sum);
                if (norm > config.max_grad_norm) {
                    for (auto &g : sum) g *= config.max_grad_norm / norm;
                }
            }
            sgd_step(params, sum, lr);
        }
        const double inv = 1.0 / static_cast<double>(samples.size());
        log.matching *= inv;
        log.visibility *= inv;
        log.total *= inv;
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
        lr *= config.lr_decay;
    }
    return result;
}

std::vector<TrainingSample> load_training_split(const std::filesystem::path &manifest_path, const NetworkConfig &config,
                                                const std::string &split) {
    const Manifest manifest = read_manifest(manifest_path);
    manifest.check_split();
    const auto entries = manifest.split(split);
    if (entries.empty()) throw Error(ErrorCode::kEmptyResult, "no samples in the " + split + " split");
    std::vector<TrainingSample> out;
    out.reserve(entries.size());
    const auto root = manifest_path.parent_path();
    for (const auto &e : entries) out.push_back(prepare_training_sample(read_sample(root / e.path), config, e.id));
    return out;
}

void write_loss_csv(const std::filesystem::path &path, const std::vector<EpochLog> &log) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << "epoch,matching_loss,visibility_loss,total_loss,learning_rate\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto &e : log) {
        out << e.epoch << ',' << e.matching << ',' << e.visibility << ',' << e.total << ',' << e.learning_rate << '\n';
    }
}

}  // namespace surfmatch
