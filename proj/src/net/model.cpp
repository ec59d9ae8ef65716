#include "surfmatch/net/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "surfmatch/error.hpp"
#include "surfmatch/geom/random.hpp"
#include "surfmatch/net/features.hpp"
#include "surfmatch/synth/dataset.hpp"

namespace surfmatch {

using Matrix = Eigen::MatrixXd;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void NetworkConfig::validate() const {
    if (d < 1 || hidden < 1) throw Error(ErrorCode::kInvalidArgument, "network widths must be >= 1");
    if (k < 4) throw Error(ErrorCode::kInvalidArgument, "encoder k must be >= 4");
    if (n_super < 1) throw Error(ErrorCode::kInvalidArgument, "n_super must be >= 1");
    if (n_blocks < 0) throw Error(ErrorCode::kInvalidArgument, "n_blocks must be >= 0");
    if (!std::isfinite(visibility_bias_init)) throw Error(ErrorCode::kInvalidArgument, "visibility bias must be finite");
}

json to_json(const NetworkConfig &c) {
    return {{"d", c.d},           {"hidden", c.hidden},     {"k", c.k},
            {"n_super", c.n_super}, {"n_blocks", c.n_blocks}, {"visibility_bias_init", c.visibility_bias_init}};
}

NetworkConfig network_config_from_json(const json &j) {
    NetworkConfig c;
    c.d = j.value("d", c.d);
    c.hidden = j.value("hidden", c.hidden);
    c.k = j.value("k", c.k);
    c.n_super = j.value("n_super", c.n_super);
    c.n_blocks = j.value("n_blocks", c.n_blocks);
    c.visibility_bias_init = j.value("visibility_bias_init", c.visibility_bias_init);
    c.validate();
    return c;
}

namespace {

struct Shape {
    std::string name;
    int rows, cols;
};

std::vector<Shape> layout(const NetworkConfig &c) {
    const int d = c.d, h = c.hidden;
    std::vector<Shape> s = {
        {"enc.w1", h, kRawFeatureWidth}, {"enc.b1", 1, h}, {"enc.w2", d, h}, {"enc.b2", 1, d}};
    for (int b = 0; b < c.n_blocks; ++b) {
        for (const char *kind : {"self", "cross"}) {
            const std::string pre = "block" + std::to_string(b) + "." + kind + ".";
            s.push_back({pre + "wq", d, d});
            s.push_back({pre + "wk", d, d});
            s.push_back({pre + "wv", d, d});
            s.push_back({pre + "fc_w", d, 2 * d});
            s.push_back({pre + "fc_b", 1, d});
        }
    }
    s.push_back({"refine.w", d, 2 * d});
    s.push_back({"refine.b", 1, d});
    s.push_back({"desc.w", d, d});
    s.push_back({"desc.b", 1, d});
    s.push_back({"vis.w", 1, d});
    s.push_back({"vis.b", 1, 1});
    return s;
}

struct AttentionVars {
    ad::Var wq, wk, wv, fc_w, fc_b;
};

AttentionVars attention_vars(const ParamVars &p, int block, const std::string &kind) {
    const std::string pre = "block" + std::to_string(block) + "." + kind + ".";
    return {p[pre + "wq"], p[pre + "wk"], p[pre + "wv"], p[pre + "fc_w"], p[pre + "fc_b"]};
}

AttentionVars attention_constants(ad::Tape &t, const AttentionParams &a) {
    return {t.constant(a.wq, "wq"), t.constant(a.wk, "wk"), t.constant(a.wv, "wv"), t.constant(a.fc_w, "fc_w"),
            t.constant(a.fc_b, "fc_b")};
}

// queries attend over context: x + FC([q, softmax(q k^T / sqrt(d)) v])
ad::Var attend(ad::Tape &t, ad::Var x, ad::Var context, const AttentionVars &a, const std::string &tag) {
    const double d = static_cast<double>(t.value(x).cols());
    const ad::Var q = t.matmul_bt(x, a.wq, tag + ".q");
    const ad::Var k = t.matmul_bt(context, a.wk, tag + ".k");
    const ad::Var v = t.matmul_bt(context, a.wv, tag + ".v");
    const ad::Var logits = t.scale(t.matmul_bt(q, k, tag + ".qk"), 1.0 / std::sqrt(d), tag + ".logits");
    const ad::Var weights = t.row_softmax(logits, tag + ".weights");
    const ad::Var message = t.matmul(weights, v, tag + ".message");
    const ad::Var fc = t.linear(t.concat_cols(q, message, tag + ".concat"), a.fc_w, a.fc_b, tag + ".fc");
    return t.add(x, fc, tag + ".out");
}

ad::Var encode(ad::Tape &t, const ParamVars &p, ad::Var raw, const std::string &tag) {
    const ad::Var h = t.relu(t.linear(raw, p["enc.w1"], p["enc.b1"], tag + ".enc1"), tag + ".enc1.relu");
    return t.linear(h, p["enc.w2"], p["enc.b2"], tag + ".enc2");
}

void check_width(const Matrix &x, const Matrix &w, const char *what) {
    if (x.cols() != w.cols()) throw Error(ErrorCode::kInvalidArgument, std::string(what) + ": feature width mismatch");
}

}  // namespace

NetworkParams NetworkParams::initialize(const NetworkConfig &config, std::uint64_t seed) {
    config.validate();
    NetworkParams p;
    p.config = config;
    p.seed = seed;
    Rng rng(derive_seed(seed, 0x6e6574));
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.d));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (const Shape &s : layout(config)) {
        Matrix m(s.rows, s.cols);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
        p.names.push_back(s.name);
        p.arrays.push_back(std::move(m));
    }
    p.at("vis.b")(0, 0) = config.visibility_bias_init;
    p.input_mean = Eigen::RowVectorXd::Zero(kRawFeatureWidth);
    p.input_scale = Eigen::RowVectorXd::Ones(kRawFeatureWidth);
    return p;
}

Matrix NetworkParams::normalize_inputs(const Matrix &raw) const {
    if (raw.cols() != input_mean.size() || raw.cols() != input_scale.size()) {
        throw Error(ErrorCode::kInvalidArgument, "raw feature width does not match the input normalization");
    }
    Matrix out = raw;
    out.rowwise() -= input_mean;
    out.array().rowwise() /= input_scale.array();
    return out;
}

void fit_input_normalization(NetworkParams &params, const std::vector<const Matrix *> &raw_blocks) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(kRawFeatureWidth);
    double count = 0.0;
    for (const Matrix *b : raw_blocks) {
        sum += b->colwise().sum();
        count += static_cast<double>(b->rows());
    }
    if (count < 1.0) throw Error(ErrorCode::kEmptyResult, "no rows to fit the input normalization");
    const Eigen::RowVectorXd mean = sum / count;
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(kRawFeatureWidth);
    for (const Matrix *b : raw_blocks) sq += (b->rowwise() - mean).array().square().matrix().colwise().sum();
    Eigen::RowVectorXd scale = (sq / count).cwiseSqrt();
    for (Eigen::Index c = 0; c < scale.size(); ++c)
        if (!(scale(c) > 1e-9)) scale(c) = 1.0;
    params.input_mean = mean;
    params.input_scale = scale;
}

int NetworkParams::index_of(const std::string &name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw Error(ErrorCode::kInvalidArgument, "no parameter array named " + name);
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto &a : arrays) n += static_cast<std::size_t>(a.size());
    return n;
}

bool NetworkParams::all_finite() const {
    for (const auto &a : arrays)
        if (!a.allFinite()) return false;
    return input_mean.allFinite() && input_scale.allFinite();
}

AttentionParams attention_params(const NetworkParams &p, int block, const std::string &kind) {
    const std::string pre = "block" + std::to_string(block) + "." + kind + ".";
    return {p.at(pre + "wq"), p.at(pre + "wk"), p.at(pre + "wv"), p.at(pre + "fc_w"), p.at(pre + "fc_b")};
}

Matrix encode_local_features(const PointCloud &cloud, int k, const NetworkParams &params) {
    ad::Tape t;
    const ParamVars p = record_params(t, params, false);
    return t.value(encode(t, p, t.constant(params.normalize_inputs(local_geometry_features(cloud, k)), "raw"), "x"));
}

Matrix self_attention(const Matrix &x, const AttentionParams &a) {
    check_width(x, a.wq, "self_attention");
    ad::Tape t;
    const AttentionVars v = attention_constants(t, a);
    const ad::Var xv = t.constant(x, "x");
    return t.value(attend(t, xv, xv, v, "self"));
}

std::pair<Matrix, Matrix> cross_attention(const Matrix &x_s, const Matrix &x_t, const AttentionParams &a) {
    check_width(x_s, a.wq, "cross_attention");
    check_width(x_t, a.wq, "cross_attention");
    ad::Tape t;
    const AttentionVars v = attention_constants(t, a);
    const ad::Var s = t.constant(x_s, "x_s");
    const ad::Var tt = t.constant(x_t, "x_t");
    return {t.value(attend(t, s, tt, v, "cross.s")), t.value(attend(t, tt, s, v, "cross.t"))};
}

VisibilityScores visibility_from_raw(const Eigen::VectorXd &raw) {
    VisibilityScores v;
    v.score = raw.cwiseMax(0.0).cwiseMin(1.0);
    v.mask.resize(static_cast<std::size_t>(raw.size()));
    for (Eigen::Index i = 0; i < raw.size(); ++i) v.mask[i] = v.score(i) > kVisibilityThreshold ? 1 : 0;
    return v;
}

VisibilityScores decode_visibility(const Matrix &x_s, const Matrix &w, const Matrix &b) {
    check_width(x_s, w, "decode_visibility");
    if (w.rows() != 1 || b.rows() != 1 || b.cols() != 1) {
        throw Error(ErrorCode::kInvalidArgument, "visibility head must map to one channel");
    }
    const Eigen::VectorXd raw = (x_s * w.transpose()).col(0).array() + b(0, 0);
    return visibility_from_raw(raw);
}

Matrix score_matrix(const Matrix &x_s, const Matrix &x_t) {
    check_width(x_s, x_t, "score_matrix");
    return x_s * x_t.transpose();
}

Matrix dual_softmax(const Matrix &scores) {
    if (!scores.allFinite()) throw Error(ErrorCode::kNonFinite, "dual_softmax: non-finite scores");
    return ad::row_softmax(scores).cwiseProduct(ad::col_softmax(scores));
}

CorrespondenceSet mutual_nn_select(const Matrix &m) {
    CorrespondenceSet out;
    if (m.size() == 0) return out;
    std::vector<Eigen::Index> col_best(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) m.col(j).maxCoeff(&col_best[j]);  // first maximum
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Eigen::Index j = 0;
        m.row(i).maxCoeff(&j);
        if (col_best[j] == i) out.pairs.push_back({static_cast<int>(i), static_cast<int>(j)});
    }
    return out;
}

CorrespondenceSet apply_visibility_mask(const CorrespondenceSet &matches, const std::vector<std::uint8_t> &mask) {
    CorrespondenceSet out;
    for (const auto &c : matches.pairs) {
        if (c.source < 0 || static_cast<std::size_t>(c.source) >= mask.size()) {
            throw Error(ErrorCode::kInvalidArgument, "match source index outside the visibility mask");
        }
        if (mask[c.source]) out.pairs.push_back(c);
    }
    return out;
}

PreparedCloud prepare_cloud(const PointCloud &cloud, const NetworkConfig &config) {
    PreparedCloud p;
    p.raw = local_geometry_features(cloud, config.k);
    p.super = farthest_point_subset(cloud, config.n_super);
    p.attach = attach_to_nearest(cloud, p.super);
    return p;
}

ParamVars record_params(ad::Tape &tape, const NetworkParams &params, bool trainable) {
    ParamVars p;
    p.params = &params;
    for (std::size_t i = 0; i < params.arrays.size(); ++i) {
        p.vars.push_back(trainable ? tape.variable(params.arrays[i], params.names[i])
                                   : tape.constant(params.arrays[i], params.names[i]));
    }
    return p;
}

ForwardVars record_forward(ad::Tape &t, const ParamVars &p, const PreparedCloud &s, const PreparedCloud &tc) {
    const NetworkConfig &cfg = p.params->config;
    const ad::Var hs = encode(t, p, t.constant(p.params->normalize_inputs(s.raw), "raw_s"), "s");
    const ad::Var ht = encode(t, p, t.constant(p.params->normalize_inputs(tc.raw), "raw_t"), "t");

    ad::Var xs = t.gather_rows(hs, s.super, "s.super");
    ad::Var xt = t.gather_rows(ht, tc.super, "t.super");
    for (int b = 0; b < cfg.n_blocks; ++b) {
        const std::string tag = "block" + std::to_string(b);
        const AttentionVars sa = attention_vars(p, b, "self");
        xs = attend(t, xs, xs, sa, tag + ".self.s");
        xt = attend(t, xt, xt, sa, tag + ".self.t");
        const AttentionVars ca = attention_vars(p, b, "cross");
        const ad::Var ns = attend(t, xs, xt, ca, tag + ".cross.s");
        const ad::Var nt = attend(t, xt, xs, ca, tag + ".cross.t");
        xs = ns;
        xt = nt;
    }

    auto head = [&](ad::Var h, ad::Var x, const std::vector<int> &attach, const std::string &tag) {
        const ad::Var up = t.gather_rows(x, attach, tag + ".up");
        const ad::Var r = t.relu(t.linear(t.concat_cols(h, up, tag + ".skip"), p["refine.w"], p["refine.b"],
                                          tag + ".refine"),
                                 tag + ".refine.relu");
        return t.linear(r, p["desc.w"], p["desc.b"], tag + ".desc");
    };

    ForwardVars f;
    f.desc_s = head(hs, xs, s.attach, "s");
    f.desc_t = head(ht, xt, tc.attach, "t");
    f.scores = t.matmul_bt(f.desc_s, f.desc_t, "scores");
    f.confidence = t.cwise_mul(t.row_softmax(f.scores, "scores.row_softmax"), t.col_softmax(f.scores, "scores.col_softmax"),
                               "confidence");
    f.visibility_raw = t.linear(f.desc_s, p["vis.w"], p["vis.b"], "visibility.raw");
    f.visibility = t.clamp01(f.visibility_raw, "visibility");
    return f;
}

MatchResult match_prepared(const PreparedCloud &source, const PreparedCloud &target, const NetworkParams &params) {
    ad::Tape t;
    const ParamVars p = record_params(t, params, false);
    const ForwardVars f = record_forward(t, p, source, target);
    if (const auto bad = t.first_non_finite()) {
        throw Error(ErrorCode::kNonFinite, "non-finite value at node " + t.name(ad::Var{*bad}));
    }
    MatchResult r;
    r.confidence = t.value(f.confidence);
    r.visibility = visibility_from_raw(t.value(f.visibility_raw).col(0));
    r.matches = apply_visibility_mask(mutual_nn_select(r.confidence), r.visibility.mask);
    for (const auto &c : r.matches.pairs) r.match_confidence.push_back(r.confidence(c.source, c.target));
    return r;
}

MatchResult match(const PointCloud &source, const PointCloud &target, const NetworkParams &params) {
    return match_prepared(prepare_cloud(source, params.config), prepare_cloud(target, params.config), params);
}

namespace {

constexpr char kMagic[4] = {'S', 'M', 'N', 'P'};

template <class T>
void put(std::ostream &out, const T &v) {
    out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T>
T take(std::istream &in) {
    T v{};
    if (!in.read(reinterpret_cast<char *>(&v), sizeof(T))) throw Error(ErrorCode::kFormat, "truncated checkpoint");
    return v;
}

json read_header(std::istream &in, const std::filesystem::path &path) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw Error(ErrorCode::kFormat, path.string() + " is not a network checkpoint");
    }
    const auto version = take<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::kVersionMismatch, "checkpoint version " + std::to_string(version) +
                                                     " is not supported (expected " +
                                                     std::to_string(kCheckpointVersion) + ")");
    }
    const auto len = take<std::uint64_t>(in);
    if (len > (1u << 26)) throw Error(ErrorCode::kFormat, "checkpoint header too large");
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw Error(ErrorCode::kFormat, "truncated header");
    try {
        return json::parse(text);
    } catch (const json::exception &e) {
        throw Error(ErrorCode::kFormat, std::string("checkpoint header: ") + e.what());
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path &path, const NetworkParams &params, const json &extra) {
    json arrays = json::array();
    for (std::size_t i = 0; i < params.arrays.size(); ++i) {
        arrays.push_back({{"name", params.names[i]}, {"rows", params.arrays[i].rows()}, {"cols", params.arrays[i].cols()}});
    }
    const json header = {{"format", "surfmatch-network"},
                         {"config", to_json(params.config)},
                         {"seed", params.seed},
                         {"raw_feature_width", kRawFeatureWidth},
                         {"arrays", arrays},
                         {"extra", extra}};
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out.write(kMagic, 4);
    put(out, kCheckpointVersion);
    put(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto &a : params.arrays) out.write(reinterpret_cast<const char *>(a.data()), a.size() * sizeof(double));
    for (const Eigen::RowVectorXd *v : {&params.input_mean, &params.input_scale}) {
        if (v->size() != kRawFeatureWidth) throw Error(ErrorCode::kInvalidArgument, "input normalization has the wrong width");
        out.write(reinterpret_cast<const char *>(v->data()), v->size() * sizeof(double));
    }
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

json read_checkpoint_header(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    return read_header(in, path);
}

NetworkParams load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    const json header = read_header(in, path);
    NetworkParams p;
    try {
        p.config = network_config_from_json(header.at("config"));
        p.seed = header.at("seed").get<std::uint64_t>();
        if (header.at("raw_feature_width").get<int>() != kRawFeatureWidth) {
            throw Error(ErrorCode::kVersionMismatch, "checkpoint was built for another raw feature width");
        }
        const std::vector<Shape> expected = layout(p.config);
        const json &arrays = header.at("arrays");
        if (arrays.size() != expected.size()) throw Error(ErrorCode::kFormat, "checkpoint array count mismatch");
        for (std::size_t i = 0; i < expected.size(); ++i) {
            const auto &a = arrays[i];
            if (a.at("name").get<std::string>() != expected[i].name || a.at("rows").get<int>() != expected[i].rows ||
                a.at("cols").get<int>() != expected[i].cols) {
                throw Error(ErrorCode::kFormat, "checkpoint array " + std::to_string(i) + " has an unexpected name or shape");
            }
            Matrix m(expected[i].rows, expected[i].cols);
            if (!in.read(reinterpret_cast<char *>(m.data()), m.size() * sizeof(double))) {
                throw Error(ErrorCode::kFormat, "truncated checkpoint data");
            }
            p.names.push_back(expected[i].name);
            p.arrays.push_back(std::move(m));
        }
        for (Eigen::RowVectorXd *v : {&p.input_mean, &p.input_scale}) {
            v->resize(kRawFeatureWidth);
            if (!in.read(reinterpret_cast<char *>(v->data()), v->size() * sizeof(double))) {
                throw Error(ErrorCode::kFormat, "truncated checkpoint data");
            }
        }
    } catch (const json::exception &e) {
        throw Error(ErrorCode::kFormat, std::string("checkpoint header: ") + e.what());
    }
    if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::kFormat, "trailing bytes in checkpoint");
    return p;
}

void write_matches_json(const std::filesystem::path &path, const MatchResult &result, const json &meta) {
    json pairs = json::array();
    for (const auto &c : result.matches.pairs) pairs.push_back({c.source, c.target});
    json vis = json::array();
    for (Eigen::Index i = 0; i < result.visibility.score.size(); ++i) vis.push_back(result.visibility.score(i));
    write_json(path, {{"meta", meta}, {"matches", pairs}, {"confidence", result.match_confidence}, {"visibility", vis}});
}

CorrespondenceSet read_matches_json(const std::filesystem::path &path) {
    const json j = read_json(path);
    const json &arr = j.is_object() ? j.at("matches") : j;
    CorrespondenceSet out;
    try {
        for (const auto &p : arr) out.pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    } catch (const json::exception &e) {
        throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
    }
    if (!out.is_one_to_one()) throw Error(ErrorCode::kFormat, path.string() + ": matches are not one-to-one");
    return out;
}

}  // namespace surfmatch
