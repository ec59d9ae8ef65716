#include "surfmatch/eval/benchmark.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "surfmatch/error.hpp"
#include "surfmatch/geom/random.hpp"
#include "surfmatch/synth/dataset.hpp"

namespace surfmatch {

using nlohmann::json;

const char *method_name(MatchMethod m) {
    switch (m) {
        case MatchMethod::kLearned: return "learned";
        case MatchMethod::kFpfh: return "fpfh";
        case MatchMethod::kGroundTruth: return "gt";
        case MatchMethod::kRandom: return "random";
    }
    return "?";
}

MatchMethod parse_method(const std::string &name) {
    for (MatchMethod m : {MatchMethod::kLearned, MatchMethod::kFpfh, MatchMethod::kGroundTruth, MatchMethod::kRandom}) {
        if (name == method_name(m)) return m;
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown method '" + name + "' (expected learned, fpfh, gt or random)");
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

CorrespondenceSet fpfh_mutual_matches(const FpfhResult &s, const FpfhResult &t) {
    std::vector<int> rows, cols;
    for (std::size_t i = 0; i < s.flagged.size(); ++i)
        if (!s.flagged[i]) rows.push_back(static_cast<int>(i));
    for (std::size_t j = 0; j < t.flagged.size(); ++j)
        if (!t.flagged[j]) cols.push_back(static_cast<int>(j));
    CorrespondenceSet out;
    if (rows.empty() || cols.empty()) return out;
    Eigen::MatrixXd sim(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t a = 0; a < rows.size(); ++a) {
        const auto &ds = s.descriptors[rows[a]];
        for (std::size_t b = 0; b < cols.size(); ++b) {
            const auto &dt = t.descriptors[cols[b]];
            double d2 = 0.0;
            for (int k = 0; k < kFpfhSize; ++k) d2 += (ds[k] - dt[k]) * (ds[k] - dt[k]);
            sim(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = -d2;
        }
    }
    for (const auto &c : mutual_nn_select(sim).pairs) out.pairs.push_back({rows[c.source], cols[c.target]});
    return out;
}

std::vector<double> defined_values(const std::vector<SampleRecord> &records, const std::string &method, std::size_t k,
                                   bool ir) {
    std::vector<double> v;
    for (const auto &r : records) {
        if (r.method != method) continue;
        const auto &x = ir ? r.ir[k] : r.ms[k];
        if (x) v.push_back(*x);
    }
    return v;
}

json opt_array(const std::vector<std::optional<double>> &v) {
    json a = json::array();
    for (const auto &x : v) a.push_back(x ? json(*x) : json(nullptr));
    return a;
}

std::vector<std::optional<double>> opt_from(const json &a) {
    std::vector<std::optional<double>> v;
    for (const auto &x : a) v.push_back(x.is_null() ? std::nullopt : std::optional<double>(x.get<double>()));
    return v;
}

json stat_json(const Stat &s) { return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }
Stat stat_from(const json &j) { return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("count").get<int>()}; }

std::string pm(const Stat &s, double scale, int prec) {
    if (s.count == 0) return "-";
    std::ostringstream o;
    o << std::fixed << std::setprecision(prec) << s.mean * scale << " +- " << s.std * scale;
    return o.str();
}

}  // namespace

MethodMatches run_matcher(MatchMethod method, const SamplePair &pair, const BenchmarkConfig &config,
                          const NetworkParams *learned, std::uint64_t sample_seed) {
    MethodMatches out;
    out.source_used = pair.source;
    out.target_used = pair.target;
    switch (method) {
        case MatchMethod::kLearned: {
            if (!learned) throw Error(ErrorCode::kInvalidArgument, "the learned method needs a checkpoint");
            const auto t0 = std::chrono::steady_clock::now();
            const PreparedCloud s = prepare_cloud(pair.source, learned->config);
            const PreparedCloud t = prepare_cloud(pair.target, learned->config);
            const MatchResult r = match_prepared(s, t, *learned);
            out.feature_seconds = seconds_since(t0);
            out.matches = r.matches;
            break;
        }
        case MatchMethod::kFpfh: {
            const auto t0 = std::chrono::steady_clock::now();
            const FpfhFeatures s = extract_fpfh_features(pair.source, config.fpfh);
            const FpfhFeatures t = extract_fpfh_features(pair.target, config.fpfh);
            out.feature_seconds = seconds_since(t0);
            out.matches = fpfh_mutual_matches(s.fpfh, t.fpfh);
            out.index_space = false;
            out.source_used = s.cloud;
            out.target_used = t.cloud;
            break;
        }
        case MatchMethod::kGroundTruth:
            out.matches = pair.gt_matches;
            break;
        case MatchMethod::kRandom: {
            Rng rng(sample_seed);
            std::vector<int> src(pair.n());
            std::iota(src.begin(), src.end(), 0);
            std::shuffle(src.begin(), src.end(), rng);
            const std::size_t count = std::min(pair.m(), pair.n());
            for (std::size_t j = 0; j < count; ++j) out.matches.pairs.push_back({src[j], static_cast<int>(j)});
            break;
        }
    }
    return out;
}

Stat summarize(const std::vector<double> &values) {
    Stat s;
    s.count = static_cast<int>(values.size());
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    return s;
}

std::vector<MethodSummary> aggregate(const std::vector<SampleRecord> &records, const std::vector<std::string> &methods,
                                     std::size_t n_sigma) {
    std::vector<MethodSummary> out;
    for (const auto &m : methods) {
        MethodSummary s;
        s.method = m;
        std::vector<double> re, time;
        for (const auto &r : records) {
            if (r.method != m) continue;
            ++s.n_samples;
            if (!r.registration_success) ++s.n_failures;
            re.push_back(r.re_mm);
            time.push_back(r.feature_seconds);
        }
        for (std::size_t k = 0; k < n_sigma; ++k) {
            s.ir.push_back(summarize(defined_values(records, m, k, true)));
            s.ms.push_back(summarize(defined_values(records, m, k, false)));
        }
        s.re_mm = summarize(re);
        s.feature_seconds = summarize(time);
        out.push_back(std::move(s));
    }
    return out;
}

BenchmarkReport run_benchmark(const std::vector<BenchmarkSample> &samples, const BenchmarkConfig &config,
                              const NetworkParams *learned) {
    config.metrics.validate();
    if (config.methods.empty()) throw Error(ErrorCode::kInvalidArgument, "no methods to benchmark");
    BenchmarkReport report;
    report.sigma_mm = config.metrics.sigma_mm;
    report.n_samples = static_cast<int>(samples.size());
    std::vector<std::string> names;
    for (MatchMethod m : config.methods) names.push_back(method_name(m));

    for (std::size_t si = 0; si < samples.size(); ++si) {
        const auto &[id, pair] = samples[si];
        const std::vector<int> lookup = gt_lookup(pair.gt_matches, pair.n());
        for (MatchMethod method : config.methods) {
            SampleRecord rec;
            rec.id = id;
            rec.method = method_name(method);
            try {
                const MethodMatches mm = run_matcher(method, pair, config, learned, derive_seed(config.seed, si));
                rec.n_predicted = static_cast<int>(mm.matches.size());
                rec.feature_seconds = mm.feature_seconds;
                for (double sigma : report.sigma_mm) {
                    if (!mm.index_space) {
                        rec.ir.push_back(std::nullopt);
                        rec.ms.push_back(std::nullopt);
                        continue;
                    }
                    const int inl = count_inliers(mm.matches, lookup, pair.target, sigma);
                    rec.ir.push_back(mm.matches.empty() ? std::nullopt
                                                        : std::optional<double>(double(inl) / double(mm.matches.size())));
                    rec.ms.push_back(double(inl) / double(pair.m()));
                }
                const RegistrationResult reg =
                    register_pair(mm.matches, mm.source_used, mm.target_used, config.ransac, config.icp);
                RigidTransform final_t = reg.transform;
                if (reg.success && !mm.index_space) {
                    // Refine against the full-resolution clouds.
                    final_t = icp_refine(pair.source, pair.target, reg.transform, config.icp).transform;
                }
                rec.registration_success = reg.success;
                if (!reg.success) rec.failure = reg.ransac.success ? "icp failed" : reg.ransac.failure;
                rec.re_mm = registration_error(pair.gt_displacement, predicted_displacements(pair.source, final_t));
            } catch (const Error &e) {
                rec.registration_success = false;
                rec.failure = e.what();
                rec.ir.assign(report.sigma_mm.size(), std::nullopt);
                rec.ms.assign(report.sigma_mm.size(), std::nullopt);
                rec.re_mm = registration_error(pair.gt_displacement,
                                               predicted_displacements(pair.source, RigidTransform::identity()));
            }
            report.samples.push_back(std::move(rec));
        }
    }
    report.methods = aggregate(report.samples, names, report.sigma_mm.size());
    return report;
}

json to_json(const BenchmarkReport &r) {
    json methods = json::array();
    for (const auto &m : r.methods) {
        json ir = json::array(), ms = json::array();
        for (const auto &s : m.ir) ir.push_back(stat_json(s));
        for (const auto &s : m.ms) ms.push_back(stat_json(s));
        methods.push_back({{"method", m.method},
                           {"n_samples", m.n_samples},
                           {"n_failures", m.n_failures},
                           {"ir", ir},
                           {"ms", ms},
                           {"re_mm", stat_json(m.re_mm)},
                           {"feature_seconds", stat_json(m.feature_seconds)}});
    }
    json samples = json::array();
    for (const auto &s : r.samples) {
        samples.push_back({{"id", s.id},
                           {"method", s.method},
                           {"n_predicted", s.n_predicted},
                           {"ir", opt_array(s.ir)},
                           {"ms", opt_array(s.ms)},
                           {"re_mm", s.re_mm},
                           {"feature_seconds", s.feature_seconds},
                           {"registration_success", s.registration_success},
                           {"failure", s.failure}});
    }
    return {{"meta", r.meta},       {"sigma_mm", r.sigma_mm}, {"n_samples", r.n_samples},
            {"methods", methods},   {"samples", samples}};
}

BenchmarkReport benchmark_report_from_json(const json &j) {
    try {
        BenchmarkReport r;
        r.meta = j.at("meta");
        r.sigma_mm = j.at("sigma_mm").get<std::vector<double>>();
        r.n_samples = j.at("n_samples").get<int>();
        for (const auto &m : j.at("methods")) {
            MethodSummary s;
            s.method = m.at("method").get<std::string>();
            s.n_samples = m.at("n_samples").get<int>();
            s.n_failures = m.at("n_failures").get<int>();
            for (const auto &x : m.at("ir")) s.ir.push_back(stat_from(x));
            for (const auto &x : m.at("ms")) s.ms.push_back(stat_from(x));
            s.re_mm = stat_from(m.at("re_mm"));
            s.feature_seconds = stat_from(m.at("feature_seconds"));
            r.methods.push_back(std::move(s));
        }
        for (const auto &x : j.at("samples")) {
            SampleRecord s;
            s.id = x.at("id").get<std::string>();
            s.method = x.at("method").get<std::string>();
            s.n_predicted = x.at("n_predicted").get<int>();
            s.ir = opt_from(x.at("ir"));
            s.ms = opt_from(x.at("ms"));
            s.re_mm = x.at("re_mm").get<double>();
            s.feature_seconds = x.at("feature_seconds").get<double>();
            s.registration_success = x.at("registration_success").get<bool>();
            s.failure = x.at("failure").get<std::string>();
            r.samples.push_back(std::move(s));
        }
        return r;
    } catch (const json::exception &e) {
        throw Error(ErrorCode::kFormat, std::string("benchmark report: ") + e.what());
    }
}

std::string format_tables(const BenchmarkReport &r) {
    std::ostringstream o;
    o << "Inlier ratio (%) and match score (%) over sigma, " << r.n_samples << " samples\n";
    o << std::left << std::setw(10) << "method" << std::setw(8) << "metric";
    for (double s : r.sigma_mm) {
        std::ostringstream h;
        h << "s=" << s << "mm";
        o << std::setw(18) << h.str();
    }
    o << '\n';
    for (const auto &m : r.methods) {
        for (int which = 0; which < 2; ++which) {
            o << std::setw(10) << m.method << std::setw(8) << (which == 0 ? "IR" : "MS");
            for (const auto &s : which == 0 ? m.ir : m.ms) o << std::setw(18) << pm(s, 100.0, 2);
            o << '\n';
        }
    }
    o << "\nRegistration error and feature extraction time\n";
    o << std::setw(10) << "method" << std::setw(20) << "RE (mm)" << std::setw(20) << "time (s)" << "failures\n";
    for (const auto &m : r.methods) {
        o << std::setw(10) << m.method << std::setw(20) << pm(m.re_mm, 1.0, 2) << std::setw(20)
          << pm(m.feature_seconds, 1.0, 4) << m.n_failures << '\n';
    }
    return o.str();
}

void write_sample_csv(const std::filesystem::path &path, const BenchmarkReport &r) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << "sample,method,n_predicted,re_mm,feature_seconds,registration_success";
    for (double s : r.sigma_mm) out << ",ir_sigma_" << s;
    for (double s : r.sigma_mm) out << ",ms_sigma_" << s;
    out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto &s : r.samples) {
        out << s.id << ',' << s.method << ',' << s.n_predicted << ',' << s.re_mm << ',' << s.feature_seconds << ','
            << (s.registration_success ? 1 : 0);
        for (const auto *v : {&s.ir, &s.ms}) {
            for (const auto &x : *v) {
                out << ',';
                if (x) out << *x;
            }
        }
        out << '\n';
    }
}

std::vector<BenchmarkSample> load_benchmark_split(const std::filesystem::path &manifest_path, const std::string &split,
                                                  int max_samples) {
    const Manifest manifest = read_manifest(manifest_path);
    manifest.check_split();
    std::vector<BenchmarkSample> out;
    for (const auto &e : manifest.split(split)) {
        if (max_samples >= 0 && static_cast<int>(out.size()) >= max_samples) break;
        out.push_back({e.id, read_sample(manifest_path.parent_path() / e.path)});
    }
    if (out.empty()) throw Error(ErrorCode::kEmptyResult, "no samples in the " + split + " split");
    return out;
}

}  // namespace surfmatch
