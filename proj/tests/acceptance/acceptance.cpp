// Acceptance run: one PASS/FAIL line per criterion, diagnostics indented
// below it. Exit status is nonzero when any criterion fails.
//
// usage: acceptance [--only N]... [--workdir DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "surfmatch/eval/benchmark.hpp"
#include "surfmatch/eval/metrics.hpp"
#include "surfmatch/fpfh/fpfh.hpp"
#include "surfmatch/geom/normals.hpp"
#include "surfmatch/geom/random.hpp"
#include "surfmatch/net/model.hpp"
#include "surfmatch/reg/registration.hpp"
#include "surfmatch/synth/dataset.hpp"
#include "surfmatch/synth/deformation.hpp"
#include "surfmatch/synth/mesh.hpp"
#include "surfmatch/synth/sample.hpp"
#include "surfmatch/train/training.hpp"

using namespace surfmatch;
using Eigen::MatrixXd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void note(const std::string &s) { std::cout << "    " << s << std::endl; }

std::string fmt(const char *f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double max_abs_diff(const MatrixXd &a, const MatrixXd &b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
    return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

// ------------------------------------------------------------------ 1

bool criterion_oracles() {
    const int instances = 25;
    double attn = 0, cross = 0, dual = 0, focal = 0, bce = 0, metric = 0, re = 0;
    for (int seed = 0; seed < instances; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        const int d = 2 + seed % 7, n = 1 + seed % 9, m = 1 + (seed * 5) % 8;
        const AttentionParams p{oracle::random_matrix(rng, d, d), oracle::random_matrix(rng, d, d),
                                oracle::random_matrix(rng, d, d), oracle::random_matrix(rng, d, 2 * d),
                                oracle::random_matrix(rng, 1, d)};
        const MatrixXd xs = oracle::random_matrix(rng, n, d, 2.0), xt = oracle::random_matrix(rng, m, d, 2.0);
        attn = std::max(attn, max_abs_diff(self_attention(xs, p),
                                           oracle::attention(xs, xs, p.wq, p.wk, p.wv, p.fc_w, p.fc_b)));
        const auto [us, ut] = cross_attention(xs, xt, p);
        cross = std::max({cross, max_abs_diff(us, oracle::attention(xs, xt, p.wq, p.wk, p.wv, p.fc_w, p.fc_b)),
                          max_abs_diff(ut, oracle::attention(xt, xs, p.wq, p.wk, p.wv, p.fc_w, p.fc_b))});

        const MatrixXd scores = oracle::random_matrix(rng, n, m, 4.0);
        const MatrixXd conf = dual_softmax(scores);
        dual = std::max(dual, max_abs_diff(conf, oracle::dual_softmax(scores)));

        std::vector<int> cols(m);
        for (int j = 0; j < m; ++j) cols[j] = j;
        std::shuffle(cols.begin(), cols.end(), rng);
        CorrespondenceSet gt;
        for (int i = 0; i < std::min(n, m); ++i) gt.pairs.push_back({i, cols[i]});
        focal = std::max(focal, std::abs(focal_loss(conf, gt, 0.25, 2.0) - oracle::focal(conf, gt.pairs, 0.25, 2.0)));

        std::uniform_real_distribution<double> u(-0.2, 1.2);
        Eigen::VectorXd o(n);
        std::vector<std::uint8_t> labels(n);
        std::vector<double> ov(n), yv(n);
        for (int i = 0; i < n; ++i) {
            ov[i] = o(i) = std::clamp(u(rng), 0.0, 1.0);
            labels[i] = static_cast<std::uint8_t>(rng() % 2);
            yv[i] = labels[i];
        }
        bce = std::max(bce, std::abs(visibility_loss(o, labels) - oracle::bce(ov, yv)));

        // Metrics on a random target cloud with random predictions.
        PointCloud target;
        std::uniform_real_distribution<double> pos(0.0, 6.0);
        const int tm = 4 + seed % 10, tn = tm + 3;
        for (int j = 0; j < tm; ++j) target.points.emplace_back(pos(rng), pos(rng), pos(rng));
        std::vector<int> src(tn);
        for (int i = 0; i < tn; ++i) src[i] = i;
        std::shuffle(src.begin(), src.end(), rng);
        CorrespondenceSet truth, pred;
        for (int j = 0; j < tm; ++j) truth.pairs.push_back({src[j], j});
        std::shuffle(src.begin(), src.end(), rng);
        std::vector<int> tj(tm);
        for (int j = 0; j < tm; ++j) tj[j] = j;
        std::shuffle(tj.begin(), tj.end(), rng);
        for (int k = 0; k < tm - 1; ++k) pred.pairs.push_back({src[k], tj[k]});
        for (double sigma : {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}) {
            const double inl = oracle::inliers(pred.pairs, truth.pairs, target, sigma);
            metric = std::max({metric, std::abs(*inlier_ratio(pred, truth, target, sigma) - inl / pred.size()),
                               std::abs(match_score(pred, truth, target, sigma) - inl / tm)});
        }
        std::vector<Vec3> va, vb;
        for (int i = 0; i < tn; ++i) {
            va.push_back(Vec3(pos(rng), pos(rng), pos(rng)));
            vb.push_back(Vec3(pos(rng), pos(rng), pos(rng)));
        }
        re = std::max(re, std::abs(registration_error(va, vb) - oracle::rms_error(va, vb)));
    }
    note(std::to_string(instances) + " instances per quantity; worst absolute differences:");
    note("self attention " + fmt("%.2e", attn) + ", cross attention " + fmt("%.2e", cross) + " (limit 1e-9)");
    note("dual softmax " + fmt("%.2e", dual) + ", focal " + fmt("%.2e", focal) + ", BCE " + fmt("%.2e", bce) +
         ", IR/MS " + fmt("%.2e", metric) + ", RE " + fmt("%.2e", re) + " (limit 1e-12)");
    return attn < 1e-9 && cross < 1e-9 && dual < 1e-12 && focal < 1e-12 && bce < 1e-12 && metric < 1e-12 &&
           re < 1e-12;
}

// ------------------------------------------------------------------ 2

bool criterion_gradients() {
    const NetworkConfig cfg = gradcheck::tiny_config(8);
    double worst = 0.0;
    std::string where;
    std::size_t entries = 0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        const TrainingSample sample = gradcheck::tiny_instance(seed, 12, 5, cfg);
        const NetworkParams params = gradcheck::tiny_params(cfg, 100 + seed, sample);
        const gradcheck::Report r = gradcheck::check(params, sample);
        entries += r.entries;
        if (r.worst_relative > worst) {
            worst = r.worst_relative;
            where = r.worst_array + " (seed " + std::to_string(seed) + ")";
        }
    }
    note(std::to_string(seeds) + " seeds, n=12 m=5 d=8, " + std::to_string(entries) +
         " parameter entries; worst relative error " + fmt("%.2e", worst) + " in " + where);
    return worst < 1e-4;
}

// ------------------------------------------------------------------ 3 and 5

/// Expected IR at `sigma` of pairing every source point with a uniformly
/// random target point: a visible source point lands within sigma of its
/// partner with probability (#targets within sigma of the partner) / m.
double random_assignment_ir(const SamplePair &pair, double sigma) {
    double sum = 0.0;
    const std::size_t m = pair.m();
    for (const auto &c : pair.gt_matches.pairs) {
        int close = 0;
        for (std::size_t j = 0; j < m; ++j) close += is_inlier(static_cast<int>(j), c.target, pair.target, sigma);
        sum += static_cast<double>(close) / static_cast<double>(m);
    }
    return sum / static_cast<double>(pair.n());
}

struct ToyRun {
    bool ok = false;
    NetworkParams params;
    std::vector<BenchmarkSample> held_out;
};

bool criterion_training(const fs::path &workdir, ToyRun &run) {
    const auto t0 = Clock::now();
    DatasetSpec spec;
    spec.n_meshes = 4;
    spec.samples_per_mesh = 25;
    spec.n_vertices = 1500;
    spec.n_test_meshes = 1;
    spec.seed = 7;
    const fs::path dir = workdir / "toy_dataset";
    generate_dataset(dir, spec, true);
    const NetworkConfig net;
    const TrainConfig tc;
    const std::vector<TrainingSample> samples = load_training_split(dir / "manifest.json", net);
    run.held_out = load_benchmark_split(dir / "manifest.json", "test");
    double ratio_lo = 1, ratio_hi = 0;
    for (const auto &s : run.held_out) {
        ratio_lo = std::min(ratio_lo, s.pair.visibility_ratio);
        ratio_hi = std::max(ratio_hi, s.pair.visibility_ratio);
    }
    note(std::to_string(samples.size()) + " training samples (3 meshes), " + std::to_string(run.held_out.size()) +
         " held-out samples (1 mesh), n=1500, m/n in [" + fmt("%.3f", ratio_lo) + ", " + fmt("%.3f", ratio_hi) + "]");

    const NetworkParams init = NetworkParams::initialize(net, 11);
    TrainResult result = train(samples, init, tc);
    run.params = std::move(result.params);
    const double first = result.log.front().total, last = result.log.back().total;
    note(std::to_string(result.log.size()) + " epochs, lr " + fmt("%g", tc.learning_rate) + " decay " +
         fmt("%g", tc.lr_decay) + " clip " + fmt("%g", tc.max_grad_norm) + ": total loss " + fmt("%.4f", first) +
         " -> " + fmt("%.4f", last) + " (ratio " + fmt("%.3f", last / first) + ", limit 0.7)");
    note("epoch 1 split: matching " + fmt("%.4f", result.log.front().matching) + ", visibility " +
         fmt("%.4f", result.log.front().visibility) + "; epoch 35: matching " +
         fmt("%.4f", result.log.back().matching) + ", visibility " + fmt("%.4f", result.log.back().visibility));

    const double sigma = 3.0;
    std::vector<double> masked, unmasked, baseline;
    int undefined = 0;
    double predicted = 0.0, above = 0.0;
    for (const auto &s : run.held_out) {
        const MatchResult r = match(s.pair.source, s.pair.target, run.params);
        predicted += static_cast<double>(r.matches.size());
        for (auto v : r.visibility.mask) above += v;
        if (const auto ir = inlier_ratio(r.matches, s.pair.gt_matches, s.pair.target, sigma)) {
            masked.push_back(*ir);
        } else {
            ++undefined;
        }
        const CorrespondenceSet all = mutual_nn_select(r.confidence);
        if (const auto ir = inlier_ratio(all, s.pair.gt_matches, s.pair.target, sigma)) unmasked.push_back(*ir);
        baseline.push_back(random_assignment_ir(s.pair, sigma));
    }
    const double held = summarize(masked).mean, base = summarize(baseline).mean;
    const double k = static_cast<double>(run.held_out.size());
    note("held-out IR@3mm " + fmt("%.5f", held) + " over " + std::to_string(masked.size()) + " samples with matches (" +
         std::to_string(undefined) + " undefined: empty after the visibility mask); random-assignment baseline " +
         fmt("%.5f", base) + ", need > " + fmt("%.5f", 5 * base));
    note("mean matches per sample " + fmt("%.2f", predicted / k) + ", mean points above the visibility threshold " +
         fmt("%.2f", above / k));
    note("diagnostic, mask not applied: IR@3mm " + fmt("%.5f", summarize(unmasked).mean) + " (" +
         fmt("%.1f", summarize(unmasked).mean / base) + "x baseline)");
    const double elapsed = seconds_since(t0);
    note("runtime " + fmt("%.0f", elapsed) + " s (limit 1800)");
    run.ok = true;
    return last < 0.7 * first && !masked.empty() && held > 5 * base && elapsed < 1800;
}

bool criterion_orderings(const ToyRun &run) {
    if (!run.ok) {
        note("needs the trained network from criterion 3");
        return false;
    }
    BenchmarkConfig bc;
    bc.methods = {MatchMethod::kLearned, MatchMethod::kFpfh, MatchMethod::kGroundTruth, MatchMethod::kRandom};
    bc.seed = 3;
    const BenchmarkReport report = run_benchmark(run.held_out, bc, &run.params);
    int violations = 0, checked = 0, skipped = 0;
    for (const auto &rec : report.samples) {
        std::optional<double> prev_ir, prev_ms;
        for (std::size_t s = 0; s < report.sigma_mm.size(); ++s) {
            for (auto [cur, prev] : {std::pair{rec.ir[s], &prev_ir}, std::pair{rec.ms[s], &prev_ms}}) {
                if (!cur) {
                    ++skipped;
                    continue;
                }
                ++checked;
                if (*prev && *cur < **prev) ++violations;
                *prev = cur;
            }
        }
    }
    for (const auto &m : report.methods) {
        for (std::size_t s = 1; s < report.sigma_mm.size(); ++s) {
            if (m.ir[s].count == m.ir[s - 1].count && m.ir[s].count > 0 && m.ir[s].mean < m.ir[s - 1].mean) ++violations;
            if (m.ms[s].count > 0 && m.ms[s].mean < m.ms[s - 1].mean) ++violations;
        }
    }
    std::map<std::string, double> re;
    for (const auto &m : report.methods) {
        re[m.method] = m.re_mm.mean;
        std::string line = m.method + ": RE " + fmt("%.2f", m.re_mm.mean) + " +- " + fmt("%.2f", m.re_mm.std) +
                           " mm, failures " + std::to_string(m.n_failures) + ", IR@0..5";
        for (const auto &st : m.ir) line += st.count ? " " + fmt("%.4f", st.mean) : std::string(" -");
        note(line);
    }
    note(std::to_string(report.samples.size() / report.methods.size()) + " held-out samples; " + std::to_string(checked) +
         " defined IR/MS values checked, " + std::to_string(skipped) +
         " undefined or not applicable (FPFH matches live on voxelized clouds); " + std::to_string(violations) +
         " monotonicity violations");
    const bool ordered = re.at("learned") >= re.at("gt");
    note("learned RE " + fmt("%.2f", re.at("learned")) + " >= ground-truth RE " + fmt("%.2f", re.at("gt")) + ": " +
         (ordered ? "yes" : "no"));
    return violations == 0 && checked > 0 && ordered;
}

// ------------------------------------------------------------------ 4

bool criterion_registration() {
    const auto t0 = Clock::now();
    double worst_rigid = 0.0;
    int rigid_ok = 0;
    const int count = 100;
    std::vector<double> re_deformed, disp, deform;
    for (int s = 0; s < count; ++s) {
        const std::uint64_t seed = 5000 + s;
        const SurfaceMesh mesh = generate_liver_mesh(seed, 1500);

        DeformationParams rigid_params = sample_deformation_params(seed);
        rigid_params.max_displacement_target_mm = 0.0;
        SampleOptions clean;
        clean.noise_max_mm = 0.0;
        const SamplePair rigid = make_sample_pair(mesh, rigid_params, seed, clean);
        const RegistrationResult r = register_pair(rigid.gt_matches, rigid.source, rigid.target);
        const double err = registration_error(rigid.gt_displacement, predicted_displacements(rigid.source, r.transform));
        worst_rigid = std::max(worst_rigid, err);
        rigid_ok += r.success && err < 1e-6;

        const SamplePair deformed = make_sample_pair(mesh, sample_deformation_params(seed), seed);
        const RegistrationResult d = register_pair(deformed.gt_matches, deformed.source, deformed.target);
        re_deformed.push_back(
            registration_error(deformed.gt_displacement, predicted_displacements(deformed.source, d.transform)));
        double sd = 0.0, sf = 0.0;
        for (std::size_t i = 0; i < deformed.n(); ++i) {
            sd += deformed.gt_displacement[i].norm();
            sf += deformed.deformation[i].norm();
        }
        disp.push_back(sd / static_cast<double>(deformed.n()));
        deform.push_back(sf / static_cast<double>(deformed.n()));
    }
    const Stat re = summarize(re_deformed), d = summarize(disp), f = summarize(deform);
    note("rigid-only, noise-free: " + std::to_string(rigid_ok) + "/" + std::to_string(count) +
         " with RE < 1e-6 mm (worst " + fmt("%.2e", worst_rigid) + ")");
    note("deformed (7-15 mm peak, 2 mm noise): gt-match RE " + fmt("%.3f", re.mean) + " +- " + fmt("%.3f", re.std) +
         " mm; mean gt displacement magnitude (rigid motion plus deformation) " + fmt("%.2f", d.mean) +
         " mm; mean non-rigid part alone " +
         fmt("%.3f", f.mean) + " mm");
    const double elapsed = seconds_since(t0);
    note("runtime " + fmt("%.0f", elapsed) + " s (limit 600)");
    return rigid_ok == count && re.mean < d.mean && elapsed < 600;
}

// ------------------------------------------------------------------ 6

bool criterion_generator() {
    const auto t0 = Clock::now();
    const int count = 1000, n_meshes = 10;
    std::vector<SurfaceMesh> meshes;
    for (int k = 0; k < n_meshes; ++k) meshes.push_back(generate_liver_mesh(900 + k, 1500));
    std::map<std::string, int> violations{{"ratio", 0},       {"noise", 0},       {"translation", 0},
                                          {"bijection", 0},   {"determinism", 0}, {"peak deformation", 0},
                                          {"rotation", 0}};
    double worst_noise = 0.0, worst_t = 0.0, lo = 1.0, hi = 0.0;
    for (int s = 0; s < count; ++s) {
        const std::uint64_t seed = 77000 + s;
        const SurfaceMesh &mesh = meshes[s % n_meshes];
        const DeformationParams params = sample_deformation_params(seed);
        const SamplePair pair = make_sample_pair(mesh, params, seed);

        const double ratio = static_cast<double>(pair.m()) / static_cast<double>(pair.n());
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        if (ratio < 0.20 || ratio > 0.24) ++violations["ratio"];

        for (const auto &c : pair.gt_matches.pairs) {
            const Vec3 clean = pair.rigid.apply(pair.source[c.source] + pair.deformation[c.source]);
            worst_noise = std::max(worst_noise, (pair.target[c.target] - clean).norm());
        }
        const double t = pair.rigid.translation.norm();
        worst_t = std::max(worst_t, t);
        if (t > 20.0) ++violations["translation"];
        if (!pair.rigid.is_valid(1e-9)) ++violations["rotation"];

        std::set<int> src, tgt;
        for (const auto &c : pair.gt_matches.pairs) {
            src.insert(c.source);
            tgt.insert(c.target);
        }
        const bool bijective = src.size() == pair.m() && tgt.size() == pair.m() && pair.gt_matches.size() == pair.m() &&
                               *tgt.rbegin() == static_cast<int>(pair.m()) - 1 && *tgt.begin() == 0;
        if (!bijective) ++violations["bijection"];

        double peak = 0.0;
        for (const auto &v : pair.deformation) peak = std::max(peak, v.norm());
        if (peak < 7.0 - 1e-9 || peak > 15.0 + 1e-9) ++violations["peak deformation"];

        {
            const SamplePair again = make_sample_pair(mesh, sample_deformation_params(seed), seed);
            if (again.target.points != pair.target.points || again.gt_matches.pairs != pair.gt_matches.pairs ||
                again.gt_displacement != pair.gt_displacement) {
                ++violations["determinism"];
            }
        }
    }
    if (worst_noise > 2.0) ++violations["noise"];
    int total = 0;
    std::string line;
    for (const auto &[k, v] : violations) {
        total += v;
        line += (line.empty() ? "" : ", ") + k + " " + std::to_string(v);
    }
    note(std::to_string(count) + " samples over " + std::to_string(n_meshes) + " meshes (n=1500): m/n in [" +
         fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "], worst noise " + fmt("%.4f", worst_noise) +
         " mm, worst translation " + fmt("%.3f", worst_t) + " mm; every sample generated twice");
    note("violations: " + line);
    const double elapsed = seconds_since(t0);
    note("runtime " + fmt("%.0f", elapsed) + " s (limit 600)");
    return total == 0 && elapsed < 600;
}

// ------------------------------------------------------------------ 7

bool criterion_fpfh() {
    const int trials = 100;
    double drift = 0.0;
    const FpfhConfig cfg;
    const double r_n = cfg.normal_radius_factor * cfg.voxel_mm, r_f = cfg.feature_radius_factor * cfg.voxel_mm;
    std::size_t points = 0;
    for (int t = 0; t < trials; ++t) {
        const std::uint64_t seed = 300 + t;
        const SurfaceMesh mesh = generate_liver_mesh(seed, 800);
        const SamplePair pair = make_sample_pair(mesh, sample_deformation_params(seed), seed);
        const PointCloud cloud = voxel_downsample(pair.target, cfg.voxel_mm);
        const PointCloud moved = apply_rigid(cloud, random_rigid(derive_seed(seed, 9), 50.0));
        const FpfhResult a = compute_fpfh(cloud, estimate_normals_radius(cloud, r_n), r_f);
        const FpfhResult b = compute_fpfh(moved, estimate_normals_radius(moved, r_n), r_f);
        points += a.descriptors.size();
        for (std::size_t i = 0; i < a.descriptors.size(); ++i) {
            for (int k = 0; k < kFpfhSize; ++k) drift = std::max(drift, std::abs(a.descriptors[i][k] - b.descriptors[i][k]));
        }
    }
    note(std::to_string(trials) + " random rigid motions of voxelized target clouds (" + std::to_string(points) +
         " descriptors): max per-bin drift " + fmt("%.2e", drift) + " (limit 1e-6)");
    return drift <= 1e-6;
}

}  // namespace

int main(int argc, char **argv) {
    std::set<int> only;
    fs::path workdir = fs::temp_directory_path() / "surfmatch_acceptance";
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            only.insert(std::stoi(argv[++i]));
        } else if (a == "--workdir" && i + 1 < argc) {
            workdir = argv[++i];
        } else {
            std::cerr << "usage: acceptance [--only N]... [--workdir DIR]\n";
            return 2;
        }
    }
    fs::create_directories(workdir);

    ToyRun toy;
    const std::vector<std::pair<std::string, std::function<bool()>>> criteria{
        {"equation oracles", criterion_oracles},
        {"gradient check", criterion_gradients},
        {"training smoke test", [&] { return criterion_training(workdir, toy); }},
        {"registration with ground-truth matches", criterion_registration},
        {"metric orderings", [&] { return criterion_orderings(toy); }},
        {"dataset generator invariants", criterion_generator},
        {"FPFH rigid invariance", criterion_fpfh},
    };
    // Criterion 5 reuses the network trained for criterion 3.
    if (only.count(5)) only.insert(3);

    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = Clock::now();
        bool pass = false;
        std::cout << "criterion " << id << " (" << criteria[k].first << ")\n";
        try {
            pass = criteria[k].second();
        } catch (const std::exception &e) {
            note(std::string("error: ") + e.what());
        }
        failed += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[k].first << " ("
                  << fmt("%.1f", seconds_since(t0)) << " s)\n"
                  << std::flush;
    }
    return failed == 0 ? 0 : 1;
}
