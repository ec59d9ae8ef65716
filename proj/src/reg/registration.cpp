#include "surfmatch/reg/registration.hpp"

#include <Eigen/SVD>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "surfmatch/error.hpp"
#include "surfmatch/geom/kdtree.hpp"
#include "surfmatch/geom/random.hpp"

namespace surfmatch {

using nlohmann::json;

void RansacConfig::validate() const {
    if (n_iterations < 1) throw Error(ErrorCode::kInvalidArgument, "RANSAC needs at least one iteration");
    if (sample_size < 3) throw Error(ErrorCode::kInvalidArgument, "RANSAC sample size must be >= 3");
    if (!(inlier_threshold_mm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "RANSAC threshold must be > 0");
}

void IcpConfig::validate() const {
    if (max_iterations < 1) throw Error(ErrorCode::kInvalidArgument, "ICP needs at least one iteration");
    if (!(convergence_mm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "ICP convergence must be > 0");
    if (!(max_corr_dist_mm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "ICP gate must be > 0");
}

json to_json(const RansacConfig &c) {
    return {{"n_iterations", c.n_iterations},
            {"sample_size", c.sample_size},
            {"inlier_threshold_mm", c.inlier_threshold_mm},
            {"rng_seed", c.rng_seed}};
}

json to_json(const IcpConfig &c) {
    return {{"max_iterations", c.max_iterations},
            {"convergence_mm", c.convergence_mm},
            {"max_corr_dist_mm", c.max_corr_dist_mm}};
}

namespace {

// Rank of the centered scatter is at least 2.
bool spread_in_plane(const std::vector<Vec3> &pts, const Vec3 &mean) {
    Mat3 scatter = Mat3::Zero();
    for (const auto &p : pts) scatter += (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> es(scatter, Eigen::EigenvaluesOnly);
    const Vec3 lam = es.eigenvalues();  // ascending
    return lam(2) > 0.0 && lam(1) > 1e-12 * lam(2);
}

Vec3 mean_of(const std::vector<Vec3> &pts) {
    Vec3 m = Vec3::Zero();
    for (const auto &p : pts) m += p;
    return m / static_cast<double>(pts.size());
}

}  // namespace

std::optional<RigidTransform> try_kabsch(const std::vector<Vec3> &src, const std::vector<Vec3> &dst) {
    if (src.size() != dst.size() || src.size() < 3) return std::nullopt;
    const Vec3 cs = mean_of(src), cd = mean_of(dst);
    if (!spread_in_plane(src, cs) || !spread_in_plane(dst, cd)) return std::nullopt;
    Mat3 h = Mat3::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3 &u = svd.matrixU();
    const Mat3 &v = svd.matrixV();
    Mat3 fix = Mat3::Identity();
    fix(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    RigidTransform t;
    t.rotation = v * fix * u.transpose();
    t.translation = cd - t.rotation * cs;
    return t;
}

RigidTransform kabsch(const std::vector<Vec3> &src, const std::vector<Vec3> &dst) {
    if (src.size() != dst.size()) throw Error(ErrorCode::kInvalidArgument, "kabsch: point lists differ in length");
    if (src.size() < 3) throw Error(ErrorCode::kInsufficientPoints, "kabsch needs at least three pairs");
    auto t = try_kabsch(src, dst);
    if (!t) throw Error(ErrorCode::kDegenerateGeometry, "kabsch: collinear or coincident points");
    return *t;
}

double pair_rms(const RigidTransform &t, const std::vector<Vec3> &src, const std::vector<Vec3> &dst) {
    if (src.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) s += (t.apply(src[i]) - dst[i]).squaredNorm();
    return std::sqrt(s / static_cast<double>(src.size()));
}

RansacResult ransac_rigid(const CorrespondenceSet &matches, const PointCloud &source, const PointCloud &target,
                          const RansacConfig &config) {
    config.validate();
    matches.validate(source.size(), target.size());
    RansacResult result;
    const int n = static_cast<int>(matches.size());
    if (n < 3) {
        result.failure = "fewer than 3 matches";
        return result;
    }
    if (config.sample_size > n) {
        result.failure = "fewer matches than the RANSAC sample size";
        return result;
    }
    std::vector<Vec3> src(n), dst(n);
    for (int i = 0; i < n; ++i) {
        src[i] = source[matches.pairs[i].source];
        dst[i] = target[matches.pairs[i].target];
    }
    const double thr2 = config.inlier_threshold_mm * config.inlier_threshold_mm;

    auto score = [&](const RigidTransform &t, std::vector<int> *inliers) {
        int count = 0;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double r2 = (t.apply(src[i]) - dst[i]).squaredNorm();
            if (r2 < thr2) {
                ++count;
                sum += r2;
                if (inliers) inliers->push_back(i);
            }
        }
        return std::pair<int, double>{count, count ? std::sqrt(sum / count) : 0.0};
    };

    int best_count = -1;
    double best_rms = 0.0;
    RigidTransform best;
    std::vector<int> pick(static_cast<std::size_t>(config.sample_size));
    std::vector<Vec3> ps(pick.size()), pd(pick.size());
    for (int it = 0; it < config.n_iterations; ++it) {
        Rng rng(derive_seed(config.rng_seed, static_cast<std::uint64_t>(it)));
        // Distinct indices by rejection.
        for (std::size_t k = 0; k < pick.size(); ++k) {
            bool fresh;
            do {
                pick[k] = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
                fresh = true;
                for (std::size_t q = 0; q < k; ++q) fresh = fresh && pick[q] != pick[k];
            } while (!fresh);
            ps[k] = src[pick[k]];
            pd[k] = dst[pick[k]];
        }
        const auto hyp = try_kabsch(ps, pd);
        if (!hyp) continue;
        ++result.hypotheses_tested;
        const auto [count, rms] = score(*hyp, nullptr);
        if (count > best_count || (count == best_count && rms < best_rms)) {
            best_count = count;
            best_rms = rms;
            best = *hyp;
        }
    }
    if (best_count < 3) {
        result.failure = "best hypothesis has fewer than 3 inliers";
        return result;
    }
    std::vector<int> inliers;
    score(best, &inliers);
    std::vector<Vec3> is, id;
    for (int i : inliers) {
        is.push_back(src[i]);
        id.push_back(dst[i]);
    }
    const auto refit = try_kabsch(is, id);
    result.transform = refit ? *refit : best;
    result.inliers.clear();
    if (score(result.transform, &result.inliers).first < 3) {
        // The refit drifted off its own support; keep the sampled hypothesis.
        result.transform = best;
        result.inliers.clear();
        score(best, &result.inliers);
    }
    result.inlier_rms = score(result.transform, nullptr).second;
    result.success = true;
    return result;
}

namespace {

struct Pairing {
    std::vector<Vec3> src, dst;
    double cost = 0.0;  // sum of min(d^2, gate^2)
};

Pairing pair_up(const NeighborIndex &index, const PointCloud &source, const PointCloud &target, const RigidTransform &t,
                double gate) {
    const RigidTransform inv = t.inverse();
    const double gate2 = gate * gate;
    Pairing p;
    for (const auto &q : target.points) {
        const Neighbor nb = index.nearest(inv.apply(q));
        const double d2 = nb.distance * nb.distance;
        if (d2 < gate2) {
            p.src.push_back(source[nb.index]);
            p.dst.push_back(q);
            p.cost += d2;
        } else {
            p.cost += gate2;
        }
    }
    return p;
}

double movement_rms(const PointCloud &source, const RigidTransform &a, const RigidTransform &b) {
    double s = 0.0;
    for (const auto &p : source.points) s += (a.apply(p) - b.apply(p)).squaredNorm();
    return std::sqrt(s / static_cast<double>(source.size()));
}

}  // namespace

IcpResult icp_refine(const PointCloud &source, const PointCloud &target, const RigidTransform &init,
                     const IcpConfig &config) {
    config.validate();
    if (source.empty() || target.empty()) throw Error(ErrorCode::kInsufficientPoints, "ICP on an empty cloud");
    const NeighborIndex index(source);
    const double m = static_cast<double>(target.size());
    IcpResult r;
    r.transform = init;
    Pairing cur = pair_up(index, source, target, init, config.max_corr_dist_mm);
    r.rms_trace.push_back(std::sqrt(cur.cost / m));
    if (cur.src.empty()) {
        r.failed = true;
        return r;
    }
    for (int it = 0; it < config.max_iterations; ++it) {
        const auto fit = try_kabsch(cur.src, cur.dst);
        if (!fit) break;
        Pairing next = pair_up(index, source, target, *fit, config.max_corr_dist_mm);
        const double moved = movement_rms(source, r.transform, *fit);
        if (next.cost > cur.cost) {
            // rounding-level increase: keep the previous transform
            r.converged = moved < config.convergence_mm;
            break;
        }
        r.transform = *fit;
        r.rms_trace.push_back(std::sqrt(next.cost / m));
        ++r.iterations;
        cur = std::move(next);
        if (moved < config.convergence_mm || cur.src.size() < 3) {
            r.converged = moved < config.convergence_mm;
            break;
        }
    }
    return r;
}

std::vector<Vec3> predicted_displacements(const PointCloud &source, const RigidTransform &transform) {
    std::vector<Vec3> v;
    v.reserve(source.size());
    for (const auto &p : source.points) v.push_back(transform.apply(p) - p);
    return v;
}

RegistrationResult register_pair(const CorrespondenceSet &matches, const PointCloud &source, const PointCloud &target,
                                 const RansacConfig &ransac, const IcpConfig &icp) {
    RegistrationResult r;
    r.ransac = ransac_rigid(matches, source, target, ransac);
    if (!r.ransac.success) {
        r.transform = RigidTransform::identity();
        return r;
    }
    r.icp = icp_refine(source, target, r.ransac.transform, icp);
    r.transform = r.icp.transform;
    r.success = !r.icp.failed;
    return r;
}

json transform_to_json(const RigidTransform &t) {
    json rot = json::array();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rot.push_back(t.rotation(i, j));
    return {{"rotation", rot}, {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

RigidTransform transform_from_json(const json &j) {
    try {
        const auto rot = j.at("rotation").get<std::vector<double>>();
        const auto tr = j.at("translation").get<std::vector<double>>();
        if (rot.size() != 9 || tr.size() != 3) throw Error(ErrorCode::kFormat, "transform needs 9 + 3 numbers");
        RigidTransform t;
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) t.rotation(i, k) = rot[3 * i + k];
        t.translation = Vec3(tr[0], tr[1], tr[2]);
        if (!t.is_valid(1e-6)) throw Error(ErrorCode::kFormat, "transform rotation is not a proper rotation");
        return t;
    } catch (const json::exception &e) {
        throw Error(ErrorCode::kFormat, std::string("transform JSON: ") + e.what());
    }
}

json to_json(const RegistrationResult &r) {
    return {{"success", r.success},
            {"transform", transform_to_json(r.transform)},
            {"ransac",
             {{"success", r.ransac.success},
              {"failure", r.ransac.failure},
              {"inlier_count", r.ransac.inliers.size()},
              {"inlier_rms_mm", r.ransac.inlier_rms},
              {"hypotheses_tested", r.ransac.hypotheses_tested}}},
            {"icp",
             {{"iterations", r.icp.iterations},
              {"converged", r.icp.converged},
              {"failed", r.icp.failed},
              {"rms_trace_mm", r.icp.rms_trace}}}};
}

}  // namespace surfmatch
