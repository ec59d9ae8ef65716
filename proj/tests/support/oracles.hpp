#pragma once

// Straight-line reference evaluations written with explicit loops. Shared by
// the unit tests and the acceptance binary; nothing here calls into the
// library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "surfmatch/geom/types.hpp"

namespace oracle {

using Mat = Eigen::MatrixXd;

inline Mat random_matrix(std::mt19937_64 &rng, int rows, int cols, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

// Row i of the output: x_i + FC([q_i, sum_j a_ij v_j]) with
// q_i = Wq x_i, k_j = Wk c_j, v_j = Wv c_j, a_ij = softmax_j(q_i . k_j / sqrt(d)).
inline Mat attention(const Mat &x, const Mat &ctx, const Mat &wq, const Mat &wk, const Mat &wv, const Mat &fc_w,
                     const Mat &fc_b) {
    const int n = static_cast<int>(x.rows()), m = static_cast<int>(ctx.rows()), d = static_cast<int>(x.cols());
    Mat out(n, d);
    for (int i = 0; i < n; ++i) {
        std::vector<double> q(d, 0.0);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) q[r] += wq(r, c) * x(i, c);
        std::vector<double> logit(m, 0.0);
        std::vector<std::vector<double>> v(m, std::vector<double>(d, 0.0));
        for (int j = 0; j < m; ++j) {
            std::vector<double> k(d, 0.0);
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) {
                    k[r] += wk(r, c) * ctx(j, c);
                    v[j][r] += wv(r, c) * ctx(j, c);
                }
            for (int r = 0; r < d; ++r) logit[j] += q[r] * k[r];
            logit[j] /= std::sqrt(static_cast<double>(d));
        }
        double mx = logit[0];
        for (int j = 1; j < m; ++j) mx = std::max(mx, logit[j]);
        double z = 0.0;
        for (int j = 0; j < m; ++j) z += std::exp(logit[j] - mx);
        std::vector<double> msg(d, 0.0);
        for (int j = 0; j < m; ++j) {
            const double a = std::exp(logit[j] - mx) / z;
            for (int r = 0; r < d; ++r) msg[r] += a * v[j][r];
        }
        for (int r = 0; r < d; ++r) {
            double s = fc_b(0, r);
            for (int c = 0; c < d; ++c) s += fc_w(r, c) * q[c] + fc_w(r, d + c) * msg[c];
            out(i, r) = x(i, r) + s;
        }
    }
    return out;
}

inline Mat scores(const Mat &a, const Mat &b) {
    Mat s(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.rows(); ++j) {
            double acc = 0.0;
            for (int c = 0; c < a.cols(); ++c) acc += a(i, c) * b(j, c);
            s(i, j) = acc;
        }
    return s;
}

inline Mat dual_softmax(const Mat &s) {
    const int n = static_cast<int>(s.rows()), m = static_cast<int>(s.cols());
    Mat out(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double row = 0.0, col = 0.0;
            for (int jj = 0; jj < m; ++jj) row += std::exp(s(i, jj) - s(i, j));
            for (int ii = 0; ii < n; ++ii) col += std::exp(s(ii, j) - s(i, j));
            out(i, j) = (1.0 / row) * (1.0 / col);
        }
    return out;
}

// (i, j) kept when j is the first maximum of row i and i the first maximum of column j.
inline std::vector<surfmatch::Correspondence> mutual_nn(const Mat &m) {
    std::vector<surfmatch::Correspondence> out;
    for (int i = 0; i < m.rows(); ++i) {
        int bj = 0;
        for (int j = 1; j < m.cols(); ++j)
            if (m(i, j) > m(i, bj)) bj = j;
        int bi = 0;
        for (int ii = 1; ii < m.rows(); ++ii)
            if (m(ii, bj) > m(bi, bj)) bi = ii;
        if (bi == i) out.push_back({i, bj});
    }
    return out;
}

inline double focal(const Mat &m, const std::vector<surfmatch::Correspondence> &gt, double alpha, double gamma) {
    double s = 0.0;
    for (const auto &c : gt) {
        const double p = std::max(m(c.source, c.target), 1e-12);
        s += alpha * std::pow(1.0 - p, gamma) * std::log(p);
    }
    return -s / static_cast<double>(gt.size());
}

inline double bce(const std::vector<double> &o, const std::vector<double> &y) {
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double p = std::min(std::max(o[i], 1e-12), 1.0 - 1e-12);
        s += y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    }
    return -s / static_cast<double>(o.size());
}

// Inliers among predicted pairs: sigma 0 compares indices, otherwise target distance < sigma.
inline int inliers(const std::vector<surfmatch::Correspondence> &pred, const std::vector<surfmatch::Correspondence> &gt,
                   const surfmatch::PointCloud &target, double sigma) {
    int count = 0;
    for (const auto &p : pred) {
        int g = -1;
        for (const auto &c : gt)
            if (c.source == p.source) g = c.target;
        if (g < 0) continue;
        if (sigma == 0.0) {
            count += (g == p.target) ? 1 : 0;
        } else {
            const double dx = target[g].x() - target[p.target].x();
            const double dy = target[g].y() - target[p.target].y();
            const double dz = target[g].z() - target[p.target].z();
            count += (std::sqrt(dx * dx + dy * dy + dz * dz) < sigma) ? 1 : 0;
        }
    }
    return count;
}

inline double rms_error(const std::vector<surfmatch::Vec3> &a, const std::vector<surfmatch::Vec3> &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int c = 0; c < 3; ++c) s += (a[i][c] - b[i][c]) * (a[i][c] - b[i][c]);
    return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace oracle
