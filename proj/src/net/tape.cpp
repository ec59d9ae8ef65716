#include "surfmatch/net/tape.hpp"

#include <cmath>

#include "surfmatch/error.hpp"

namespace surfmatch::ad {
namespace {

void require(bool ok, const std::string &what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, "tape: " + what);
}

}  // namespace

Matrix row_softmax(const Matrix &a) {
    Matrix y(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double mx = a.row(i).maxCoeff();
        y.row(i) = (a.row(i).array() - mx).exp();
        y.row(i) /= y.row(i).sum();
    }
    return y;
}

Matrix col_softmax(const Matrix &a) {
    Matrix y(a.rows(), a.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const double mx = a.col(j).maxCoeff();
        y.col(j) = (a.col(j).array() - mx).exp();
        y.col(j) /= y.col(j).sum();
    }
    return y;
}

Var Tape::push(Matrix value, std::string name, std::vector<Var> parents,
               std::function<void(Tape &, const Matrix &)> pullback) {
    Node node;
    node.value = std::move(value);
    node.name = std::move(name);
    for (Var p : parents) node.needs_grad = node.needs_grad || nodes_.at(p.id).needs_grad;
    if (node.needs_grad) node.pullback = std::move(pullback);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix value, std::string name) { return push(std::move(value), std::move(name), {}, nullptr); }

Var Tape::variable(Matrix value, std::string name) {
    Var v = push(std::move(value), std::move(name), {}, nullptr);
    nodes_.back().needs_grad = true;
    return v;
}

Matrix Tape::grad(Var v) const {
    const Node &n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::accumulate(Var v, const Matrix &g) {
    Node &n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

Var Tape::matmul(Var a, Var b, std::string name) {
    require(value(a).cols() == value(b).rows(), "matmul shape mismatch in " + name);
    return push(value(a) * value(b), std::move(name), {a, b}, [a, b](Tape &t, const Matrix &g) {
        t.accumulate(a, g * t.value(b).transpose());
        t.accumulate(b, t.value(a).transpose() * g);
    });
}

Var Tape::matmul_bt(Var a, Var b, std::string name) {
    require(value(a).cols() == value(b).cols(), "matmul_bt shape mismatch in " + name);
    return push(value(a) * value(b).transpose(), std::move(name), {a, b}, [a, b](Tape &t, const Matrix &g) {
        t.accumulate(a, g * t.value(b));
        t.accumulate(b, g.transpose() * t.value(a));
    });
}

Var Tape::add(Var a, Var b, std::string name) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add shape mismatch in " + name);
    return push(value(a) + value(b), std::move(name), {a, b}, [a, b](Tape &t, const Matrix &g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var Tape::add_row(Var a, Var row, std::string name) {
    require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row shape mismatch in " + name);
    Matrix y = value(a);
    y.rowwise() += value(row).row(0);
    return push(std::move(y), std::move(name), {a, row}, [a, row](Tape &t, const Matrix &g) {
        t.accumulate(a, g);
        t.accumulate(row, g.colwise().sum());
    });
}

Var Tape::scale(Var a, double s, std::string name) {
    return push(value(a) * s, std::move(name), {a}, [a, s](Tape &t, const Matrix &g) { t.accumulate(a, g * s); });
}

Var Tape::relu(Var a, std::string name) {
    return push(value(a).cwiseMax(0.0), std::move(name), {a}, [a](Tape &t, const Matrix &g) {
        t.accumulate(a, (t.value(a).array() > 0.0).select(g, 0.0));
    });
}

Var Tape::concat_cols(Var a, Var b, std::string name) {
    const Matrix &va = value(a), &vb = value(b);
    require(va.rows() == vb.rows(), "concat row mismatch in " + name);
    Matrix y(va.rows(), va.cols() + vb.cols());
    y << va, vb;
    const Eigen::Index ca = va.cols(), cb = vb.cols();
    return push(std::move(y), std::move(name), {a, b}, [a, b, ca, cb](Tape &t, const Matrix &g) {
        t.accumulate(a, g.leftCols(ca));
        t.accumulate(b, g.rightCols(cb));
    });
}

Var Tape::gather_rows(Var a, std::vector<int> rows, std::string name) {
    const Matrix &va = value(a);
    Matrix y(static_cast<Eigen::Index>(rows.size()), va.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < va.rows(), "gather index out of range in " + name);
        y.row(static_cast<Eigen::Index>(i)) = va.row(rows[i]);
    }
    const Eigen::Index n = va.rows();
    return push(std::move(y), std::move(name), {a}, [a, rows = std::move(rows), n](Tape &t, const Matrix &g) {
        Matrix ga = Matrix::Zero(n, g.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
        t.accumulate(a, ga);
    });
}

Var Tape::row_softmax(Var a, std::string name) {
    Var y = push(ad::row_softmax(value(a)), std::move(name), {a}, nullptr);
    if (nodes_[y.id].needs_grad) {
        nodes_[y.id].pullback = [a, y](Tape &t, const Matrix &g) {
            const Matrix &s = t.value(y);
            const Eigen::VectorXd dot = (g.array() * s.array()).rowwise().sum();
            Matrix ga = s.array() * (g.colwise() - dot).array();
            t.accumulate(a, ga);
        };
    }
    return y;
}

Var Tape::col_softmax(Var a, std::string name) {
    Var y = push(ad::col_softmax(value(a)), std::move(name), {a}, nullptr);
    if (nodes_[y.id].needs_grad) {
        nodes_[y.id].pullback = [a, y](Tape &t, const Matrix &g) {
            const Matrix &s = t.value(y);
            const Eigen::RowVectorXd dot = (g.array() * s.array()).colwise().sum();
            Matrix ga = s.array() * (g.rowwise() - dot).array();
            t.accumulate(a, ga);
        };
    }
    return y;
}

Var Tape::cwise_mul(Var a, Var b, std::string name) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
            "cwise_mul shape mismatch in " + name);
    return push(value(a).cwiseProduct(value(b)), std::move(name), {a, b}, [a, b](Tape &t, const Matrix &g) {
        t.accumulate(a, g.cwiseProduct(t.value(b)));
        t.accumulate(b, g.cwiseProduct(t.value(a)));
    });
}

Var Tape::clamp01(Var a, std::string name) {
    return push(value(a).cwiseMax(0.0).cwiseMin(1.0), std::move(name), {a}, [a](Tape &t, const Matrix &g) {
        const auto &x = t.value(a).array();
        t.accumulate(a, (x > 0.0 && x < 1.0).select(g, 0.0));
    });
}

Var Tape::linear(Var x, Var w, Var b, std::string name) {
    return add_row(matmul_bt(x, w, name + ".mul"), b, std::move(name));
}

Var Tape::focal_loss(Var m, const std::vector<Correspondence> &pairs, double alpha, double gamma, double eps,
                     std::string name) {
    if (pairs.empty()) throw Error(ErrorCode::kEmptyResult, "focal loss needs at least one ground-truth pair");
    const Matrix &vm = value(m);
    const double inv = 1.0 / static_cast<double>(pairs.size());
    double loss = 0.0;
    for (const auto &c : pairs) {
        require(c.source >= 0 && c.source < vm.rows() && c.target >= 0 && c.target < vm.cols(),
                "focal pair out of range");
        const double p = std::max(vm(c.source, c.target), eps);
        loss -= alpha * std::pow(1.0 - p, gamma) * std::log(p);
    }
    Matrix out(1, 1);
    out(0, 0) = loss * inv;
    return push(std::move(out), std::move(name), {m}, [m, pairs, alpha, gamma, eps, inv](Tape &t, const Matrix &g) {
        const Matrix &vm = t.value(m);
        Matrix gm = Matrix::Zero(vm.rows(), vm.cols());
        for (const auto &c : pairs) {
            const double p = vm(c.source, c.target);
            if (p < eps) continue;  // floored: flat in p
            const double q = 1.0 - p;
            const double d = -alpha * (-gamma * std::pow(q, gamma - 1.0) * std::log(p) + std::pow(q, gamma) / p);
            gm(c.source, c.target) += g(0, 0) * inv * d;
        }
        t.accumulate(m, gm);
    });
}

Var Tape::bce(Var o, const std::vector<double> &labels, double eps, std::string name) {
    const Matrix &vo = value(o);
    require(vo.cols() == 1 && vo.rows() == static_cast<Eigen::Index>(labels.size()), "bce shape mismatch");
    require(!labels.empty(), "bce needs at least one label");
    const double inv = 1.0 / static_cast<double>(labels.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(vo(static_cast<Eigen::Index>(i), 0), eps, 1.0 - eps);
        loss -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
    }
    Matrix out(1, 1);
    out(0, 0) = loss * inv;
    return push(std::move(out), std::move(name), {o}, [o, labels, eps, inv](Tape &t, const Matrix &g) {
        const Matrix &vo = t.value(o);
        Matrix go = Matrix::Zero(vo.rows(), 1);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const double p = vo(static_cast<Eigen::Index>(i), 0);
            if (p < eps || p > 1.0 - eps) continue;  // clipped: flat in p
            go(static_cast<Eigen::Index>(i), 0) = -g(0, 0) * inv * (labels[i] / p - (1.0 - labels[i]) / (1.0 - p));
        }
        t.accumulate(o, go);
    });
}

void Tape::backward(Var out) {
    const Matrix &v = value(out);
    require(v.rows() == 1 && v.cols() == 1, "backward needs a scalar output");
    for (auto &n : nodes_) n.grad.resize(0, 0);
    accumulate(out, Matrix::Ones(1, 1));
    for (int i = out.id; i >= 0; --i) {
        Node &n = nodes_[i];
        if (!n.pullback || n.grad.size() == 0) continue;
        const Matrix g = n.grad;
        n.pullback(*this, g);
    }
}

std::optional<int> Tape::first_non_finite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].value.allFinite()) return static_cast<int>(i);
    }
    return std::nullopt;
}

}  // namespace surfmatch::ad
