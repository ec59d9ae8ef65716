#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "surfmatch/geom/types.hpp"

namespace surfmatch::ad {

using Matrix = Eigen::MatrixXd;

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode automatic differentiation over dense matrices.
/// Nodes are appended in evaluation order; backward() walks them in reverse.
/// Rows are points, columns are channels throughout.
class Tape {
public:
    /// Leaf without gradient.
    Var constant(Matrix value, std::string name = "const");
    /// Leaf whose gradient is accumulated by backward().
    Var variable(Matrix value, std::string name);

    const Matrix &value(Var v) const { return nodes_.at(v.id).value; }
    /// Gradient of the last backward() output; zero-shaped if never reached.
    Matrix grad(Var v) const;
    const std::string &name(Var v) const { return nodes_.at(v.id).name; }
    std::size_t size() const { return nodes_.size(); }

    // a * b
    Var matmul(Var a, Var b, std::string name = "matmul");
    // a * b^T
    Var matmul_bt(Var a, Var b, std::string name = "matmul_bt");
    Var add(Var a, Var b, std::string name = "add");
    // a + 1 * row, row is 1 x cols(a)
    Var add_row(Var a, Var row, std::string name = "add_row");
    Var scale(Var a, double s, std::string name = "scale");
    Var relu(Var a, std::string name = "relu");
    Var concat_cols(Var a, Var b, std::string name = "concat");
    Var gather_rows(Var a, std::vector<int> rows, std::string name = "gather");
    Var row_softmax(Var a, std::string name = "row_softmax");
    Var col_softmax(Var a, std::string name = "col_softmax");
    Var cwise_mul(Var a, Var b, std::string name = "cwise_mul");
    /// Hard clamp to [0,1]; derivative 1 strictly inside, 0 elsewhere.
    Var clamp01(Var a, std::string name = "clamp01");

    /// x W^T + b with W (out x in) and b (1 x out).
    Var linear(Var x, Var w, Var b, std::string name = "linear");

    /// -(1/|pairs|) sum alpha (1-M)^gamma log M over the listed entries,
    /// M floored at eps. 1 x 1.
    Var focal_loss(Var m, const std::vector<Correspondence> &pairs, double alpha, double gamma, double eps,
                   std::string name = "focal_loss");
    /// -(1/n) sum [y log o + (1-y) log(1-o)], o clipped to [eps, 1-eps]. o is n x 1.
    Var bce(Var o, const std::vector<double> &labels, double eps, std::string name = "bce");

    /// Seeds d(out)/d(out) = 1 for a 1 x 1 node and accumulates gradients.
    void backward(Var out);

    /// Index of the first node holding a NaN or infinity.
    std::optional<int> first_non_finite() const;

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::string name;
        bool needs_grad = false;
        std::function<void(Tape &, const Matrix &)> pullback;
    };

    Var push(Matrix value, std::string name, std::vector<Var> parents,
             std::function<void(Tape &, const Matrix &)> pullback);
    void accumulate(Var v, const Matrix &g);

    std::vector<Node> nodes_;
};

/// Row-wise softmax with max subtraction.
Matrix row_softmax(const Matrix &a);
Matrix col_softmax(const Matrix &a);

}  // namespace surfmatch::ad
