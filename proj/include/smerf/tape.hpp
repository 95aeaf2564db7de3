#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace smerf::nn {

using Mat = Eigen::MatrixXd;

// Reverse-mode tape over dense matrices. Forward ops append nodes; backward
// walks the node list in reverse, accumulating gradients into every node.
// All reductions run single-threaded in a fixed order, so results are
// bit-reproducible for identical inputs.
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Var leaf(Mat value, bool requires_grad = false);
    Var constant(Mat value) { return leaf(std::move(value), false); }

    const Mat& value(Var v) const { return nodes_[v.id].value; }
    const Mat& grad(Var v) const { return nodes_[v.id].grad; }

    // --- dense algebra -----------------------------------------------------
    Var matmul(Var a, Var b);     // A * B
    Var matmul_nt(Var a, Var b);  // A * B^T
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    Var add_row_broadcast(Var a, Var row);  // a.rowwise() + row (row is 1 x n)
    Var mul_elem_const(Var a, Mat weight);  // a .* weight (weight not differentiated)
    Var slice_cols(Var a, int first, int count);
    Var concat_cols(const std::vector<Var>& parts);

    // --- nonlinearities -----------------------------------------------------
    // Softmax across each row, restricted to columns with col_mask != 0.
    // Masked columns get probability 0; a row with no unmasked column is 0.
    Var masked_row_softmax(Var a, std::vector<uint8_t> col_mask);
    Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var gelu(Var a);  // exact erf form
    Var sigmoid(Var a);

    // --- scalar losses (1 x 1 results) --------------------------------------
    // sum(weight .* |pred - target|); d/dpred = weight .* sign(pred - target)
    Var l1_loss(Var pred, Mat target, Mat weight);
    // sum(weight .* bce(logits, target)) with the numerically stable form
    Var bce_with_logits(Var logits, Mat target, Mat weight);

    // Seeds d(output) = upstream and propagates to every node.
    void backward(Var output, const Mat& upstream);
    // Convenience for 1x1 scalar outputs.
    void backward(Var scalar_output);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        std::function<void()> back;  // empty for leaves
    };

    Var push(Mat value, std::function<void()> back);
    Mat& grad_ref(Var v) { return nodes_[v.id].grad; }

    std::vector<Node> nodes_;
};

using Var = Tape::Var;

}  // namespace smerf::nn
