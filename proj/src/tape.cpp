#include "smerf/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace smerf::nn {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_deriv(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tape::Var Tape::push(Mat value, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::leaf(Mat value, bool requires_grad) {
    Var v = push(std::move(value), {});
    nodes_[v.id].requires_grad = requires_grad;
    return v;
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Mat& va = value(a);
    const Mat& vb = value(b);
    if (va.cols() != vb.rows()) throw std::invalid_argument("matmul: inner dims differ");
    Var out = push(va * vb, {});
    nodes_[out.id].back = [this, a, b, out] {
        const Mat& g = grad_ref(out);
        grad_ref(a).noalias() += g * value(b).transpose();
        grad_ref(b).noalias() += value(a).transpose() * g;
    };
    return out;
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
    const Mat& va = value(a);
    const Mat& vb = value(b);
    if (va.cols() != vb.cols()) throw std::invalid_argument("matmul_nt: inner dims differ");
    Var out = push(va * vb.transpose(), {});
    nodes_[out.id].back = [this, a, b, out] {
        const Mat& g = grad_ref(out);
        grad_ref(a).noalias() += g * value(b);
        grad_ref(b).noalias() += g.transpose() * value(a);
    };
    return out;
}

Tape::Var Tape::add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    Var out = push(value(a) + value(b), {});
    nodes_[out.id].back = [this, a, b, out] {
        grad_ref(a) += grad_ref(out);
        grad_ref(b) += grad_ref(out);
    };
    return out;
}

Tape::Var Tape::sub(Var a, Var b) {
    check_same_shape(value(a), value(b), "sub");
    Var out = push(value(a) - value(b), {});
    nodes_[out.id].back = [this, a, b, out] {
        grad_ref(a) += grad_ref(out);
        grad_ref(b) -= grad_ref(out);
    };
    return out;
}

Tape::Var Tape::scale(Var a, double s) {
    Var out = push(value(a) * s, {});
    nodes_[out.id].back = [this, a, out, s] { grad_ref(a) += grad_ref(out) * s; };
    return out;
}

Tape::Var Tape::add_row_broadcast(Var a, Var row) {
    const Mat& va = value(a);
    const Mat& vr = value(row);
    if (vr.rows() != 1 || vr.cols() != va.cols())
        throw std::invalid_argument("add_row_broadcast: row must be 1 x cols(a)");
    Mat v = va;
    v.rowwise() += vr.row(0);
    Var out = push(std::move(v), {});
    nodes_[out.id].back = [this, a, row, out] {
        const Mat& g = grad_ref(out);
        grad_ref(a) += g;
        grad_ref(row).row(0) += g.colwise().sum();
    };
    return out;
}

Tape::Var Tape::mul_elem_const(Var a, Mat weight) {
    check_same_shape(value(a), weight, "mul_elem_const");
    Var out = push(value(a).cwiseProduct(weight), {});
    nodes_[out.id].back = [this, a, out, w = std::move(weight)] {
        grad_ref(a) += grad_ref(out).cwiseProduct(w);
    };
    return out;
}

Tape::Var Tape::slice_cols(Var a, int first, int count) {
    const Mat& va = value(a);
    if (first < 0 || count < 0 || first + count > va.cols())
        throw std::invalid_argument("slice_cols: range out of bounds");
    Var out = push(va.middleCols(first, count), {});
    nodes_[out.id].back = [this, a, out, first, count] {
        grad_ref(a).middleCols(first, count) += grad_ref(out);
    };
    return out;
}

Tape::Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
        if (value(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += value(p).cols();
    }
    Mat v(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
        v.middleCols(at, value(p).cols()) = value(p);
        at += value(p).cols();
    }
    Var out = push(std::move(v), {});
    nodes_[out.id].back = [this, parts, out] {
        const Mat& g = grad_ref(out);
        Eigen::Index at = 0;
        for (Var p : parts) {
            grad_ref(p) += g.middleCols(at, value(p).cols());
            at += value(p).cols();
        }
    };
    return out;
}

Tape::Var Tape::masked_row_softmax(Var a, std::vector<uint8_t> col_mask) {
    const Mat& va = value(a);
    if (static_cast<Eigen::Index>(col_mask.size()) != va.cols())
        throw std::invalid_argument("masked_row_softmax: mask size != cols");
    bool any = false;
    for (uint8_t m : col_mask) any = any || (m != 0);

    Mat p = Mat::Zero(va.rows(), va.cols());
    if (any) {
        for (Eigen::Index i = 0; i < va.rows(); ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < va.cols(); ++j)
                if (col_mask[j] && va(i, j) > mx) mx = va(i, j);
            double denom = 0.0;
            for (Eigen::Index j = 0; j < va.cols(); ++j) {
                if (col_mask[j]) {
                    p(i, j) = std::exp(va(i, j) - mx);
                    denom += p(i, j);
                }
            }
            for (Eigen::Index j = 0; j < va.cols(); ++j)
                if (col_mask[j]) p(i, j) /= denom;
        }
    }
    Var out = push(std::move(p), {});
    nodes_[out.id].back = [this, a, out, mask = std::move(col_mask)] {
        const Mat& g = grad_ref(out);
        const Mat& pv = value(out);
        Mat& ga = grad_ref(a);
        for (Eigen::Index i = 0; i < pv.rows(); ++i) {
            double dot = 0.0;
            for (Eigen::Index j = 0; j < pv.cols(); ++j)
                if (mask[j]) dot += pv(i, j) * g(i, j);
            for (Eigen::Index j = 0; j < pv.cols(); ++j)
                if (mask[j]) ga(i, j) += pv(i, j) * (g(i, j) - dot);
        }
    };
    return out;
}

Tape::Var Tape::layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
    const Mat& vx = value(x);
    const Mat& vg = value(gamma);
    const Mat& vb = value(beta);
    if (vg.rows() != 1 || vg.cols() != vx.cols() || vb.rows() != 1 || vb.cols() != vx.cols())
        throw std::invalid_argument("layer_norm_rows: gamma/beta must be 1 x cols(x)");

    const Eigen::Index n = vx.cols();
    Mat xhat(vx.rows(), n);
    Eigen::VectorXd inv_std(vx.rows());
    for (Eigen::Index i = 0; i < vx.rows(); ++i) {
        const double mean = vx.row(i).mean();
        const double var = (vx.row(i).array() - mean).square().sum() / static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std(i) = is;
        xhat.row(i) = (vx.row(i).array() - mean) * is;
    }
    Mat y = xhat;
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        y.row(i) = xhat.row(i).cwiseProduct(vg.row(0)) + vb.row(0);

    Var out = push(std::move(y), {});
    nodes_[out.id].back = [this, x, gamma, beta, out, xhat = std::move(xhat),
                           inv_std = std::move(inv_std)] {
        const Mat& g = grad_ref(out);
        const Mat& vg = value(gamma);
        const Eigen::Index n = xhat.cols();
        grad_ref(beta).row(0) += g.colwise().sum();
        grad_ref(gamma).row(0) += (g.cwiseProduct(xhat)).colwise().sum();
        Mat& gx = grad_ref(x);
        for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
            Eigen::RowVectorXd dxhat = g.row(i).cwiseProduct(vg.row(0));
            const double m1 = dxhat.mean();
            const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
            gx.row(i) +=
                inv_std(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
            (void)n;
        }
    };
    return out;
}

Tape::Var Tape::gelu(Var a) {
    Var out = push(value(a).unaryExpr([](double x) { return gelu_scalar(x); }), {});
    nodes_[out.id].back = [this, a, out] {
        grad_ref(a) += grad_ref(out).cwiseProduct(
            value(a).unaryExpr([](double x) { return gelu_deriv(x); }));
    };
    return out;
}

Tape::Var Tape::sigmoid(Var a) {
    Var out = push(value(a).unaryExpr([](double x) { return sigmoid_scalar(x); }), {});
    nodes_[out.id].back = [this, a, out] {
        const Mat& s = value(out);
        grad_ref(a) += grad_ref(out).cwiseProduct(
            s.cwiseProduct((1.0 - s.array()).matrix()));
    };
    return out;
}

Tape::Var Tape::l1_loss(Var pred, Mat target, Mat weight) {
    check_same_shape(value(pred), target, "l1_loss");
    check_same_shape(value(pred), weight, "l1_loss");
    const Mat diff = value(pred) - target;
    Mat v(1, 1);
    v(0, 0) = weight.cwiseProduct(diff.cwiseAbs()).sum();
    Var out = push(std::move(v), {});
    nodes_[out.id].back = [this, pred, out, t = std::move(target), w = std::move(weight)] {
        const double up = grad_ref(out)(0, 0);
        const Mat sign = (value(pred) - t).unaryExpr(
            [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
        grad_ref(pred) += up * w.cwiseProduct(sign);
    };
    return out;
}

Tape::Var Tape::bce_with_logits(Var logits, Mat target, Mat weight) {
    check_same_shape(value(logits), target, "bce_with_logits");
    check_same_shape(value(logits), weight, "bce_with_logits");
    const Mat& z = value(logits);
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            const double zz = z(i, j);
            total += weight(i, j) * (std::max(zz, 0.0) - zz * target(i, j) +
                                     std::log1p(std::exp(-std::abs(zz))));
        }
    Mat v(1, 1);
    v(0, 0) = total;
    Var out = push(std::move(v), {});
    nodes_[out.id].back = [this, logits, out, t = std::move(target), w = std::move(weight)] {
        const double up = grad_ref(out)(0, 0);
        const Mat& z = value(logits);
        Mat& g = grad_ref(logits);
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            for (Eigen::Index j = 0; j < z.cols(); ++j)
                g(i, j) += up * w(i, j) * (sigmoid_scalar(z(i, j)) - t(i, j));
    };
    return out;
}

void Tape::backward(Var output, const Mat& upstream) {
    check_same_shape(value(output), upstream, "backward");
    for (auto& n : nodes_) n.grad.setZero();
    nodes_[output.id].grad = upstream;
    for (int i = output.id; i >= 0; --i)
        if (nodes_[i].back) nodes_[i].back();
}

void Tape::backward(Var scalar_output) {
    if (value(scalar_output).rows() != 1 || value(scalar_output).cols() != 1)
        throw std::invalid_argument("backward: output is not scalar");
    backward(scalar_output, Mat::Ones(1, 1));
}

}  // namespace smerf::nn
