#include "xlmeta/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace xlmeta::ad {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
    throw DimensionError(op + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_product(shape) != data.size()) {
        throw DimensionError("tensor: shape " + shape_str() + " does not match " +
                             std::to_string(data.size()) + " values");
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::ones(std::vector<std::size_t> shape) {
    std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 1.0));
}

Tensor Tensor::scalar(double v) {
    return Tensor({1}, {v});
}

std::string Tensor::shape_str() const {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw IndexError("tape: variable id " + std::to_string(v.id) + " out of range");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Var v) const {
    return node(v).value;
}

Var Tape::input(Tensor value) {
    Node n;
    n.op = Op::Input;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y)) shape_error("add", x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += y.data[i];
    Node n;
    n.op = Op::Add;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = std::move(out);
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y)) shape_error("sub", x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= y.data[i];
    Node n;
    n.op = Op::Sub;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = std::move(out);
    return push(std::move(n));
}

Var Tape::scalar_mul(Var a, double s) {
    Tensor out = value(a);
    for (double& v : out.data) v *= s;
    Node n;
    n.op = Op::ScalarMul;
    n.in0 = a.id;
    n.scalar = s;
    n.value = std::move(out);
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (x.shape.size() != 2 || y.shape.size() != 2 || x.cols() != y.rows()) {
        shape_error("matmul", x, y);
    }
    Tensor out = Tensor::zeros({x.rows(), y.cols()});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double xv = x.at(i, k);
            if (xv == 0.0) continue;
            for (std::size_t j = 0; j < y.cols(); ++j) {
                out.at(i, j) += xv * y.at(k, j);
            }
        }
    }
    Node n;
    n.op = Op::MatMul;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = std::move(out);
    return push(std::move(n));
}

Var Tape::gather_mean(Var table, std::vector<std::vector<std::size_t>> bags) {
    const Tensor& t = value(table);
    if (t.shape.size() != 2) {
        throw DimensionError("gather_mean: table must be 2-d, got " + t.shape_str());
    }
    for (const auto& bag : bags) {
        if (bag.empty()) {
            throw ContractError("gather_mean: empty index bag");
        }
        for (std::size_t idx : bag) {
            if (idx >= t.rows()) {
                throw IndexError("gather_mean: index " + std::to_string(idx) +
                                 " out of range for " + std::to_string(t.rows()) + " rows");
            }
        }
    }
    Tensor out = Tensor::zeros({bags.size(), t.cols()});
    for (std::size_t b = 0; b < bags.size(); ++b) {
        for (std::size_t idx : bags[b]) {
            for (std::size_t j = 0; j < t.cols(); ++j) {
                out.at(b, j) += t.at(idx, j);
            }
        }
        const double inv = 1.0 / static_cast<double>(bags[b].size());
        for (std::size_t j = 0; j < t.cols(); ++j) out.at(b, j) *= inv;
    }
    Node n;
    n.op = Op::GatherMean;
    n.in0 = table.id;
    n.bags = std::move(bags);
    n.value = std::move(out);
    return push(std::move(n));
}

Var Tape::relu(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::max(v, 0.0);
    Node n;
    n.op = Op::Relu;
    n.in0 = a.id;
    n.value = std::move(out);
    return push(std::move(n));
}

Var Tape::log_softmax(Var a) {
    const Tensor& x = value(a);
    if (x.shape.size() != 2) {
        throw DimensionError("log_softmax: input must be 2-d, got " + x.shape_str());
    }
    Tensor out = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = x.at(i, 0);
        for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) sum += std::exp(x.at(i, j) - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) - lse;
    }
    Node n;
    n.op = Op::LogSoftmax;
    n.in0 = a.id;
    n.value = std::move(out);
    return push(std::move(n));
}

Var Tape::nll(Var log_probs, std::vector<std::size_t> labels) {
    const Tensor& lp = value(log_probs);
    if (lp.shape.size() != 2 || lp.rows() != labels.size()) {
        throw DimensionError("nll: log-probs " + lp.shape_str() + " vs " +
                             std::to_string(labels.size()) + " labels");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= lp.cols()) {
            throw ContractError("nll: label " + std::to_string(labels[i]) +
                                " out of range for " + std::to_string(lp.cols()) + " classes");
        }
        total -= lp.at(i, labels[i]);
    }
    Node n;
    n.op = Op::Nll;
    n.in0 = log_probs.id;
    n.labels = std::move(labels);
    n.value = Tensor::scalar(total / static_cast<double>(lp.rows()));
    return push(std::move(n));
}

Var Tape::forward_op(const std::string& op, const std::vector<Var>& inputs) {
    auto need = [&](std::size_t n) {
        if (inputs.size() != n) {
            throw ContractError("forward_op " + op + ": expected " + std::to_string(n) +
                                " inputs, got " + std::to_string(inputs.size()));
        }
    };
    if (op == "add") { need(2); return add(inputs[0], inputs[1]); }
    if (op == "sub") { need(2); return sub(inputs[0], inputs[1]); }
    if (op == "matmul") { need(2); return matmul(inputs[0], inputs[1]); }
    if (op == "relu") { need(1); return relu(inputs[0]); }
    if (op == "log_softmax") { need(1); return log_softmax(inputs[0]); }
    throw ContractError("forward_op: unknown op '" + op + "'");
}

std::vector<Tensor> Tape::backward(Var loss) const {
    const Node& loss_node = node(loss);
    if (!loss_node.value.is_scalar()) {
        throw ContractError("backward: loss must be scalar, got " + loss_node.value.shape_str());
    }
    std::vector<Tensor> grads(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        grads[i] = Tensor::zeros(nodes_[i].value.shape);
    }
    grads[static_cast<std::size_t>(loss.id)].data[0] = 1.0;

    for (int i = loss.id; i >= 0; --i) {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        const Tensor& g = grads[static_cast<std::size_t>(i)];
        switch (n.op) {
            case Op::Input:
                break;
            case Op::Add: {
                Tensor& ga = grads[static_cast<std::size_t>(n.in0)];
                Tensor& gb = grads[static_cast<std::size_t>(n.in1)];
                for (std::size_t k = 0; k < g.data.size(); ++k) {
                    ga.data[k] += g.data[k];
                    gb.data[k] += g.data[k];
                }
                break;
            }
            case Op::Sub: {
                Tensor& ga = grads[static_cast<std::size_t>(n.in0)];
                Tensor& gb = grads[static_cast<std::size_t>(n.in1)];
                for (std::size_t k = 0; k < g.data.size(); ++k) {
                    ga.data[k] += g.data[k];
                    gb.data[k] -= g.data[k];
                }
                break;
            }
            case Op::ScalarMul: {
                Tensor& ga = grads[static_cast<std::size_t>(n.in0)];
                for (std::size_t k = 0; k < g.data.size(); ++k) {
                    ga.data[k] += n.scalar * g.data[k];
                }
                break;
            }
            case Op::MatMul: {
                const Tensor& a = nodes_[static_cast<std::size_t>(n.in0)].value;
                const Tensor& b = nodes_[static_cast<std::size_t>(n.in1)].value;
                Tensor& ga = grads[static_cast<std::size_t>(n.in0)];
                Tensor& gb = grads[static_cast<std::size_t>(n.in1)];
                // dA = g * B^T, dB = A^T * g
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    for (std::size_t c = 0; c < a.cols(); ++c) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < b.cols(); ++j) {
                            acc += g.at(r, j) * b.at(c, j);
                        }
                        ga.at(r, c) += acc;
                    }
                }
                for (std::size_t r = 0; r < b.rows(); ++r) {
                    for (std::size_t c = 0; c < b.cols(); ++c) {
                        double acc = 0.0;
                        for (std::size_t k = 0; k < a.rows(); ++k) {
                            acc += a.at(k, r) * g.at(k, c);
                        }
                        gb.at(r, c) += acc;
                    }
                }
                break;
            }
            case Op::GatherMean: {
                Tensor& gt = grads[static_cast<std::size_t>(n.in0)];
                for (std::size_t b = 0; b < n.bags.size(); ++b) {
                    const double inv = 1.0 / static_cast<double>(n.bags[b].size());
                    for (std::size_t idx : n.bags[b]) {
                        for (std::size_t j = 0; j < gt.cols(); ++j) {
                            gt.at(idx, j) += inv * g.at(b, j);
                        }
                    }
                }
                break;
            }
            case Op::Relu: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.in0)].value;
                Tensor& ga = grads[static_cast<std::size_t>(n.in0)];
                for (std::size_t k = 0; k < g.data.size(); ++k) {
                    if (x.data[k] > 0.0) ga.data[k] += g.data[k];
                }
                break;
            }
            case Op::LogSoftmax: {
                const Tensor& y = n.value;  // log-probs
                Tensor& ga = grads[static_cast<std::size_t>(n.in0)];
                for (std::size_t r = 0; r < y.rows(); ++r) {
                    double row_sum = 0.0;
                    for (std::size_t c = 0; c < y.cols(); ++c) row_sum += g.at(r, c);
                    for (std::size_t c = 0; c < y.cols(); ++c) {
                        ga.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * row_sum;
                    }
                }
                break;
            }
            case Op::Nll: {
                Tensor& ga = grads[static_cast<std::size_t>(n.in0)];
                const double scale = g.data[0] / static_cast<double>(ga.rows());
                for (std::size_t r = 0; r < n.labels.size(); ++r) {
                    ga.at(r, n.labels[r]) -= scale;
                }
                break;
            }
        }
    }
    return grads;
}

}  // namespace xlmeta::ad
