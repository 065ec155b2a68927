#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xlmeta/error.hpp"

namespace xlmeta::ad {

// Dense row-major tensor of 64-bit reals.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor scalar(double v);
    static Tensor ones(std::vector<std::size_t> shape);

    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }

    // 2-d accessors; valid only when shape.size() == 2
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape == b.shape && a.data == b.data;
    }
};

// Handle into a Tape's node list.
struct Var {
    int id = -1;
};

// Append-only record of primitive ops. Nodes are stored in topological
// order by construction; backward visits them exactly once in reverse.
class Tape {
public:
    Var input(Tensor value);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scalar_mul(Var a, double s);
    Var matmul(Var a, Var b);
    // out[b] = mean of table rows listed in bags[b]; table is V x d, out is B x d
    Var gather_mean(Var table, std::vector<std::vector<std::size_t>> bags);
    Var relu(Var a);
    Var log_softmax(Var a);  // row-wise over a B x C matrix
    // mean negative log-likelihood of the true class; input is row-wise log-probs
    Var nll(Var log_probs, std::vector<std::size_t> labels);

    // String-keyed dispatch for the ops that take only tensor inputs.
    Var forward_op(const std::string& op, const std::vector<Var>& inputs);

    const Tensor& value(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    // d(loss)/d(node) for every node on the tape; loss must be scalar.
    // Nodes off the path from loss get zero gradients.
    std::vector<Tensor> backward(Var loss) const;

private:
    enum class Op { Input, Add, Sub, ScalarMul, MatMul, GatherMean, Relu, LogSoftmax, Nll };

    struct Node {
        Op op;
        int in0 = -1;
        int in1 = -1;
        Tensor value;
        double scalar = 0.0;
        std::vector<std::vector<std::size_t>> bags;
        std::vector<std::size_t> labels;
    };

    Var push(Node node);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace xlmeta::ad
