#pragma once

#include <string>
#include <vector>

#include "unirec/tensor.hpp"

namespace unirec {

// A learnable tensor with its gradient accumulator.
struct Parameter {
    std::string id;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string name, Tensor v)
        : id(std::move(name)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Reverse-mode autodiff over a per-step op tape. The primitive set is fixed:
// matmul (with leading batch dims and optional B-transpose), broadcast
// add/sub/mul, relu, sigmoid, softmax and layernorm over the last axis,
// concat over the last axis, row gather (embedding lookup), square,
// sum/mean reductions, plus stop_grad and a fused clamped
// binary-cross-entropy-from-logits used by the recommendation loss.
//
// Every op validates shapes and checks its output for NaN/Inf; producing a
// non-finite value is a hard error (NumericError).
class Tape {
public:
    using NodeId = int;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // leaves
    NodeId constant(Tensor value);
    NodeId param(Parameter& p);  // gradient flows into p.grad on backward()

    // primitives
    NodeId matmul(NodeId a, NodeId b, bool trans_b = false);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId relu(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId square(NodeId a);
    NodeId softmax_last(NodeId a);
    NodeId layernorm_last(NodeId a, double eps = 1e-8);
    NodeId concat_last(NodeId a, NodeId b);
    // Row gather from a 2-D table; index -1 yields a zero row and routes no
    // gradient (used for padding).
    NodeId gather_rows(NodeId table, std::vector<int> indices);
    NodeId sum_all(NodeId a);
    NodeId mean_all(NodeId a);
    NodeId sum_last(NodeId a);   // [..., n] -> [..., 1]
    NodeId reshape(NodeId a, std::vector<int> shape);
    NodeId swap_axes_12(NodeId a);  // rank-4 [b,x,y,d] -> [b,y,x,d]
    NodeId stop_grad(NodeId a);
    // elementwise -[y log max(p,1e-12) + (1-y) log max(1-p,1e-12)], p = sigmoid(logit)
    NodeId bce_from_logits(NodeId logits, Tensor targets);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    // Gradient of the last backward() pass w.r.t. a node (zeros if unreached).
    Tensor grad(NodeId id) const;

    void backward(NodeId loss);  // loss must be scalar (numel == 1)

    size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        Constant, Param, MatMul, Add, Sub, Mul, Scale, Relu, Sigmoid, Square,
        SoftmaxLast, LayerNormLast, ConcatLast, GatherRows, SumAll, MeanAll,
        SumLast, Reshape, SwapAxes12, StopGrad, BceFromLogits,
    };

    struct Node {
        Op op;
        NodeId a = -1;
        NodeId b = -1;
        Tensor value;
        Tensor grad;             // allocated lazily during backward
        Parameter* bound = nullptr;
        std::vector<int> indices;  // GatherRows
        Tensor aux;                // BceFromLogits targets
        bool trans_b = false;
        double c = 0.0;            // Scale factor, LayerNorm eps
    };

    NodeId push(Node n);
    Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
    const Tensor& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    Tensor& ensure_grad(NodeId id);
    void backward_one(NodeId id);

    std::vector<Node> nodes_;
};

}  // namespace unirec
