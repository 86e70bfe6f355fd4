#pragma once

#include "mvfbsde/mat.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace mvfbsde::ad {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

enum class Op : std::uint8_t {
    Leaf,
    Affine,   // x·Wᵀ (+ b broadcast over rows)
    Tanh,
    Sigmoid,
    Add,
    Sub,
    Mul,      // elementwise
    OneMinus, // 1 − x
    Scale,    // c·x
    ConcatCols,
    SumAll,        // Σ elements → 1×1
    SqLoss,        // Σ w∘(pred − target)² / norm → 1×1
    PinballLoss,   // Σ w·(1_{x≥pred} − α)(x − pred) / norm → 1×1
};

/// One primitive-operation record. `value` is always populated; `grad` is
/// materialized lazily during the backward pass. `aux`/`aux2` hold constant
/// payloads (regression targets, weights) that gradients never flow through.
struct Node {
    Op op = Op::Leaf;
    NodeId a = kNoNode, b = kNoNode, c = kNoNode;
    bool requires_grad = false; // leaf flag / derived reachability
    double s0 = 0.0;            // normalizer or scale factor
    double s1 = 0.0;            // pinball alpha
    Mat value;
    Mat grad;
    Mat aux;
    Mat aux2;
};

/// Reverse-mode tape over dense matrices.
///
/// Invariants: nodes are stored in topological order (every input id is
/// smaller than the node's own id); backward() visits each node exactly once
/// in reverse creation order; gradients accumulate additively. reset() keeps
/// node storage so per-epoch graph rebuilds do not reallocate.
class Tape {
public:
    NodeId leaf(const Mat& v, bool requires_grad = true);
    NodeId leaf_scalar(double v, bool requires_grad = true);

    NodeId affine(NodeId x, NodeId w, NodeId bias = kNoNode);
    NodeId tanh_(NodeId x);
    NodeId sigmoid_(NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId one_minus(NodeId x);
    NodeId scale(NodeId x, double c);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId sum_all(NodeId x);
    NodeId sq_loss(NodeId pred, const Mat& target, const Mat& weights, double norm);
    NodeId pinball_loss(NodeId pred, const Mat& realized, double alpha, const Mat& weights,
                        double norm);

    /// Backpropagates d(loss)/d(node) for every node reachable from `loss`,
    /// which must be 1×1. Throws UsageError otherwise.
    void backward(NodeId loss);

    const Mat& value(NodeId id) const { return nodes_[id].value; }
    /// Gradient of the last backward()'s loss w.r.t. node `id`; empty Mat if
    /// the node was not reached.
    const Mat& grad(NodeId id) const {
        static const Mat kEmpty;
        if (id >= grad_epoch_.size() || grad_epoch_[id] != epoch_) return kEmpty;
        return nodes_[id].grad;
    }

    std::size_t size() const { return cursor_; }

    /// Rewinds the tape for a fresh graph while keeping buffers allocated.
    void reset() { cursor_ = 0; }

private:
    Node& push(Op op, std::size_t rows, std::size_t cols);
    void check_id(NodeId id, const char* where) const;

    std::vector<Node> nodes_;
    std::size_t cursor_ = 0;
    std::vector<std::uint64_t> grad_epoch_;
    std::uint64_t epoch_ = 0;
    std::vector<double> scratch_;
};

} // namespace mvfbsde::ad
