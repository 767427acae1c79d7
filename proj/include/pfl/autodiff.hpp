#pragma once

#include <functional>
#include <vector>

#include "pfl/tensor.hpp"

namespace pfl {

/// Reverse-mode tape over Tensor values. Nodes are referenced by integer id;
/// ops only reference earlier ids, so one reverse sweep in creation order is
/// a topological backward pass.
///
/// A tape supports exactly one backward() call; a second call throws
/// TapeError. Build a fresh tape per loss evaluation.
class GradTape {
public:
    /// Registers a value node. Leaves and constants are the same mechanically;
    /// callers read grad() only on the ids they care about.
    int leaf(Tensor value);
    int constant(Tensor value) { return leaf(std::move(value)); }

    int matmul(int a, int b);
    int add_rowvec(int x, int bias);     // bias broadcast over rows
    int relu(int x);
    int add(int a, int b);               // same shape
    int scale(int a, double c);
    int l1_norm(int a);                  // scalar sum of |a_i|

    /// Mean over rows of -log softmax(logits)[label]. Log-sum-exp stabilized.
    int softmax_cross_entropy(int logits, const std::vector<int>& labels);

    /// Trigger embedding x*(1-m) + delta*m applied to every row of a constant
    /// batch; `delta` is a tape node of length d, `mask` a fixed vector.
    int embed_rows(const Tensor& x, int delta, const std::vector<double>& mask);

    /// Same embedding but with the mask itself a tape node (continuous mask);
    /// gradients flow to both delta and mask.
    int soft_embed_rows(const Tensor& x, int delta, int mask);

    void backward(int scalar_node);

    const Tensor& value(int id) const;
    const Tensor& grad(int id) const;

    size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(GradTape&)> back;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    int push(Tensor value, std::function<void(GradTape&)> back);
    void check_id(int id) const;
    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
};

/// Central finite differences (f(x+eps e_i) - f(x-eps e_i)) / (2 eps).
/// Oracle for backward(); also the production path for the trigger gradient
/// of the gradient-alignment objective.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double eps);

} // namespace pfl
