#pragma once

// Minimal tape-free reverse-mode autodiff. Each op allocates a Node holding its
// value and a closure that scatters the node's gradient into its parents.
// Nodes that do not depend on any trainable leaf carry no closure, so constant
// subgraphs cost nothing at backward time.

#include <functional>
#include <memory>
#include <vector>

#include "idedit/tensor.hpp"

namespace idedit::ag {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor& ensure_grad() {
        if (grad.size() != value.size()) grad = Tensor(value.shape, 0.0);
        return grad;
    }
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    const Tensor& value() const { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }
    const std::vector<int>& shape() const { return node_->value.shape; }
    double item() const { return node_->value.data.at(0); }
    bool valid() const { return static_cast<bool>(node_); }
    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& handle() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Tensor t);
Var leaf(Tensor t, bool requires_grad = true);
Var detach(const Var& x);

// Seeds d(root)/d(root) = 1 and propagates to every reachable leaf.
void backward(const Var& root);

// x: [N, in], weight: [out, in], bias: [out] (may be invalid).
Var linear(const Var& x, const Var& weight, const Var& bias);
// x: [N, C, H, W], weight: [O, C, k, k], bias: [O] (may be invalid).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var leaky_relu(const Var& x, double slope);
Var upsample2x(const Var& x);
Var avg_pool2x(const Var& x);
// Per-(sample, channel) normalization over spatial positions.
Var instance_norm(const Var& x, double eps = 1e-5);
// y = x * (1 + style[:, :C]) + style[:, C:] broadcast over H, W.
Var modulate(const Var& x, const Var& style);
Var clamp(const Var& x, double lo, double hi);
Var reshape(const Var& x, std::vector<int> shape);
// Tiles a leading-dimension-1 tensor n times along dimension 0.
Var repeat_batch(const Var& x, int n);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var softplus(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);
Var mse(const Var& a, const Var& b);
// ||a - b||_2 / sqrt(numel), a scalar.
Var rms_distance(const Var& a, const Var& b);
// Elementwise 0.5 r^2 for |r| < 1, |r| - 0.5 otherwise.
Var smooth_l1(const Var& r);

}  // namespace idedit::ag
