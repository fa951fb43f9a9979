#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "hairshift/tensor.hpp"
#include "hairshift/types.hpp"

namespace hairshift::ad {

class Graph;

// Handle to a node in a Graph. Values are computed eagerly as ops are built;
// gradients become available after Graph::backward on a scalar root.
struct Var {
    Graph* graph = nullptr;
    int id = -1;
    bool valid() const { return graph != nullptr && id >= 0; }
};

// Single-use reverse-mode tape over Tensors. Build ops forward, call
// backward(root) once, then read grad() of the parameter leaves.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    Var constant_scalar(double value);
    Var param(Tensor value);  // leaf that receives a gradient

    const Tensor& value(Var v) const;
    double scalar(Var v) const;  // value of a 1-element node
    Tensor grad(Var v) const;    // zeros if the node never received a gradient

    void backward(Var root);

    std::size_t node_count() const { return nodes_.size(); }

    // --- internal plumbing used by the op implementations ---
    struct Node {
        Tensor val;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Graph&, int)> back;
    };

    int add_node(Tensor value, bool requires_grad, std::function<void(Graph&, int)> back);
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    Tensor& grad_buf(int id);  // lazily allocated, zero-initialized
    bool wants_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

private:
    // deque: references returned by value() stay valid as the tape grows
    std::deque<Node> nodes_;
};

// ---- elementwise ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
Var neg(Var a);
Var square(Var a);
Var abs(Var a);
Var exp(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
// log(max(x, eps)); gradient is zero where the clamp is active
Var log_clamped(Var a, double eps = 1e-12);

// ---- reductions ----
Var sum(Var a);
Var mean(Var a);

// ---- shape ----
Var reshape(Var a, std::vector<std::size_t> shape);
Var concat_rows(Var a, Var b);              // stack two 2D tensors vertically
Var row_slice(Var a, std::size_t r0, std::size_t r1);
Var row_of(Var a, std::size_t r);           // {D} view of one row of a 2D tensor
Var crop_hw(Var a, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

// ---- linear / spatial ----
Var matvec(Var a, Var x);                           // (C,D) x (D) -> (C)
Var mul_rowvec(Var a, Var s);                       // (L,D) scaled per row by s (L)
Var conv2d(Var x, Var w);                           // (Cin,H,W), (Cout,Cin,k,k), stride 1, pad k/2
Var tconv2d(Var x, Var w);                          // (Cin,H,W), (Cout,Cin,4,4), stride 2, pad 1 -> (Cout,2H,2W)
Var avgpool2(Var x);                                // (C,H,W) -> (C,H/2,W/2)
Var upsample2x(Var x);                              // nearest-neighbor, (C,H,W) -> (C,2H,2W)
Var mul_channelwise(Var x, Var s);                  // (C,H,W) * s(C)
Var div_channelwise(Var x, Var s);                  // (C,H,W) / s(C)
Var add_channelwise(Var x, Var b);                  // (C,H,W) + b(C)
Var mul_mask(Var x, Var m);                         // (C,H,W) * m(H,W), broadcast over channels
Var channel_sums(Var x);                            // (C,H,W) -> (C)
Var gram_chw(Var f);                                // (C,H,W) -> (C,C), sum over pixels of outer products

// ---- heads ----
Var softmax_channels(Var x);                        // (K,H,W) softmax over K per pixel
Var gaussian_bumps(Var cx, Var cy, double sigma, std::size_t h, std::size_t w);
Var cross_entropy_with_labels(Var probs, const SemanticLabel& labels, double eps = 1e-12);
// Mean restricted to masked pixels; zero when the mask is empty.
Var cross_entropy_with_labels_masked(Var probs, const SemanticLabel& labels, const BinaryMask& mask,
                                     double eps = 1e-12);

}  // namespace hairshift::ad
