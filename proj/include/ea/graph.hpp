#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ea/rng.hpp"
#include "ea/tensor.hpp"

namespace ea {

using NodeId = std::size_t;

enum class Act { Relu, Tanh, Sigmoid };
enum class Mode { Train, Infer };

// Reverse-mode tape. Nodes are created eagerly (forward value computed at
// construction); backward() runs the stored pullbacks in reverse creation
// order. Gradients accumulate with += everywhere, so calling backward twice
// without zeroing doubles every gradient. A graph lives for one forward/
// backward pass and is confined to a single thread.
class Graph {
public:
    // Leaf holding a constant or differentiable input.
    NodeId leaf(Tensor value, bool requires_grad = false);

    // Leaf bound to an external parameter: gradient accumulates into `grad_sink`.
    NodeId param(const Tensor& value, Tensor& grad_sink);

    const Tensor& val(NodeId id) const;
    Tensor& grad(NodeId id);
    bool requires_grad(NodeId id) const;

    NodeId matmul(NodeId a, NodeId b);                 // [m,k]x[k,n] -> [m,n]
    NodeId matvec(NodeId w, NodeId x);                 // [o,i]x[i] -> [o]
    NodeId conv1d_valid(NodeId seq, NodeId filters, NodeId bias);  // [T,d],[w,d,F],[F] -> [T-w+1,F]
    NodeId max_over_time(NodeId x);                    // [T,F] -> [F], ties to lowest index
    NodeId activation(NodeId x, Act kind);
    NodeId softmax_masked(NodeId scores, const std::vector<char>& mask);  // [n] -> [n]
    NodeId concat(const std::vector<NodeId>& parts);   // 1-D juxtaposition
    NodeId slice(NodeId x, int start, int len);        // 1-D
    NodeId row(NodeId x, int r);                       // [T,d] -> [d]
    NodeId add(NodeId a, NodeId b);                    // elementwise, same shape
    NodeId mul(NodeId a, NodeId b);                    // Hadamard
    NodeId scale(NodeId x, double c);
    NodeId sum(NodeId x);                              // -> scalar
    NodeId dropout(NodeId x, double rate, Mode mode, Rng& rng);
    NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, Tensor& running_mean,
                     Tensor& running_var, Mode mode, double momentum = 0.9,
                     double eps = 1e-5);
    NodeId stack_rows(const std::vector<NodeId>& rows);        // B x [F] -> [B,F]
    NodeId linear_rows(NodeId x, NodeId w, NodeId b);          // [B,F],[O,F],[O] -> [B,O]
    NodeId softmax_rows(NodeId x);                             // [B,C] -> row-stochastic
    NodeId attn_pool(NodeId alpha, NodeId h);                  // [T],[T,K] -> [K]
    NodeId lookup(NodeId table, const std::vector<int>& ids);  // [V+1,d] -> [T,d]; id 0 rows get no gradient

    // Mean over the batch of -log p(true class), p clamped at 1e-12.
    NodeId cross_entropy(NodeId probs, const std::vector<int>& labels);
    // Fused log-softmax + cross-entropy on logits; numerically stable training loss.
    NodeId softmax_xent(NodeId logits, const std::vector<int>& labels);

    void backward(NodeId loss_node);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor own_grad;
        Tensor* ext_grad = nullptr;
        bool requires_grad = false;
        std::function<void(Graph&)> back;
    };

    NodeId push(Tensor value, bool rg, std::function<void(Graph&)> back);
    std::vector<Node> nodes_;
};

}  // namespace ea
