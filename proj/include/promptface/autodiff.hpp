#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "promptface/prompt_codec.hpp"

namespace promptface {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Handle to a node on a Tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode recorder over row-major matrices. Build one per forward pass;
/// nodes are appended in topological order and replayed backwards.
class Tape {
public:
    Var constant(Matrix value);

    /// Leaf bound to external storage. After backward(), its gradient is added
    /// into `grad_sink` when one is given.
    Var parameter(const Matrix& value, Matrix* grad_sink);

    const Matrix& value(Var v) const;
    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

    /// Gradient buffer of a node, zero-initialized on first access.
    Matrix& grad(Var v);

    /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
    void backward(Var root);

    /// Multiply-add flops (2 per MAC) of the matrix products recorded so far.
    std::uint64_t flops() const { return flops_; }
    void add_flops(std::uint64_t f) { flops_ += f; }

    std::size_t size() const { return nodes_.size(); }

    /// Internal: append a computed node.
    Var push(Matrix value, std::span<const Var> inputs, std::function<void()> backward);

private:
    struct Node {
        Matrix value;
        const Matrix* ref = nullptr;
        Matrix grad;
        bool has_grad = false;
        bool needs_grad = false;
        Matrix* sink = nullptr;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
    std::uint64_t flops_ = 0;
};

// Differentiable operations. Shapes are checked; mismatches throw UsageError.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_row(Var a, Var row);  // row is 1 x cols(a), broadcast over rows
Var scale(Var a, double s);
Var gelu(Var a);
Var sigmoid(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const int> rows);
Var sum_all(Var a);
Var mean_all(Var a);

/// softmax(q k^T / sqrt(d)) v. Reductions over keys are summed in a canonical
/// (sorted) order, so permuting the key/value rows leaves the result bitwise
/// unchanged. When `weights_out` is set it receives the attention map.
Var attention(Var q, Var k, Var v, Matrix* weights_out = nullptr);

/// Encodes an N x 2 matrix of plane points into N x C structure prompts.
Var encode_prompts(Var points, const PromptCodecConfig& config);

/// scale * sum over rows with mask[i] of |pred_i - target_i|_1; 1 x 1 result.
Var masked_l1_sum(Var pred, const Matrix& target, std::span<const bool> mask, double scale);

}  // namespace promptface
