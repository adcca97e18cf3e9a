#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "emkken/tensor.hpp"

namespace emkken {

/// Learnable tensor with a gradient buffer of the same shape.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(v), grad(Tensor::zeros(v.shape())) {}

    void zero_grad() { grad.fill(0.0); }
    std::size_t numel() const { return value.size(); }
};

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

enum class RunMode { train, eval };

/// Reverse-mode tape. Ops append a node with a backward closure; backward()
/// walks the nodes once in exact reverse execution order. A tape is confined
/// to a single thread and a single backward pass.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Constant leaf; gradients are tracked but go nowhere.
    Var input(Tensor value);
    /// Learnable leaf; backward() accumulates into p.grad. The parameter
    /// must outlive the tape.
    Var param(Parameter& p);

    const Tensor& value(Var v) const { return values_[v.id]; }
    std::size_t num_values() const { return values_.size(); }

    /// Gradient of the last backward() w.r.t. v (zeros if unreached).
    Tensor grad_of(Var v) const;

    /// Seeds d(loss)/d(loss) = 1 and runs every node's backward once.
    /// loss must be a single-element tensor. Throws ContractError if called
    /// twice on the same tape.
    void backward(Var loss);

    // --- op construction interface (used by the ops below and by layers) ---
    Var emit(Tensor value);
    void record(std::function<void(Tape&)> backward_fn);
    Tensor& grad_buf(Var v);
    bool grad_touched(Var v) const { return v.id < static_cast<int>(grads_.size()) && grads_[v.id].size() > 0; }

private:
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;  // allocated lazily; empty = untouched
    std::vector<std::function<void(Tape&)>> nodes_;
    std::vector<std::pair<int, Parameter*>> param_leaves_;
    bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Primitive differentiable ops. All return new vars on the same tape and
// quantize their results in f32 mode.
// ---------------------------------------------------------------------------

/// 2-D matrix product [m,k]x[k,n] -> [m,n].
Var matmul(Tape& t, Var a, Var b);

/// Elementwise sum of same-shaped tensors.
Var add(Tape& t, Var a, Var b);
/// Adds a length-C bias vector to every row of a [..., C] tensor.
Var add_rowwise(Tape& t, Var x, Var bias);
/// Elementwise product of same-shaped tensors.
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);

enum class Activation { relu, silu, softplus };
Var activation(Tape& t, Var x, Activation kind);
Var relu(Tape& t, Var x);
Var silu(Tape& t, Var x);
Var softplus(Tape& t, Var x);
Var abs_val(Tape& t, Var x);
/// Elementwise max(x, c); subgradient passes where x > c.
Var maximum_const(Tape& t, Var x, double c);
/// Elementwise -x.
Var negate(Tape& t, Var x);
/// Elementwise exp(x).
Var exp_val(Tape& t, Var x);

/// Numerically stable softmax over the last axis.
Var softmax_last(Tape& t, Var x);

/// Inverted dropout: train mode zeroes with probability rate and scales
/// survivors by 1/(1-rate); eval mode is the identity, bit-exact.
Var dropout(Tape& t, Var x, double rate, RunMode mode, Rng& rng);

/// Concatenate along the last axis.
Var concat_last(Tape& t, Var a, Var b);
/// Split in two equal halves along the last axis.
std::pair<Var, Var> chunk2_last(Tape& t, Var x);
/// View of the last axis range [from, to).
Var slice_last(Tape& t, Var x, int from, int to);
Var reshape(Tape& t, Var x, std::vector<int> shape);

/// Masked mean over the sequence axis: x [N,L,D], mask [N,L] -> [N,D].
/// Every row of the mask must select at least one position.
Var masked_mean_seq(Tape& t, Var x, const Tensor& mask);

/// Mean of all elements -> scalar.
Var mean_all(Tape& t, Var x);
/// Sum of all elements -> scalar.
Var sum_all(Tape& t, Var x);

/// Mean of -ln p[label] on explicit probability rows [N,C]. Rows must sum
/// to 1 (checked to 1e-6); use cross_entropy_logits for training.
double cross_entropy(const Tensor& probabilities, const std::vector<int>& labels);

/// Fused softmax + NLL on logits [N,C] -> scalar mean loss.
Var cross_entropy_logits(Tape& t, Var logits, const std::vector<int>& labels);

// Non-tape reference helpers reused across the project.
double silu_scalar(double x);
double softplus_scalar(double x);
Tensor softmax_rows(const Tensor& logits);

}  // namespace emkken
