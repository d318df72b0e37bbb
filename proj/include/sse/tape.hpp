#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sse/tensor.hpp"

namespace sse {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind : std::uint8_t {
  kConstant,
  kParameter,
  kMatmul,
  kMatmulNT,
  kAdd,
  kMul,
  kSigmoid,
  kTanh,
  kOneMinus,
  kAddBias,
  kScale,
  kGatherRows,
  kConcatCols,
  kConcatRows,
  kSum,
  kCrossEntropy,
};

const char* op_name(OpKind op);

// Append-only record of a forward computation. One tape per forward/backward
// pass; nodes are stored in creation order, so inputs always precede their
// consumers. Not thread-safe.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Value that never receives a gradient.
  Var constant(Tensor value);
  // Trainable leaf that refers to caller-owned storage; `value` must outlive the tape.
  Var parameter(const Tensor& value);
  // Trainable leaf owned by the tape.
  Var variable(Tensor value);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() loss with respect to `v`; zeros when `v`
  // was not reachable from the loss.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  OpKind kind(Var v) const { return nodes_[v.id()].kind; }
  std::span<const std::size_t> inputs(Var v) const { return nodes_[v.id()].inputs; }

  // Reverse sweep from a 1x1 loss node. Gradients from previous calls are
  // cleared first.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  const Tensor& value_at(std::size_t id) const;
  const Tensor& grad_at(std::size_t id) const { return nodes_[id].grad; }
  // Gradient slot of node `id`, zero-filled on first use; nullptr for nodes
  // that do not require a gradient.
  Tensor* grad_slot(std::size_t id);

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    Tensor owned;
    const Tensor* external = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
    Tensor grad;
  };

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// ---- differentiable operations ----

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);

enum class Elementwise { kAdd, kMul, kSigmoid, kTanh, kOneMinus };
// Binary kinds need `b` of identical shape; unary kinds ignore it.
Var elementwise(Elementwise op, Var a, Var b = {});

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var sigmoid(Var a);
Var tanh(Var a);
Var one_minus(Var a);

// a + bias where bias is 1 x a.cols(), added to every row.
Var add_bias(Var a, Var bias);
// Multiply by a fixed tensor of identical shape (dropout masks).
Var scale(Var a, const Tensor& factors);
// Row lookup: out.row(i) = table.row(indices[i]).
Var gather_rows(Var table, std::span<const std::int32_t> indices);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var sum(Var a);
// Weighted mean softmax cross-entropy: sum_i w_i * CE(row_i, target_i) / sum_i w_i.
// Rows with zero weight are ignored; sum of weights must be positive.
Var cross_entropy(Var logits, std::span<const std::int32_t> targets, std::span<const double> weights);

// Backward pass over `tape` starting at `loss`.
void backward(Tape& tape, Var loss);

// ---- finite-difference gradient check ----

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Worst relative error per parameter tensor.
  std::vector<double> per_tensor;
  std::size_t entries_checked = 0;
};

// Relative error with a zero/zero convention of 0 and an absolute floor on
// the denominator, so entries whose true gradient is below the finite
// difference noise level are judged on absolute error.
double relative_error(double analytic, double numeric, double floor = 1e-4);

// Compares tape gradients of `f` with central differences
// (f(p+eps) - f(p-eps)) / 2eps for every entry of every tensor in `params`.
// `params` is perturbed in place and restored. A non-deterministic `f`
// (two evaluations at the same point disagree) is a ContractError.
// `max_entries_per_tensor` > 0 checks an evenly spaced subset.
GradCheckResult grad_check(const ScalarFn& f, std::span<Tensor> params, double epsilon,
                           std::size_t max_entries_per_tensor = 0, double floor = 1e-4);

}  // namespace sse
