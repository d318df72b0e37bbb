#include "sse/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <sstream>

#include "sse/errors.hpp"

namespace sse {
namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw ContractError(std::string(op) + ": operands belong to different tapes");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kMatmulNT: return "matmul_nt";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kOneMinus: return "one_minus";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kScale: return "scale";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kSum: return "sum";
    case OpKind::kCrossEntropy: return "cross_entropy";
  }
  return "?";
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const Tensor& value) {
  Node n;
  n.kind = OpKind::kParameter;
  n.external = &value;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node n;
  n.kind = OpKind::kParameter;
  n.owned = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value_at(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.owned;
}

const Tensor& Tape::value(Var v) const {
  if (v.tape() != this) throw ContractError("Tape::value: variable from another tape");
  return value_at(v.id());
}

Tensor Tape::grad(Var v) const {
  if (v.tape() != this) throw ContractError("Tape::grad: variable from another tape");
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  const Tensor& val = value_at(v.id());
  return Tensor(val.rows(), val.cols());
}

Tensor* Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    const Tensor& val = value_at(id);
    if (n.grad.rows() != val.rows() || n.grad.cols() != val.cols()) {
      n.grad = Tensor(val.rows(), val.cols());
    } else {
      n.grad.fill(0.0);
    }
    n.has_grad = true;
  }
  return &n.grad;
}

Var Tape::record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  require_finite(value, op_name(kind));
  Node n;
  n.kind = kind;
  n.owned = std::move(value);
  for (std::size_t in : inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss from another tape");
  const Tensor& lv = value_at(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + lv.shape_string());
  }
  for (Node& n : nodes_) n.has_grad = false;
  Tensor* seed = grad_slot(loss.id());
  if (seed == nullptr) return;
  (*seed)(0, 0) = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, id);
  }
}

void backward(Tape& tape, Var loss) { tape.backward(loss); }

// ---- ops ----

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tape& t = *a.tape();
  Tensor out;
  matmul_into(a.value(), b.value(), out);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::kMatmul, std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (Tensor* ga = tp.grad_slot(ia)) matmul_nt_acc(g, tp.value_at(ib), *ga);
    if (Tensor* gb = tp.grad_slot(ib)) matmul_tn_acc(tp.value_at(ia), g, *gb);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b, "matmul_nt");
  Tape& t = *a.tape();
  Tensor out;
  matmul_nt_into(a.value(), b.value(), out);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::kMatmulNT, std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    // C = A B^T: dA = dC B, dB = dC^T A
    if (Tensor* ga = tp.grad_slot(ia)) matmul_acc(g, tp.value_at(ib), *ga);
    if (Tensor* gb = tp.grad_slot(ib)) matmul_tn_acc(g, tp.value_at(ia), *gb);
  });
}

Var elementwise(Elementwise op, Var a, Var b) {
  switch (op) {
    case Elementwise::kAdd: return add(a, b);
    case Elementwise::kMul: return mul(a, b);
    case Elementwise::kSigmoid: return sigmoid(a);
    case Elementwise::kTanh: return tanh(a);
    case Elementwise::kOneMinus: return one_minus(a);
  }
  throw ContractError("elementwise: unknown op");
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  auto y = bv.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(OpKind::kAdd, std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = tp.grad_at(self).values();
    for (std::size_t in : {ia, ib}) {
      if (Tensor* gi = tp.grad_slot(in)) {
        auto d = gi->values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  auto y = bv.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(OpKind::kMul, std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = tp.grad_at(self).values();
    if (Tensor* ga = tp.grad_slot(ia)) {
      auto d = ga->values();
      auto y = tp.value_at(ib).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i];
    }
    if (Tensor* gb = tp.grad_slot(ib)) {
      auto d = gb->values();
      auto x = tp.value_at(ia).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * x[i];
    }
  });
}

Var sigmoid(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = sigmoid_scalar(x[i]);
  const std::size_t ia = a.id();
  return a.tape()->record(OpKind::kSigmoid, std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    Tensor* ga = tp.grad_slot(ia);
    if (ga == nullptr) return;
    const auto g = tp.grad_at(self).values();
    const auto s = tp.value_at(self).values();
    auto d = ga->values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * s[i] * (1.0 - s[i]);
  });
}

Var tanh(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(x[i]);
  const std::size_t ia = a.id();
  return a.tape()->record(OpKind::kTanh, std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    Tensor* ga = tp.grad_slot(ia);
    if (ga == nullptr) return;
    const auto g = tp.grad_at(self).values();
    const auto y = tp.value_at(self).values();
    auto d = ga->values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var one_minus(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 1.0 - x[i];
  const std::size_t ia = a.id();
  return a.tape()->record(OpKind::kOneMinus, std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    Tensor* ga = tp.grad_slot(ia);
    if (ga == nullptr) return;
    const auto g = tp.grad_at(self).values();
    auto d = ga->values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
  });
}

Var add_bias(Var a, Var bias) {
  require_same_tape(a, bias, "add_bias");
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_bias: bias " + bv.shape_string() + " does not fit " + av.shape_string());
  }
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv(0, c);
  }
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape()->record(OpKind::kAddBias, std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (Tensor* ga = tp.grad_slot(ia)) {
      auto d = ga->values();
      auto s = g.values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    }
    if (Tensor* gb = tp.grad_slot(ib)) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) (*gb)(0, c) += row[c];
      }
    }
  });
}

Var scale(Var a, const Tensor& factors) {
  const Tensor& av = a.value();
  require_same_shape(av, factors, "scale");
  Tensor out(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  auto f = factors.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * f[i];
  const std::size_t ia = a.id();
  return a.tape()->record(OpKind::kScale, std::move(out), {ia}, [ia, factors](Tape& tp, std::size_t self) {
    Tensor* ga = tp.grad_slot(ia);
    if (ga == nullptr) return;
    const auto g = tp.grad_at(self).values();
    const auto f = factors.values();
    auto d = ga->values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * f[i];
  });
}

Var gather_rows(Var table, std::span<const std::int32_t> indices) {
  const Tensor& tv = table.value();
  const std::size_t cols = tv.cols();
  Tensor out(indices.size(), cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto idx = indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= tv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                           tv.shape_string() + " table");
    }
    std::memcpy(out.row(i).data(), tv.row(static_cast<std::size_t>(idx)).data(), cols * sizeof(double));
  }
  const std::size_t it = table.id();
  std::vector<std::int32_t> saved(indices.begin(), indices.end());
  return table.tape()->record(OpKind::kGatherRows, std::move(out), {it},
                              [it, saved = std::move(saved)](Tape& tp, std::size_t self) {
                                Tensor* gt = tp.grad_slot(it);
                                if (gt == nullptr) return;
                                const Tensor& g = tp.grad_at(self);
                                for (std::size_t i = 0; i < saved.size(); ++i) {
                                  auto dst = gt->row(static_cast<std::size_t>(saved[i]));
                                  auto src = g.row(i);
                                  for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                                }
                              });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p, "concat_cols");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + parts[0].value().shape_string() + " vs " +
                           p.value().shape_string());
    }
    ids.push_back(p.id());
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.row(r).data();
    for (const Var& p : parts) {
      const auto src = p.value().row(r);
      std::memcpy(dst, src.data(), src.size() * sizeof(double));
      dst += src.size();
    }
  }
  std::vector<std::size_t> inputs = ids;
  return parts[0].tape()->record(
      OpKind::kConcatCols, std::move(out), std::move(inputs),
      [ids = std::move(ids), widths = std::move(widths)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_at(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (Tensor* gk = tp.grad_slot(ids[k])) {
            for (std::size_t r = 0; r < g.rows(); ++r) {
              auto src = g.row(r).subspan(offset, widths[k]);
              auto dst = gk->row(r);
              for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
            }
          }
          offset += widths[k];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p, "concat_rows");
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " + parts[0].value().shape_string() + " vs " +
                           p.value().shape_string());
    }
    ids.push_back(p.id());
    rows += p.rows();
  }
  std::vector<double> values;
  values.reserve(rows * cols);
  for (const Var& p : parts) {
    const auto v = p.value().values();
    values.insert(values.end(), v.begin(), v.end());
  }
  std::vector<std::size_t> inputs = ids;
  return parts[0].tape()->record(OpKind::kConcatRows, Tensor(rows, cols, std::move(values)), std::move(inputs),
                                 [ids = std::move(ids)](Tape& tp, std::size_t self) {
                                   const auto g = tp.grad_at(self).values();
                                   std::size_t offset = 0;
                                   for (std::size_t id : ids) {
                                     const std::size_t n = tp.value_at(id).size();
                                     if (Tensor* gk = tp.grad_slot(id)) {
                                       auto d = gk->values();
                                       for (std::size_t i = 0; i < n; ++i) d[i] += g[offset + i];
                                     }
                                     offset += n;
                                   }
                                 });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->record(OpKind::kSum, Tensor(1, 1, s), {ia}, [ia](Tape& tp, std::size_t self) {
    Tensor* ga = tp.grad_slot(ia);
    if (ga == nullptr) return;
    const double g = tp.grad_at(self)(0, 0);
    for (double& d : ga->values()) d += g;
  });
}

Var cross_entropy(Var logits, std::span<const std::int32_t> targets, std::span<const double> weights) {
  const Tensor& lv = logits.value();
  const std::size_t n = lv.rows();
  const std::size_t v = lv.cols();
  if (targets.size() != n || weights.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                         std::to_string(weights.size()) + " weights for " + lv.shape_string() + " logits");
  }
  require_finite(lv, "cross_entropy input");
  double weight_sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("cross_entropy: weights must be finite and >= 0");
    weight_sum += w;
  }
  if (!(weight_sum > 0.0)) throw ContractError("cross_entropy: no row carries positive weight");

  // Softmax of weighted rows only; probabilities are kept for the backward pass.
  auto probs = std::make_shared<Tensor>(n, v);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (weights[r] == 0.0) continue;
    const auto t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw DimensionError("cross_entropy: target " + std::to_string(t) + " outside " + std::to_string(v) +
                           " classes");
    }
    const auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    auto p = probs->row(r);
    for (std::size_t c = 0; c < v; ++c) {
      p[c] = std::exp(row[c] - mx);
      z += p[c];
    }
    for (std::size_t c = 0; c < v; ++c) p[c] /= z;
    const double log_prob = row[static_cast<std::size_t>(t)] - mx - std::log(z);
    total += weights[r] * -log_prob;
  }
  const double loss = total / weight_sum;
  const std::size_t il = logits.id();
  std::vector<std::int32_t> saved_targets(targets.begin(), targets.end());
  std::vector<double> saved_weights(weights.begin(), weights.end());
  return logits.tape()->record(
      OpKind::kCrossEntropy, Tensor(1, 1, loss), {il},
      [il, probs, weight_sum, saved_targets = std::move(saved_targets),
       saved_weights = std::move(saved_weights)](Tape& tp, std::size_t self) {
        Tensor* gl = tp.grad_slot(il);
        if (gl == nullptr) return;
        const double g = tp.grad_at(self)(0, 0);
        for (std::size_t r = 0; r < saved_weights.size(); ++r) {
          if (saved_weights[r] == 0.0) continue;
          const double k = g * saved_weights[r] / weight_sum;
          auto p = probs->row(r);
          auto d = gl->row(r);
          for (std::size_t c = 0; c < d.size(); ++c) d[c] += k * p[c];
          d[static_cast<std::size_t>(saved_targets[r])] -= k;
        }
      });
}

// ---- gradient check ----

double relative_error(double analytic, double numeric, double floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff == 0.0) return 0.0;
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return diff / denom;
}

GradCheckResult grad_check(const ScalarFn& f, std::span<Tensor> params, double epsilon,
                           std::size_t max_entries_per_tensor, double floor) {
  if (!(epsilon > 0.0)) throw ContractError("grad_check: epsilon must be positive");

  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(tape.parameter(p));
    const Var out = f(tape, vars);
    const Tensor& v = out.value();
    if (v.rows() != 1 || v.cols() != 1) throw ContractError("grad_check: f must return a 1x1 value");
    return v(0, 0);
  };

  GradCheckResult result;
  std::vector<Tensor> analytic;
  double base = 0.0;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.parameter(p));
    const Var out = f(tape, vars);
    tape.backward(out);
    base = out.value()(0, 0);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }
  const double again = evaluate();
  if (std::memcmp(&base, &again, sizeof(double)) != 0) {
    throw ContractError("grad_check: f is not deterministic (is dropout enabled?)");
  }

  result.per_tensor.assign(params.size(), 0.0);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].values();
    const std::size_t n = values.size();
    std::size_t stride = 1;
    if (max_entries_per_tensor > 0 && n > max_entries_per_tensor) {
      stride = (n + max_entries_per_tensor - 1) / max_entries_per_tensor;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double plus = evaluate();
      values[i] = saved - epsilon;
      const double minus = evaluate();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double err = relative_error(analytic[k].values()[i], numeric, floor);
      result.per_tensor[k] = std::max(result.per_tensor[k], err);
      ++result.entries_checked;
    }
    result.max_rel_error = std::max(result.max_rel_error, result.per_tensor[k]);
  }
  return result;
}

}  // namespace sse
