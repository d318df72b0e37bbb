#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sse/batching.hpp"
#include "sse/features.hpp"
#include "sse/rng.hpp"
#include "sse/tape.hpp"

namespace sse {

enum class CellType { kGru, kLstm };
enum class DecoderType { kFeedforward, kTied };
enum class Mode { kTrain, kEval };

const char* to_string(CellType c);
const char* to_string(DecoderType d);
CellType parse_cell(const std::string& s);
DecoderType parse_decoder(const std::string& s);

struct ModelConfig {
  CellType cell = CellType::kGru;
  std::size_t layers = 2;
  std::size_t hidden_dim = 128;
  DecoderType decoder = DecoderType::kTied;
  std::size_t city_dim = 128;
  std::size_t categorical_dim = 25;
  std::size_t device_dim = 5;
  std::size_t numerical_dim = 10;
  double input_dropout = 0.3;
  double recurrent_dropout = 0.1;

  // Throws ConfigError; a tied decoder needs hidden_dim == city_dim.
  void validate() const;
  std::size_t embedding_dim(Feature f) const;
  // Width of the concatenated step embedding (328 with default dims).
  std::size_t input_dim() const;
  std::size_t gates() const { return cell == CellType::kGru ? 3 : 4; }
  // Same config with both dropout probabilities at zero.
  ModelConfig without_dropout() const;

  // key=value lines; keys are the field names.
  std::map<std::string, std::string> to_map() const;
  // Applies recognized keys from `kv`; unknown keys are left for the caller.
  void apply(const std::map<std::string, std::string>& kv);
};

// Gate order: GRU {z, r, n}; LSTM {i, f, g, o}.
enum class Gate : std::size_t { kUpdate = 0, kReset = 1, kCandidate = 2 };
enum class LstmGate : std::size_t { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };

using Cardinalities = std::array<std::size_t, kNumFeatures>;

// Every trainable tensor of the model in a fixed order: 14 embedding tables,
// then per layer and gate the input weights W (in x H), recurrent weights
// U (H x H) and bias b (1 x H), then the feedforward decoder (W: H x V,
// b: 1 x V) when the decoder is not tied.
class ModelParams {
 public:
  ModelParams() = default;
  // All tensors zero.
  ModelParams(const ModelConfig& config, const Cardinalities& cardinalities);

  // Embeddings uniform in [-0.05, 0.05]; weights uniform in +-1/sqrt(fan_in);
  // biases zero except the LSTM forget gate (1).
  static ModelParams initialize(const ModelConfig& config, const Cardinalities& cardinalities, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Cardinalities& cardinalities() const { return cardinalities_; }
  std::size_t n_cities() const { return cardinalities_[index_of(Feature::kCity)]; }

  std::size_t size() const { return tensors_.size(); }
  std::span<Tensor> tensors() { return tensors_; }
  std::span<const Tensor> tensors() const { return tensors_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t index_of_name(const std::string& name) const;

  Tensor& embedding(Feature f) { return tensors_[index_of(f)]; }
  const Tensor& embedding(Feature f) const { return tensors_[index_of(f)]; }
  // which: 0 = W, 1 = U, 2 = b.
  std::size_t gate_index(std::size_t layer, std::size_t gate, std::size_t which) const;
  Tensor& gate(std::size_t layer, std::size_t gate, std::size_t which) {
    return tensors_[gate_index(layer, gate, which)];
  }
  const Tensor& gate(std::size_t layer, std::size_t gate, std::size_t which) const {
    return tensors_[gate_index(layer, gate, which)];
  }
  bool has_output_layer() const { return config_.decoder == DecoderType::kFeedforward; }
  std::size_t output_weight_index() const;

  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  ModelConfig config_;
  Cardinalities cardinalities_{};
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

std::size_t parameter_count(const ModelConfig& config, const Cardinalities& cardinalities);

// Tape handles for one forward pass, parallel to ModelParams::tensors().
struct ModelVars {
  std::vector<Var> all;

  Var embedding(Feature f) const { return all[index_of(f)]; }
};

ModelVars bind(Tape& tape, const ModelParams& params);

// Counts recurrent cell evaluations per layer. A batched cell call counts once.
class OpCounter {
 public:
  explicit OpCounter(std::size_t layers = 0) : per_layer_(layers, 0) {}
  void tick(std::size_t layer);
  std::uint64_t count(std::size_t layer) const { return layer < per_layer_.size() ? per_layer_[layer] : 0; }
  std::uint64_t total() const;
  void reset();

 private:
  std::vector<std::uint64_t> per_layer_;
};

// Feature indices of every batch row at `step`, rows x kNumFeatures.
std::vector<std::int32_t> step_indices(const Batch& batch, std::size_t step);

// Per-feature lookup then concatenation in column order: rows x input_dim.
Var embed_step(std::span<const std::int32_t> indices, const ModelVars& vars, const ModelConfig& config);

// Inverted-dropout mask: entries 0 with probability p, else 1 / (1 - p).
Tensor dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng);
Var apply_input_dropout(Var x, double p, Mode mode, Rng& rng);

// Views of one layer's gate tensors on a tape.
struct LayerVars {
  std::vector<Var> W, U, b;
};
LayerVars layer_vars(const ModelVars& vars, const ModelParams& params, std::size_t layer);

// h' = z*h + (1-z)*n with z = s(xWz + h~Uz + bz), r = s(xWr + h~Ur + br),
// n = tanh(xWn + (r*h~)Un + bn), where h~ is h times the recurrent mask.
Var gru_step(Var h_prev, Var x, const LayerVars& layer, const Tensor* recurrent_mask);

struct LstmState {
  Var h;
  Var c;
};
// c' = f*c + i*g, h' = o*tanh(c'); gates read h~ like the GRU.
LstmState lstm_step(Var h_prev, Var c_prev, Var x, const LayerVars& layer, const Tensor* recurrent_mask);

struct Encoding {
  // hidden[layer][step]: rows x hidden_dim.
  std::vector<std::vector<Var>> hidden;
  const std::vector<Var>& top() const { return hidden.back(); }
};

// Left-to-right scan over batch.max_steps steps; one cell evaluation per
// step and layer for the whole batch. Recurrent masks are drawn once per
// batch row and layer; the input mask is redrawn every step.
Encoding encode_session(const Batch& batch, const ModelVars& vars, const ModelParams& params, Mode mode,
                        std::uint64_t seed, OpCounter* counter = nullptr);

// Logits over cities for each row of `h`: h * W + b (feedforward) or
// h * E_city^T (tied).
Var decode(Var h, const ModelVars& vars, const ModelParams& params);

struct StepLogits {
  Var logits;  // (max_steps * rows) x n_cities; row = step * rows + row
  std::size_t rows = 0;
  std::size_t steps = 0;
  std::size_t row_of(std::size_t batch_row, std::size_t step) const { return step * rows + batch_row; }
};

// Decoder applied to the top-layer state of every step.
StepLogits forward_many_to_many(const Batch& batch, const ModelVars& vars, const ModelParams& params, Mode mode,
                                std::uint64_t seed, OpCounter* counter = nullptr);

// Probability mass function at the last step of each frame (eval mode).
std::vector<std::vector<double>> final_step_pmfs(const ModelParams& params, std::span<const FeatureFrame> frames,
                                                 std::size_t batch_size = 256);

}  // namespace sse
