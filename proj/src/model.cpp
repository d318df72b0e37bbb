#include "sse/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sse/errors.hpp"
#include "sse/objective.hpp"

namespace sse {
namespace {

const char* const kGruGateNames[] = {"z", "r", "n"};
const char* const kLstmGateNames[] = {"i", "f", "g", "o"};

std::size_t parse_count(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

std::string real_to_string(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(CellType c) { return c == CellType::kGru ? "gru" : "lstm"; }
const char* to_string(DecoderType d) { return d == DecoderType::kTied ? "tied" : "ff"; }

CellType parse_cell(const std::string& s) {
  if (s == "gru" || s == "GRU") return CellType::kGru;
  if (s == "lstm" || s == "LSTM") return CellType::kLstm;
  throw ConfigError("unknown cell type '" + s + "' (expected gru or lstm)");
}

DecoderType parse_decoder(const std::string& s) {
  if (s == "tied") return DecoderType::kTied;
  if (s == "ff" || s == "feedforward") return DecoderType::kFeedforward;
  throw ConfigError("unknown decoder '" + s + "' (expected tied or ff)");
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("model: layers must be >= 1");
  if (hidden_dim < 1 || city_dim < 1 || categorical_dim < 1 || device_dim < 1 || numerical_dim < 1) {
    throw ConfigError("model: dimensions must be >= 1");
  }
  if (decoder == DecoderType::kTied && hidden_dim != city_dim) {
    throw ConfigError("model: tied decoder needs hidden_dim (" + std::to_string(hidden_dim) + ") == city_dim (" +
                      std::to_string(city_dim) + ")");
  }
  for (double p : {input_dropout, recurrent_dropout}) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("model: dropout probabilities must lie in [0, 1)");
  }
}

std::size_t ModelConfig::embedding_dim(Feature f) const {
  switch (feature_kind(f)) {
    case FeatureKind::kCity: return city_dim;
    case FeatureKind::kCategorical: return categorical_dim;
    case FeatureKind::kDevice: return device_dim;
    case FeatureKind::kNumerical: return numerical_dim;
  }
  return 0;
}

std::size_t ModelConfig::input_dim() const {
  std::size_t d = 0;
  for (std::size_t f = 0; f < kNumFeatures; ++f) d += embedding_dim(static_cast<Feature>(f));
  return d;
}

ModelConfig ModelConfig::without_dropout() const {
  ModelConfig c = *this;
  c.input_dropout = 0.0;
  c.recurrent_dropout = 0.0;
  return c;
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"cell", to_string(cell)},
          {"layers", std::to_string(layers)},
          {"hidden_dim", std::to_string(hidden_dim)},
          {"decoder", to_string(decoder)},
          {"city_dim", std::to_string(city_dim)},
          {"categorical_dim", std::to_string(categorical_dim)},
          {"device_dim", std::to_string(device_dim)},
          {"numerical_dim", std::to_string(numerical_dim)},
          {"input_dropout", real_to_string(input_dropout)},
          {"recurrent_dropout", real_to_string(recurrent_dropout)}};
}

void ModelConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "cell") cell = parse_cell(v);
    else if (k == "layers") layers = parse_count(k, v);
    else if (k == "hidden_dim") hidden_dim = parse_count(k, v);
    else if (k == "decoder") decoder = parse_decoder(v);
    else if (k == "city_dim") city_dim = parse_count(k, v);
    else if (k == "categorical_dim") categorical_dim = parse_count(k, v);
    else if (k == "device_dim") device_dim = parse_count(k, v);
    else if (k == "numerical_dim") numerical_dim = parse_count(k, v);
    else if (k == "input_dropout") input_dropout = parse_real(k, v);
    else if (k == "recurrent_dropout") recurrent_dropout = parse_real(k, v);
  }
}

// ---- parameters ----

ModelParams::ModelParams(const ModelConfig& config, const Cardinalities& cardinalities)
    : config_(config), cardinalities_(cardinalities) {
  config_.validate();
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    if (cardinalities[f] == 0) throw ConfigError("model: feature cardinality must be >= 1");
    const auto feat = static_cast<Feature>(f);
    names_.push_back("emb." + std::string(feature_name(feat)));
    tensors_.emplace_back(cardinalities[f], config_.embedding_dim(feat));
  }
  const std::size_t h = config_.hidden_dim;
  const auto* gate_names = config_.cell == CellType::kGru ? kGruGateNames : kLstmGateNames;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t in = l == 0 ? config_.input_dim() : h;
    const std::string prefix = "l" + std::to_string(l) + ".";
    for (std::size_t g = 0; g < config_.gates(); ++g) {
      names_.push_back(prefix + "W_" + gate_names[g]);
      tensors_.emplace_back(in, h);
      names_.push_back(prefix + "U_" + gate_names[g]);
      tensors_.emplace_back(h, h);
      names_.push_back(prefix + "b_" + gate_names[g]);
      tensors_.emplace_back(1, h);
    }
  }
  if (has_output_layer()) {
    names_.push_back("dec.W");
    tensors_.emplace_back(h, n_cities());
    names_.push_back("dec.b");
    tensors_.emplace_back(1, n_cities());
  }
}

ModelParams ModelParams::initialize(const ModelConfig& config, const Cardinalities& cardinalities,
                                    std::uint64_t seed) {
  ModelParams p(config, cardinalities);
  Rng rng(seed);
  auto fill_uniform = [&](Tensor& t, double bound) {
    for (double& v : t.values()) v = to_storage(rng.uniform(-bound, bound));
  };
  for (std::size_t f = 0; f < kNumFeatures; ++f) fill_uniform(p.tensors_[f], 0.05);
  for (std::size_t l = 0; l < config.layers; ++l) {
    for (std::size_t g = 0; g < p.config_.gates(); ++g) {
      Tensor& w = p.gate(l, g, 0);
      fill_uniform(w, 1.0 / std::sqrt(static_cast<double>(w.rows())));
      Tensor& u = p.gate(l, g, 1);
      fill_uniform(u, 1.0 / std::sqrt(static_cast<double>(u.rows())));
      if (config.cell == CellType::kLstm && g == static_cast<std::size_t>(LstmGate::kForget)) p.gate(l, g, 2).fill(1.0);
    }
  }
  if (p.has_output_layer()) {
    Tensor& w = p.tensors_[p.output_weight_index()];
    fill_uniform(w, 1.0 / std::sqrt(static_cast<double>(w.rows())));
  }
  return p;
}

std::size_t ModelParams::index_of_name(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ContractError("ModelParams: no tensor named '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ModelParams::gate_index(std::size_t layer, std::size_t gate, std::size_t which) const {
  if (layer >= config_.layers || gate >= config_.gates() || which > 2) {
    throw ContractError("ModelParams::gate_index: out of range");
  }
  return kNumFeatures + (layer * config_.gates() + gate) * 3 + which;
}

std::size_t ModelParams::output_weight_index() const {
  if (!has_output_layer()) throw ContractError("ModelParams: tied decoder has no output layer");
  return kNumFeatures + config_.layers * config_.gates() * 3;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

std::size_t parameter_count(const ModelConfig& config, const Cardinalities& cardinalities) {
  config.validate();
  std::size_t n = 0;
  for (std::size_t f = 0; f < kNumFeatures; ++f) n += cardinalities[f] * config.embedding_dim(static_cast<Feature>(f));
  const std::size_t h = config.hidden_dim;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::size_t in = l == 0 ? config.input_dim() : h;
    n += config.gates() * (in * h + h * h + h);
  }
  if (config.decoder == DecoderType::kFeedforward) n += h * cardinalities[index_of(Feature::kCity)] + cardinalities[index_of(Feature::kCity)];
  return n;
}

ModelVars bind(Tape& tape, const ModelParams& params) {
  ModelVars v;
  v.all.reserve(params.size());
  for (const Tensor& t : params.tensors()) v.all.push_back(tape.parameter(t));
  return v;
}

// ---- counter ----

void OpCounter::tick(std::size_t layer) {
  if (layer >= per_layer_.size()) per_layer_.resize(layer + 1, 0);
  ++per_layer_[layer];
}

std::uint64_t OpCounter::total() const {
  return std::accumulate(per_layer_.begin(), per_layer_.end(), std::uint64_t{0});
}

void OpCounter::reset() { std::fill(per_layer_.begin(), per_layer_.end(), 0); }

// ---- forward pieces ----

std::vector<std::int32_t> step_indices(const Batch& batch, std::size_t step) {
  if (step >= batch.max_steps) throw ContractError("step_indices: step beyond batch length");
  std::vector<std::int32_t> out(batch.size() * kNumFeatures);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto* src = batch.features.data() + (r * batch.max_steps + step) * kNumFeatures;
    std::copy(src, src + kNumFeatures, out.begin() + static_cast<std::ptrdiff_t>(r * kNumFeatures));
  }
  return out;
}

Var embed_step(std::span<const std::int32_t> indices, const ModelVars& vars, const ModelConfig& config) {
  (void)config;
  if (indices.size() % kNumFeatures != 0) throw DimensionError("embed_step: indices are not rows of 14 features");
  const std::size_t rows = indices.size() / kNumFeatures;
  std::vector<Var> parts;
  parts.reserve(kNumFeatures);
  std::vector<std::int32_t> column(rows);
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    for (std::size_t r = 0; r < rows; ++r) column[r] = indices[r * kNumFeatures + f];
    parts.push_back(gather_rows(vars.all[f], column));
  }
  return concat_cols(parts);
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout_mask: p must lie in [0, 1)");
  Tensor m(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (double& v : m.values()) v = rng.uniform() < p ? 0.0 : keep;
  return m;
}

Var apply_input_dropout(Var x, double p, Mode mode, Rng& rng) {
  if (mode == Mode::kEval || p == 0.0) return x;
  return scale(x, dropout_mask(x.rows(), x.cols(), p, rng));
}

LayerVars layer_vars(const ModelVars& vars, const ModelParams& params, std::size_t layer) {
  LayerVars lv;
  for (std::size_t g = 0; g < params.config().gates(); ++g) {
    lv.W.push_back(vars.all[params.gate_index(layer, g, 0)]);
    lv.U.push_back(vars.all[params.gate_index(layer, g, 1)]);
    lv.b.push_back(vars.all[params.gate_index(layer, g, 2)]);
  }
  return lv;
}

namespace {

Var gate_preactivation(Var x, Var h_in, const LayerVars& layer, std::size_t g) {
  return add_bias(add(matmul(x, layer.W[g]), matmul(h_in, layer.U[g])), layer.b[g]);
}

void check_layer(Var h_prev, Var x, const LayerVars& layer, std::size_t gates, const char* what) {
  if (layer.W.size() != gates || layer.U.size() != gates || layer.b.size() != gates) {
    throw DimensionError(std::string(what) + ": wrong number of gate blocks");
  }
  const std::size_t hidden = layer.U[0].rows();
  if (h_prev.cols() != hidden || h_prev.rows() != x.rows() || x.cols() != layer.W[0].rows()) {
    throw DimensionError(std::string(what) + ": state " + h_prev.value().shape_string() + " / input " +
                         x.value().shape_string() + " do not fit weights " + layer.W[0].value().shape_string());
  }
}

}  // namespace

Var gru_step(Var h_prev, Var x, const LayerVars& layer, const Tensor* recurrent_mask) {
  check_layer(h_prev, x, layer, 3, "gru_step");
  const Var h_in = recurrent_mask != nullptr ? scale(h_prev, *recurrent_mask) : h_prev;
  const Var z = sigmoid(gate_preactivation(x, h_in, layer, 0));
  const Var r = sigmoid(gate_preactivation(x, h_in, layer, 1));
  const Var n = tanh(gate_preactivation(x, mul(r, h_in), layer, 2));
  return add(mul(z, h_prev), mul(one_minus(z), n));
}

LstmState lstm_step(Var h_prev, Var c_prev, Var x, const LayerVars& layer, const Tensor* recurrent_mask) {
  check_layer(h_prev, x, layer, 4, "lstm_step");
  if (!c_prev.value().same_shape(h_prev.value())) throw DimensionError("lstm_step: cell/state shape mismatch");
  const Var h_in = recurrent_mask != nullptr ? scale(h_prev, *recurrent_mask) : h_prev;
  const Var i = sigmoid(gate_preactivation(x, h_in, layer, 0));
  const Var f = sigmoid(gate_preactivation(x, h_in, layer, 1));
  const Var g = tanh(gate_preactivation(x, h_in, layer, 2));
  const Var o = sigmoid(gate_preactivation(x, h_in, layer, 3));
  const Var c = add(mul(f, c_prev), mul(i, g));
  return {mul(o, tanh(c)), c};
}

Encoding encode_session(const Batch& batch, const ModelVars& vars, const ModelParams& params, Mode mode,
                        std::uint64_t seed, OpCounter* counter) {
  const ModelConfig& config = params.config();
  if (batch.size() == 0 || batch.max_steps == 0) throw ContractError("encode_session: empty batch");
  Tape& tape = *vars.all.front().tape();
  const std::size_t rows = batch.size();
  const std::size_t hidden = config.hidden_dim;
  Rng rng(seed);

  std::vector<LayerVars> layers;
  std::vector<Tensor> masks;
  for (std::size_t l = 0; l < config.layers; ++l) {
    layers.push_back(layer_vars(vars, params, l));
    if (mode == Mode::kTrain && config.recurrent_dropout > 0.0) {
      masks.push_back(dropout_mask(rows, hidden, config.recurrent_dropout, rng));
    }
  }
  const Var zeros = tape.constant(Tensor(rows, hidden));
  std::vector<Var> h(config.layers, zeros);
  std::vector<Var> c(config.layers, zeros);

  Encoding enc;
  enc.hidden.assign(config.layers, {});
  for (std::size_t t = 0; t < batch.max_steps; ++t) {
    const auto idx = step_indices(batch, t);
    Var input = apply_input_dropout(embed_step(idx, vars, config), config.input_dropout, mode, rng);
    for (std::size_t l = 0; l < config.layers; ++l) {
      const Tensor* mask = masks.empty() ? nullptr : &masks[l];
      if (config.cell == CellType::kGru) {
        h[l] = gru_step(h[l], input, layers[l], mask);
      } else {
        const LstmState s = lstm_step(h[l], c[l], input, layers[l], mask);
        h[l] = s.h;
        c[l] = s.c;
      }
      if (counter != nullptr) counter->tick(l);
      enc.hidden[l].push_back(h[l]);
      input = h[l];
    }
  }
  return enc;
}

Var decode(Var h, const ModelVars& vars, const ModelParams& params) {
  if (params.config().decoder == DecoderType::kTied) {
    return matmul_nt(h, vars.embedding(Feature::kCity));
  }
  const std::size_t w = params.output_weight_index();
  return add_bias(matmul(h, vars.all[w]), vars.all[w + 1]);
}

StepLogits forward_many_to_many(const Batch& batch, const ModelVars& vars, const ModelParams& params, Mode mode,
                                std::uint64_t seed, OpCounter* counter) {
  const Encoding enc = encode_session(batch, vars, params, mode, seed, counter);
  StepLogits out;
  out.rows = batch.size();
  out.steps = batch.max_steps;
  out.logits = decode(concat_rows(enc.top()), vars, params);
  return out;
}

std::vector<std::vector<double>> final_step_pmfs(const ModelParams& params, std::span<const FeatureFrame> frames,
                                                 std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("final_step_pmfs: batch_size must be >= 1");
  std::vector<std::vector<double>> out(frames.size());
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frames[a].steps < frames[b].steps; });
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    const auto members = std::span<const std::size_t>(order).subspan(start, n);
    const Batch batch = pack_batch(frames, members);
    Tape tape;
    const ModelVars vars = bind(tape, params);
    const StepLogits sl = forward_many_to_many(batch, vars, params, Mode::kEval, 0);
    const Tensor& logits = sl.logits.value();
    for (std::size_t r = 0; r < n; ++r) {
      const FeatureFrame& f = frames[members[r]];
      out[members[r]] = softmax(logits.row(sl.row_of(r, f.steps - 1)));
    }
  }
  return out;
}

}  // namespace sse
