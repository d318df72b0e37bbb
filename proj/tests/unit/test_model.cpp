#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "sse/errors.hpp"
#include "sse/model.hpp"
#include "sse/objective.hpp"
#include "sse/oracle.hpp"

using sse::Tape;
using sse::Tensor;
using sse::Var;

namespace {

Tensor rand_t(std::size_t r, std::size_t c, sse::Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.values()) v = rng.uniform(-0.8, 0.8);
  return t;
}

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Scalar preactivation of gate g for row `row`, unit j.
double pre(const std::vector<Tensor>& W, const std::vector<Tensor>& U, const std::vector<Tensor>& b, std::size_t g,
           const Tensor& x, const std::vector<double>& h, std::size_t row, std::size_t j) {
  double s = b[g](0, j);
  for (std::size_t k = 0; k < x.cols(); ++k) s += x(row, k) * W[g](k, j);
  for (std::size_t k = 0; k < h.size(); ++k) s += h[k] * U[g](k, j);
  return s;
}

struct Cell {
  std::vector<Tensor> W, U, b;
};

Cell random_cell(std::size_t gates, std::size_t in, std::size_t hidden, sse::Rng& rng) {
  Cell c;
  for (std::size_t g = 0; g < gates; ++g) {
    c.W.push_back(rand_t(in, hidden, rng));
    c.U.push_back(rand_t(hidden, hidden, rng));
    c.b.push_back(rand_t(1, hidden, rng));
  }
  return c;
}

sse::LayerVars on_tape(Tape& tape, const Cell& c) {
  sse::LayerVars lv;
  for (std::size_t g = 0; g < c.W.size(); ++g) {
    lv.W.push_back(tape.parameter(c.W[g]));
    lv.U.push_back(tape.parameter(c.U[g]));
    lv.b.push_back(tape.parameter(c.b[g]));
  }
  return lv;
}

std::vector<double> row_of(const Tensor& t, std::size_t r) { return {t.row(r).begin(), t.row(r).end()}; }

sse::FeatureFrame random_frame(const sse::Cardinalities& cards, std::size_t steps, std::uint64_t seed) {
  sse::Rng rng(seed);
  return sse::random_frame(cards, steps, rng);
}

}  // namespace

TEST_CASE("default embedding width is 328") {
  sse::ModelConfig c;
  CHECK(c.input_dim() == 328);
  CHECK(c.embedding_dim(sse::Feature::kCity) == 128);
  CHECK(c.embedding_dim(sse::Feature::kDeviceClass) == 5);
  CHECK(c.embedding_dim(sse::Feature::kAffiliate) == 25);
  CHECK(c.embedding_dim(sse::Feature::kTransitionDays) == 10);
}

TEST_CASE("config validation and round trip") {
  sse::ModelConfig c;
  c.hidden_dim = 64;
  CHECK_THROWS_AS(c.validate(), sse::ConfigError);
  c.decoder = sse::DecoderType::kFeedforward;
  CHECK_NOTHROW(c.validate());
  c.cell = sse::CellType::kLstm;
  c.input_dropout = 0.25;
  sse::ModelConfig d;
  d.apply(c.to_map());
  CHECK(d.to_map() == c.to_map());
  c.input_dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), sse::ConfigError);
}

TEST_CASE("tied decoder saves hidden x V + V parameters") {
  auto cards = testing::small_cards(23);
  auto tied = testing::small_config();
  auto ff = testing::small_config(sse::CellType::kGru, sse::DecoderType::kFeedforward);
  CHECK(sse::parameter_count(tied, cards) == sse::parameter_count(ff, cards) - 8 * 23 - 23);
  CHECK(sse::ModelParams(tied, cards).parameter_count() == sse::parameter_count(tied, cards));
  CHECK(sse::ModelParams(ff, cards).parameter_count() == sse::parameter_count(ff, cards));
}

TEST_CASE("embedding lookup") {
  const auto cfg = testing::small_config();
  const auto cards = testing::small_cards();
  SUBCASE("zero tables give a zero vector") {
    const sse::ModelParams p(cfg, cards);
    Tape tape;
    const auto vars = sse::bind(tape, p);
    const std::vector<std::int32_t> idx(sse::kNumFeatures, 1);
    const Var x = sse::embed_step(idx, vars, cfg);
    CHECK(x.cols() == cfg.input_dim());
    CHECK(x.value() == Tensor(1, cfg.input_dim()));
  }
  SUBCASE("identical indices give identical rows") {
    const auto p = sse::ModelParams::initialize(cfg, cards, 1);
    Tape tape;
    const auto vars = sse::bind(tape, p);
    std::vector<std::int32_t> idx(3 * sse::kNumFeatures);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int32_t>(i % sse::kNumFeatures % 4);
    const Var x = sse::embed_step(idx, vars, cfg);
    CHECK(row_of(x.value(), 0) == row_of(x.value(), 2));
    // First columns are the city embedding row.
    CHECK(x.value()(0, 0) == p.embedding(sse::Feature::kCity)(0, 0));
    const auto city_of_row1 = static_cast<std::size_t>(idx[sse::kNumFeatures]);
    CHECK(x.value()(1, 0) == p.embedding(sse::Feature::kCity)(city_of_row1, 0));
  }
}

TEST_CASE("dropout masks") {
  sse::Rng rng(1);
  const Tensor m = sse::dropout_mask(1000, 1000, 0.3, rng);
  double sum = 0;
  std::size_t zeros = 0;
  for (double v : m.values()) {
    sum += v;
    zeros += v == 0.0 ? 1 : 0;
    CHECK((v == 0.0 || std::fabs(v - 1.0 / 0.7) < 1e-15));
  }
  CHECK(std::fabs(sum / 1e6 - 1.0) < 0.01);
  CHECK(std::fabs(static_cast<double>(zeros) / 1e6 - 0.3) < 0.01);
  CHECK(sse::dropout_mask(3, 3, 0.0, rng) == Tensor(3, 3, 1.0));
  CHECK_THROWS_AS(sse::dropout_mask(1, 1, 1.0, rng), sse::ContractError);

  Tape tape;
  const Var x = tape.variable(Tensor(2, 2, 3.0));
  CHECK(sse::apply_input_dropout(x, 0.5, sse::Mode::kEval, rng).value() == x.value());
  CHECK(sse::apply_input_dropout(x, 0.0, sse::Mode::kTrain, rng).value() == x.value());
}

TEST_CASE("GRU step: closed forms") {
  sse::Rng rng(2);
  Cell zero;
  for (int g = 0; g < 3; ++g) {
    zero.W.emplace_back(4, 3);
    zero.U.emplace_back(3, 3);
    zero.b.emplace_back(1, 3);
  }
  Tape tape;
  const auto lv = on_tape(tape, zero);
  const Var x = tape.constant(rand_t(2, 4, rng));
  const Tensor h0 = rand_t(2, 3, rng);
  const Var h1 = sse::gru_step(tape.constant(h0), x, lv, nullptr);
  for (std::size_t i = 0; i < h0.size(); ++i) CHECK(h1.value().values()[i] == 0.5 * h0.values()[i]);
  const Var h2 = sse::gru_step(tape.constant(Tensor(2, 3)), x, lv, nullptr);
  CHECK(h2.value() == Tensor(2, 3));
}

TEST_CASE("GRU step matches a scalar loop") {
  sse::Rng rng(3);
  const std::size_t in = 5, hid = 4, rows = 3;
  const Cell c = random_cell(3, in, hid, rng);
  const Tensor x = rand_t(rows, in, rng);
  const Tensor h = rand_t(rows, hid, rng);
  Tensor mask(rows, hid);
  for (double& v : mask.values()) v = rng.bernoulli(0.3) ? 0.0 : 1.0 / 0.7;
  for (const Tensor* m : {static_cast<const Tensor*>(nullptr), static_cast<const Tensor*>(&mask)}) {
    Tape tape;
    const Var out = sse::gru_step(tape.constant(h), tape.constant(x), on_tape(tape, c), m);
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> hin(hid);
      for (std::size_t k = 0; k < hid; ++k) hin[k] = h(r, k) * (m ? (*m)(r, k) : 1.0);
      std::vector<double> rg(hid);
      for (std::size_t j = 0; j < hid; ++j) rg[j] = sig(pre(c.W, c.U, c.b, 1, x, hin, r, j));
      std::vector<double> rh(hid);
      for (std::size_t k = 0; k < hid; ++k) rh[k] = rg[k] * hin[k];
      for (std::size_t j = 0; j < hid; ++j) {
        const double z = sig(pre(c.W, c.U, c.b, 0, x, hin, r, j));
        const double n = std::tanh(pre(c.W, c.U, c.b, 2, x, rh, r, j));
        const double expect = z * h(r, j) + (1 - z) * n;
        CHECK(std::fabs(out.value()(r, j) - expect) < 1e-12);
      }
    }
  }
}

TEST_CASE("LSTM step matches a scalar loop") {
  sse::Rng rng(4);
  const std::size_t in = 3, hid = 5, rows = 2;
  const Cell c = random_cell(4, in, hid, rng);
  const Tensor x = rand_t(rows, in, rng);
  const Tensor h = rand_t(rows, hid, rng);
  const Tensor cell = rand_t(rows, hid, rng);
  Tape tape;
  const auto s = sse::lstm_step(tape.constant(h), tape.constant(cell), tape.constant(x), on_tape(tape, c), nullptr);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto hr = row_of(h, r);
    for (std::size_t j = 0; j < hid; ++j) {
      const double i = sig(pre(c.W, c.U, c.b, 0, x, hr, r, j));
      const double f = sig(pre(c.W, c.U, c.b, 1, x, hr, r, j));
      const double g = std::tanh(pre(c.W, c.U, c.b, 2, x, hr, r, j));
      const double o = sig(pre(c.W, c.U, c.b, 3, x, hr, r, j));
      const double cn = f * cell(r, j) + i * g;
      CHECK(std::fabs(s.c.value()(r, j) - cn) < 1e-12);
      CHECK(std::fabs(s.h.value()(r, j) - o * std::tanh(cn)) < 1e-12);
    }
  }
}

TEST_CASE("LSTM step: closed forms") {
  Cell zero;
  for (int g = 0; g < 4; ++g) {
    zero.W.emplace_back(2, 3);
    zero.U.emplace_back(3, 3);
    zero.b.emplace_back(1, 3);
  }
  {
    Tape tape;
    const auto s = sse::lstm_step(tape.constant(Tensor(1, 3)), tape.constant(Tensor(1, 3)),
                                  tape.constant(Tensor(1, 2, 1.0)), on_tape(tape, zero), nullptr);
    CHECK(s.h.value() == Tensor(1, 3));
    CHECK(s.c.value() == Tensor(1, 3));
  }
  // Forget gate saturated open, input gate shut: the cell carries over.
  zero.b[0].fill(-1e3);
  zero.b[1].fill(1e3);
  Tape tape;
  const Tensor c0 = Tensor::from_rows({{0.3, -0.7, 1.5}});
  const auto s = sse::lstm_step(tape.constant(Tensor(1, 3, 0.2)), tape.constant(c0), tape.constant(Tensor(1, 2, 1.0)),
                                on_tape(tape, zero), nullptr);
  CHECK(s.c.value() == c0);
}

TEST_CASE("LSTM forget bias starts at one") {
  const auto p = sse::ModelParams::initialize(testing::small_config(sse::CellType::kLstm), testing::small_cards(), 3);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(p.gate(l, 1, 2) == Tensor(1, 8, 1.0));
    CHECK(p.gate(l, 0, 2) == Tensor(1, 8, 0.0));
  }
}

TEST_CASE("tied decoder picks the matching orthonormal row") {
  auto cfg = testing::small_config();
  const auto cards = testing::small_cards(6);
  sse::ModelParams p(cfg, cards);
  Tensor& e = p.embedding(sse::Feature::kCity);
  for (std::size_t c = 0; c < 6; ++c) e(c, c) = 1.0;
  for (std::size_t c = 0; c < 6; ++c) {
    Tape tape;
    const auto vars = sse::bind(tape, p);
    Tensor h(1, 8);
    h(0, c) = 1.0;
    const Var logits = sse::decode(tape.constant(h), vars, p);
    CHECK(sse::top_k(logits.value().row(0), 1).front() == c);
  }
}

TEST_CASE("zero parameters give uniform pmfs at every step") {
  for (auto dec : {sse::DecoderType::kTied, sse::DecoderType::kFeedforward}) {
    const auto cfg = testing::small_config(sse::CellType::kGru, dec);
    const auto cards = testing::small_cards(9);
    const sse::ModelParams p(cfg, cards);
    const std::vector<sse::FeatureFrame> frames{random_frame(cards, 4, 1), random_frame(cards, 2, 2)};
    const auto batch = sse::pack_batch(frames);
    Tape tape;
    const auto sl = sse::forward_many_to_many(batch, sse::bind(tape, p), p, sse::Mode::kEval, 0);
    CHECK(sl.logits.rows() == 8);
    for (std::size_t r = 0; r < 8; ++r)
      for (double v : sse::softmax(sl.logits.value().row(r))) CHECK(v == doctest::Approx(1.0 / 9).epsilon(1e-15));
  }
}

TEST_CASE("a session alone or inside a padded batch gives the same logits") {
  const auto cfg = testing::small_config(sse::CellType::kLstm);
  const auto cards = testing::small_cards(11);
  const auto p = sse::random_params(cfg, cards, 5);
  const std::vector<sse::FeatureFrame> frames{random_frame(cards, 3, 1), random_frame(cards, 7, 2),
                                              random_frame(cards, 5, 3)};
  const auto batch = sse::pack_batch(frames);
  Tape tape;
  const auto all = sse::forward_many_to_many(batch, sse::bind(tape, p), p, sse::Mode::kEval, 0);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::vector<sse::FeatureFrame> one{frames[i]};
    Tape t2;
    const auto alone = sse::forward_many_to_many(sse::pack_batch(one), sse::bind(t2, p), p, sse::Mode::kEval, 0);
    for (std::size_t t = 0; t < frames[i].steps; ++t) {
      const auto a = alone.logits.value().row(alone.row_of(0, t));
      const auto b = all.logits.value().row(all.row_of(i, t));
      for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::fabs(a[k] - b[k]) < 1e-13);
    }
  }
}

TEST_CASE("one-step session is one cell application per layer") {
  auto cfg = testing::small_config();
  cfg.layers = 1;
  const auto cards = testing::small_cards();
  const auto p = sse::random_params(cfg, cards, 7);
  const std::vector<sse::FeatureFrame> frames{random_frame(cards, 1, 4)};
  const auto batch = sse::pack_batch(frames);
  Tape tape;
  const auto vars = sse::bind(tape, p);
  sse::OpCounter counter(1);
  const auto enc = sse::encode_session(batch, vars, p, sse::Mode::kEval, 0, &counter);
  CHECK(counter.count(0) == 1);
  const Var x = sse::embed_step(frames[0].row(0), vars, cfg);
  const Var h = sse::gru_step(tape.constant(Tensor(1, 8)), x, sse::layer_vars(vars, p, 0), nullptr);
  CHECK(enc.top()[0].value() == h.value());
}

TEST_CASE("counter ticks once per step and layer") {
  auto cfg = testing::small_config();
  cfg.layers = 3;
  const auto cards = testing::small_cards();
  const auto p = sse::random_params(cfg, cards, 7);
  const std::vector<sse::FeatureFrame> frames{random_frame(cards, 6, 4), random_frame(cards, 2, 5)};
  Tape tape;
  sse::OpCounter counter(3);
  sse::encode_session(sse::pack_batch(frames), sse::bind(tape, p), p, sse::Mode::kEval, 0, &counter);
  for (std::size_t l = 0; l < 3; ++l) CHECK(counter.count(l) == 6);
  CHECK(counter.total() == 18);
  counter.reset();
  CHECK(counter.total() == 0);
}

TEST_CASE("training mode is seeded; eval mode ignores the seed") {
  const auto cfg = testing::small_config();
  const auto cards = testing::small_cards();
  const auto p = sse::random_params(cfg, cards, 9);
  const std::vector<sse::FeatureFrame> frames{random_frame(cards, 5, 1), random_frame(cards, 4, 2)};
  const auto batch = sse::pack_batch(frames);
  auto run = [&](sse::Mode mode, std::uint64_t seed) {
    Tape tape;
    return sse::forward_many_to_many(batch, sse::bind(tape, p), p, mode, seed).logits.value();
  };
  CHECK(run(sse::Mode::kTrain, 1) == run(sse::Mode::kTrain, 1));
  CHECK_FALSE(run(sse::Mode::kTrain, 1) == run(sse::Mode::kTrain, 2));
  CHECK(run(sse::Mode::kEval, 1) == run(sse::Mode::kEval, 2));
  CHECK_FALSE(run(sse::Mode::kTrain, 1) == run(sse::Mode::kEval, 1));
}

TEST_CASE("full model gradient matches finite differences") {
  sse::PrecisionScope scope(sse::Precision::kFloat64);
  for (auto cell : {sse::CellType::kGru, sse::CellType::kLstm}) {
    for (auto dec : {sse::DecoderType::kTied, sse::DecoderType::kFeedforward}) {
      const auto cfg = testing::small_config(cell, dec).without_dropout();
      const auto cards = testing::small_cards(5);
      auto p = sse::random_params(cfg, cards, 11);
      const std::vector<sse::FeatureFrame> frames{random_frame(cards, 1, 1)};
      const auto batch = sse::pack_batch(frames);
      const auto inputs = sse::loss_inputs(batch, sse::LossConfig{});
      const sse::ModelParams layout = p;
      const sse::ScalarFn f = [&](Tape&, std::span<const Var> v) {
        sse::ModelVars vars{{v.begin(), v.end()}};
        return sse::sequence_loss(sse::forward_many_to_many(batch, vars, layout, sse::Mode::kEval, 0).logits, inputs);
      };
      const auto r = sse::grad_check(f, p.tensors(), 1e-5);
      CHECK(r.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("mismatched shapes are DimensionErrors") {
  sse::Rng rng(1);
  const Cell c = random_cell(3, 4, 3, rng);
  Tape tape;
  const auto lv = on_tape(tape, c);
  CHECK_THROWS_AS(sse::gru_step(tape.constant(Tensor(1, 3)), tape.constant(Tensor(1, 5)), lv, nullptr),
                  sse::DimensionError);
  CHECK_THROWS_AS(sse::gru_step(tape.constant(Tensor(2, 3)), tape.constant(Tensor(1, 4)), lv, nullptr),
                  sse::DimensionError);
  CHECK_THROWS_AS(sse::lstm_step(tape.constant(Tensor(1, 3)), tape.constant(Tensor(1, 3)),
                                 tape.constant(Tensor(1, 4)), lv, nullptr),
                  sse::DimensionError);
}
