#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <vector>

#include "intsel/nn.hpp"

using namespace intsel;

namespace {

NNConfig tiny_config(std::uint64_t seed) {
  NNConfig c;
  c.vocab = 8;
  c.d_emb = 4;
  c.h1 = 5;
  c.h2 = 3;
  c.d_dense = 4;
  c.seed = seed;
  return c;
}

ClassifierStack make_stack(CellKind kind, const NNConfig& c, std::uint64_t init_seed) {
  ClassifierStack s;
  s.cfg = c;
  s.kind = kind;
  Rng rng(init_seed);
  s.init(rng);
  return s;
}

// random example over the tiny vocabulary; tree shape mirrors the sequence
EncodedExample random_example(Rng& rng, int vocab, int min_len = 3, int max_len = 9) {
  EncodedExample ex;
  int n = static_cast<int>(rng.range(min_len, max_len));
  ex.tree.nodes.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int tok = static_cast<int>(rng.below(static_cast<uint64_t>(vocab - kReservedTokens))) +
              kReservedTokens;
    ex.seq.push_back(tok);
    ex.tree.nodes[static_cast<size_t>(i)].token = tok;
    if (i > 0) {
      int parent = static_cast<int>(rng.below(static_cast<uint64_t>(i)));
      ex.tree.nodes[static_cast<size_t>(parent)].kids.push_back(i);
    }
  }
  return ex;
}

std::vector<EncodedExample> toy_corpus(int n, int vocab, std::uint64_t seed) {
  // labels keyed to visible token facts so every classifier has signal
  Rng rng(seed);
  std::vector<EncodedExample> data;
  for (int i = 0; i < n; ++i) {
    EncodedExample ex = random_example(rng, vocab, 3, 11);
    int first = ex.seq[0], last = ex.seq.back();
    bool has2 = false, has3 = false;
    for (int t : ex.seq) {
      has2 |= t == 2;
      has3 |= t == 3;
    }
    ex.labels[0] = has2;
    ex.labels[1] = has3;
    ex.labels[2] = first % 2 == 0;
    ex.labels[3] = last % 2 == 1;
    ex.labels[4] = ex.seq.size() % 2 == 0;
    data.push_back(std::move(ex));
  }
  return data;
}

}  // namespace

TEST_CASE("central differences sanity: d(w^2)/dw at 3 is 6") {
  auto f = [](double w) { return w * w; };
  double step = 1e-5;
  double num = (f(3 + step) - f(3 - step)) / (2 * step);
  REQUIRE(num == Catch::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("binary cross entropy matches hand values") {
  REQUIRE(loss_bce(0.5, 1) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  REQUIRE(loss_bce(0.9, 0) == Catch::Approx(-std::log(0.1)).epsilon(1e-9));
  REQUIRE(loss_bce(1.0 - 1e-9, 1) < 1e-6);
  REQUIRE(loss_bce(0.0, 1) < 20.0);  // clamp keeps it finite
}

TEST_CASE("gradients match central differences for the sequence cell") {
  for (int trial = 0; trial < 5; ++trial) {
    NNConfig c = tiny_config(50 + static_cast<uint64_t>(trial));
    ClassifierStack s = make_stack(CellKind::Sequence, c, 90 + static_cast<uint64_t>(trial));
    Rng rng(300 + static_cast<uint64_t>(trial));
    EncodedExample ex = random_example(rng, c.vocab);
    double err = gradcheck_stack(s, ex, trial % 2);
    INFO("trial " << trial);
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("gradients match central differences for the tree cell") {
  for (int trial = 0; trial < 5; ++trial) {
    NNConfig c = tiny_config(150 + static_cast<uint64_t>(trial));
    ClassifierStack s = make_stack(CellKind::Tree, c, 190 + static_cast<uint64_t>(trial));
    Rng rng(400 + static_cast<uint64_t>(trial));
    EncodedExample ex = random_example(rng, c.vocab);
    double err = gradcheck_stack(s, ex, trial % 2);
    INFO("trial " << trial);
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("gradients stay correct under a fixed dropout mask") {
  NNConfig c = tiny_config(77);
  Rng maskrng(5);
  Eigen::VectorXd mask = detail::make_dropout_mask(c.h2, c.dropout, maskrng);
  for (CellKind kind : {CellKind::Sequence, CellKind::Tree}) {
    ClassifierStack s = make_stack(kind, c, 88);
    Rng rng(9);
    EncodedExample ex = random_example(rng, c.vocab);
    REQUIRE(gradcheck_stack(s, ex, 1, &mask) < 1e-4);
  }
}

TEST_CASE("zero parameters give exactly one half") {
  NNConfig c = tiny_config(1);
  for (CellKind kind : {CellKind::Sequence, CellKind::Tree}) {
    ClassifierStack s = make_stack(kind, c, 2);
    std::fill(s.theta.val.begin(), s.theta.val.end(), 0.0);
    Rng rng(3);
    EncodedExample ex = random_example(rng, c.vocab);
    REQUIRE(stack_predict(s, ex) == 0.5);
  }
}

TEST_CASE("forward is strictly inside the unit interval and deterministic") {
  NNConfig c = tiny_config(4);
  for (CellKind kind : {CellKind::Sequence, CellKind::Tree}) {
    ClassifierStack s = make_stack(kind, c, 5);
    Rng rng(6);
    for (int i = 0; i < 20; ++i) {
      EncodedExample ex = random_example(rng, c.vocab);
      double p = stack_predict(s, ex);
      REQUIRE(p > 0.0);
      REQUIRE(p < 1.0);
      REQUIRE(stack_predict(s, ex) == p);
    }
  }
}

TEST_CASE("forward rejects bad input") {
  NNConfig c = tiny_config(7);
  ClassifierStack s = make_stack(CellKind::Sequence, c, 8);
  EncodedExample empty;
  REQUIRE_THROWS_AS(stack_predict(s, empty), std::invalid_argument);
  EncodedExample bad;
  bad.seq = {2, 99};
  REQUIRE_THROWS_AS(stack_predict(s, bad), std::out_of_range);
  NNConfig bad_cfg = tiny_config(1);
  bad_cfg.dropout = 1.0;
  REQUIRE_THROWS_AS(bad_cfg.validate(), std::invalid_argument);
}

TEST_CASE("single token input collapses both cells to the same value") {
  NNConfig c = tiny_config(10);
  ClassifierStack seq = make_stack(CellKind::Sequence, c, 11);
  ClassifierStack tree = make_stack(CellKind::Tree, c, 12);
  tree.theta.val = seq.theta.val;  // shared parameters
  for (int tok = kReservedTokens; tok < c.vocab; ++tok) {
    EncodedExample ex;
    ex.seq = {tok};
    ex.tree.nodes = {{tok, {}}};
    REQUIRE(std::abs(stack_predict(seq, ex) - stack_predict(tree, ex)) < 1e-12);
  }
}

TEST_CASE("child order does not change the tree forward") {
  NNConfig c = tiny_config(13);
  ClassifierStack s = make_stack(CellKind::Tree, c, 14);
  EncodedExample a, b;
  // ADD3-style root with three leaf children, two orders
  a.tree.nodes = {{2, {1, 2, 3}}, {4, {}}, {5, {}}, {6, {}}};
  b.tree.nodes = {{2, {3, 1, 2}}, {4, {}}, {5, {}}, {6, {}}};
  REQUIRE(std::abs(stack_predict(s, a) - stack_predict(s, b)) < 1e-14);

  // and with full subtrees swapped: 2[7[4], 5] versus 2[5, 7[4]]
  EncodedExample c1, c2;
  c1.tree.nodes = {{2, {1, 3}}, {7, {2}}, {4, {}}, {5, {}}};
  c2.tree.nodes = {{2, {1, 2}}, {5, {}}, {7, {3}}, {4, {}}};
  REQUIRE(std::abs(stack_predict(s, c1) - stack_predict(s, c2)) < 1e-14);
}

TEST_CASE("dropout mask zeroes the configured fraction") {
  Rng rng(2025);
  int n = 32;
  long zeros = 0, draws = 10000;
  for (long i = 0; i < draws; ++i) {
    Eigen::VectorXd m = detail::make_dropout_mask(n, 0.40, rng);
    for (int j = 0; j < n; ++j) {
      if (m[j] == 0.0)
        ++zeros;
      else
        REQUIRE(m[j] == Catch::Approx(1.0 / 0.6));
    }
  }
  double frac = static_cast<double>(zeros) / (static_cast<double>(draws) * n);
  REQUIRE(frac > 0.37);
  REQUIRE(frac < 0.43);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  NNConfig c = tiny_config(20);
  c.lr = 0.0;
  c.epochs = 2;
  BinaryRelevanceModel m = make_model(CellKind::Sequence, c);
  std::vector<std::vector<double>> before;
  for (auto& s : m.stacks) before.push_back(s.theta.val);
  train(m, toy_corpus(40, c.vocab, 21));
  for (int j = 0; j < kAlgCount; ++j) REQUIRE(m.stacks[static_cast<size_t>(j)].theta.val == before[static_cast<size_t>(j)]);
}

TEST_CASE("training descends on a learnable toy task") {
  NNConfig c;
  c.vocab = 8;
  c.d_emb = 6;
  c.h1 = 8;
  c.h2 = 6;
  c.d_dense = 6;
  c.epochs = 30;
  c.seed = 22;
  auto data = toy_corpus(200, c.vocab, 23);
  for (CellKind kind : {CellKind::Sequence, CellKind::Tree}) {
    BinaryRelevanceModel m = make_model(kind, c);
    TrainResult r = train(m, data);
    for (int j = 0; j < kAlgCount; ++j) {
      INFO(cell_name(kind) << " classifier " << j);
      REQUIRE(r.loss_curves[static_cast<size_t>(j)].size() == 30);
      REQUIRE(r.loss_curves[static_cast<size_t>(j)].back() < r.loss_curves[static_cast<size_t>(j)].front());
    }
  }
}

TEST_CASE("training is deterministic and classifier-independent") {
  NNConfig c = tiny_config(30);
  c.epochs = 3;
  auto data = toy_corpus(60, c.vocab, 31);

  BinaryRelevanceModel a = make_model(CellKind::Tree, c);
  BinaryRelevanceModel b = make_model(CellKind::Tree, c);
  train(a, data);
  train(b, data);
  for (int j = 0; j < kAlgCount; ++j) REQUIRE(a.stacks[static_cast<size_t>(j)].theta.val == b.stacks[static_cast<size_t>(j)].theta.val);

  // flipping one classifier's labels must not move any other classifier
  auto flipped = data;
  for (auto& ex : flipped) ex.labels[4] ^= 1;
  BinaryRelevanceModel d = make_model(CellKind::Tree, c);
  train(d, flipped);
  for (int j = 0; j < kAlgCount - 1; ++j) REQUIRE(d.stacks[static_cast<size_t>(j)].theta.val == a.stacks[static_cast<size_t>(j)].theta.val);
  REQUIRE(d.stacks[4].theta.val != a.stacks[4].theta.val);
}

TEST_CASE("worker count does not change training results") {
  NNConfig c = tiny_config(40);
  c.epochs = 2;
  auto data = toy_corpus(50, c.vocab, 41);
  BinaryRelevanceModel one = make_model(CellKind::Sequence, c);
  BinaryRelevanceModel three = make_model(CellKind::Sequence, c);
  train(one, data, 1);
  train(three, data, 3);
  for (int j = 0; j < kAlgCount; ++j) REQUIRE(one.stacks[static_cast<size_t>(j)].theta.val == three.stacks[static_cast<size_t>(j)].theta.val);
}

TEST_CASE("positive class weight is clamped") {
  NNConfig c = tiny_config(50);
  c.epochs = 1;
  auto data = toy_corpus(200, c.vocab, 51);
  for (auto& ex : data) ex.labels = {0, 0, 0, 0, 0};
  data[0].labels[0] = 1;                              // 1 vs 199 -> clamp at 10
  for (int i = 0; i < 100; ++i) data[static_cast<size_t>(i)].labels[1] = 1;  // balanced -> 1
  for (int i = 0; i < 60; ++i) data[static_cast<size_t>(i)].labels[2] = 1;   // 140/60 -> 2.33
  for (auto& ex : data) ex.labels[3] = 1;             // all positive -> floor 1
  BinaryRelevanceModel m = make_model(CellKind::Sequence, c);
  TrainResult r = train(m, data);
  REQUIRE(r.pos_weight[0] == 10.0);
  REQUIRE(r.pos_weight[1] == 1.0);
  REQUIRE(r.pos_weight[2] == Catch::Approx(140.0 / 60.0));
  REQUIRE(r.pos_weight[3] == 1.0);
  REQUIRE(r.pos_weight[4] == 1.0);  // no positives at all
}

TEST_CASE("predict returns one probability per sub-algorithm") {
  NNConfig c = tiny_config(60);
  BinaryRelevanceModel m = make_model(CellKind::Tree, c);
  Rng rng(61);
  EncodedExample ex = random_example(rng, c.vocab);
  auto probs = predict(m, ex);
  REQUIRE(probs.size() == kAlgCount);
  for (int j = 0; j < kAlgCount; ++j) {
    REQUIRE(probs[static_cast<size_t>(j)] > 0.0);
    REQUIRE(probs[static_cast<size_t>(j)] < 1.0);
    REQUIRE(probs[static_cast<size_t>(j)] == stack_predict(m.stacks[static_cast<size_t>(j)], ex));
  }
}

TEST_CASE("checkpoints round trip and validate") {
  NNConfig c = tiny_config(70);
  c.epochs = 1;
  auto data = toy_corpus(30, c.vocab, 71);
  BinaryRelevanceModel m = make_model(CellKind::Tree, c);
  train(m, data);
  const std::string path = "/tmp/intsel_test_ckpt.json";
  std::uint64_t vh = 0xabcdef0123456789ull;
  save_checkpoint(m, vh, path);

  BinaryRelevanceModel back = load_checkpoint(path, vh);
  REQUIRE(back.kind == CellKind::Tree);
  REQUIRE(back.cfg.vocab == c.vocab);
  for (int j = 0; j < kAlgCount; ++j) REQUIRE(back.stacks[static_cast<size_t>(j)].theta.val == m.stacks[static_cast<size_t>(j)].theta.val);
  Rng rng(72);
  EncodedExample ex = random_example(rng, c.vocab);
  REQUIRE(predict(back, ex) == predict(m, ex));

  REQUIRE_THROWS_AS(load_checkpoint(path, vh + 1), std::runtime_error);
  std::remove(path.c_str());
}
