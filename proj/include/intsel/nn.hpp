#pragma once
// Minimal neural stack for the selection models: trainable embeddings, a
// fused-gate LSTM, a child-sum tree LSTM, dropout, a dense head, Adam, and
// the binary-relevance trainer. Each classifier keeps its parameters in one
// flat vector so finite-difference checks, Adam, and checkpoints all walk
// the same storage.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "intsel/calculus.hpp"
#include "intsel/encode.hpp"

namespace intsel {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> val;
  std::vector<double> grad;  // empty until ensure_grad

  size_t size() const { return val.size(); }
  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

struct NNConfig {
  int vocab = 0;
  int d_emb = 32;
  int h1 = 64;
  int h2 = 32;
  int d_dense = 32;
  double dropout = 0.40;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 30;
  int batch = 32;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab < kReservedTokens) throw std::invalid_argument("NNConfig: vocab too small");
    if (d_emb < 1 || h1 < 1 || h2 < 1 || d_dense < 1)
      throw std::invalid_argument("NNConfig: layer sizes must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("NNConfig: dropout in [0,1)");
    if (lr < 0.0) throw std::invalid_argument("NNConfig: negative learning rate");
    if (epochs < 0 || batch < 1) throw std::invalid_argument("NNConfig: bad epochs/batch");
  }
};

enum class CellKind { Sequence, Tree };

inline const char* cell_name(CellKind k) { return k == CellKind::Sequence ? "sequence" : "tree"; }

// one record, both encodings precomputed
struct EncodedExample {
  TokenSequence seq;
  TreeEncoding tree;
  std::array<std::uint8_t, kAlgCount> labels{};
};

inline double loss_bce(double p, int y) {
  double q = std::min(1.0 - 1e-7, std::max(1e-7, p));
  return y ? -std::log(q) : -std::log1p(-q);
}

namespace detail {

// flat offsets; gate rows packed [input; forget; output; update]
struct StackLayout {
  int vocab, d, h1, h2, dd;
  size_t emb, w1, u1, b1, w2, u2, b2, wd, bd, wo, bo, total;

  static StackLayout make(const NNConfig& c) {
    StackLayout l;
    l.vocab = c.vocab;
    l.d = c.d_emb;
    l.h1 = c.h1;
    l.h2 = c.h2;
    l.dd = c.d_dense;
    size_t at = 0;
    auto block = [&](size_t n) {
      size_t off = at;
      at += n;
      return off;
    };
    l.emb = block(static_cast<size_t>(l.d) * l.vocab);
    l.w1 = block(static_cast<size_t>(4 * l.h1) * l.d);
    l.u1 = block(static_cast<size_t>(4 * l.h1) * l.h1);
    l.b1 = block(static_cast<size_t>(4 * l.h1));
    l.w2 = block(static_cast<size_t>(4 * l.h2) * l.h1);
    l.u2 = block(static_cast<size_t>(4 * l.h2) * l.h2);
    l.b2 = block(static_cast<size_t>(4 * l.h2));
    l.wd = block(static_cast<size_t>(l.dd) * l.h2);
    l.bd = block(static_cast<size_t>(l.dd));
    l.wo = block(static_cast<size_t>(l.dd));
    l.bo = block(1);
    l.total = at;
    return l;
  }
};

using CMapM = Eigen::Map<const Eigen::MatrixXd>;
using CMapV = Eigen::Map<const Eigen::VectorXd>;
using MapM = Eigen::Map<Eigen::MatrixXd>;
using MapV = Eigen::Map<Eigen::VectorXd>;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// per-layer activations kept for backward
struct LayerCache {
  Eigen::MatrixXd x;   // input columns (d_in x T)
  Eigen::MatrixXd g;   // activated gates (4h x T); forget block holds this
                       // node's own gate as seen by its parent in tree mode
  Eigen::MatrixXd ht;  // tree mode: child-sum of hidden states per node
  Eigen::MatrixXd c, tc, h;  // cell, tanh(cell), hidden (h x T)
};

struct StackCache {
  const TreeEncoding* tree = nullptr;  // null in sequence mode
  std::vector<int> toks;
  LayerCache l1, l2;
  Eigen::VectorXd mask;  // scaled dropout mask; empty when inactive
  Eigen::VectorXd hfin;  // final hidden after dropout
  Eigen::VectorXd z, a;  // dense pre/post rectifier
  double logit = 0, p = 0.5;
};

}  // namespace detail

struct ClassifierStack {
  NNConfig cfg;
  CellKind kind = CellKind::Sequence;
  detail::StackLayout lay;
  Tensor theta;

  void init(Rng& rng) {
    cfg.validate();
    lay = detail::StackLayout::make(cfg);
    theta.shape = {static_cast<int>(lay.total)};
    theta.val.assign(lay.total, 0.0);
    double* p = theta.val.data();
    auto fill = [&](size_t off, size_t n, double bound) {
      for (size_t i = 0; i < n; ++i) p[off + i] = rng.uniform(-bound, bound);
    };
    fill(lay.emb, static_cast<size_t>(lay.d) * lay.vocab, 1.0 / std::sqrt(lay.d));
    fill(lay.w1, static_cast<size_t>(4 * lay.h1) * lay.d, 1.0 / std::sqrt(lay.h1));
    fill(lay.u1, static_cast<size_t>(4 * lay.h1) * lay.h1, 1.0 / std::sqrt(lay.h1));
    fill(lay.w2, static_cast<size_t>(4 * lay.h2) * lay.h1, 1.0 / std::sqrt(lay.h2));
    fill(lay.u2, static_cast<size_t>(4 * lay.h2) * lay.h2, 1.0 / std::sqrt(lay.h2));
    fill(lay.wd, static_cast<size_t>(lay.dd) * lay.h2, 1.0 / std::sqrt(lay.dd));
    fill(lay.wo, static_cast<size_t>(lay.dd), 1.0 / std::sqrt(lay.dd));
    // biases zero except forget gates, nudged open
    for (int i = 0; i < lay.h1; ++i) p[lay.b1 + lay.h1 + i] = 1.0;
    for (int i = 0; i < lay.h2; ++i) p[lay.b2 + lay.h2 + i] = 1.0;
  }
};

namespace detail {

// Bernoulli keep mask, inverted scaling; entries are 0 or 1/keep
inline Eigen::VectorXd make_dropout_mask(int n, double rate, Rng& rng) {
  Eigen::VectorXd m(n);
  double keep = 1.0 - rate;
  for (int i = 0; i < n; ++i) m[i] = rng.real() < rate ? 0.0 : 1.0 / keep;
  return m;
}

inline void run_layer_sequence(const CMapM& W, const CMapM& U, const CMapV& b, LayerCache& L) {
  int h = static_cast<int>(U.cols());
  int T = static_cast<int>(L.x.cols());
  L.g.resize(4 * h, T);
  L.c.resize(h, T);
  L.tc.resize(h, T);
  L.h.resize(h, T);
  Eigen::VectorXd a(4 * h);
  for (int t = 0; t < T; ++t) {
    a.noalias() = W * L.x.col(t);
    a += b;
    if (t > 0) a.noalias() += U * L.h.col(t - 1);
    for (int i = 0; i < 3 * h; ++i) a[i] = sigmoid(a[i]);
    for (int i = 3 * h; i < 4 * h; ++i) a[i] = std::tanh(a[i]);
    L.g.col(t) = a;
    auto gi = a.segment(0, h), gf = a.segment(h, h), go = a.segment(2 * h, h),
         gu = a.segment(3 * h, h);
    if (t > 0)
      L.c.col(t) = gf.cwiseProduct(L.c.col(t - 1)) + gi.cwiseProduct(gu);
    else
      L.c.col(t) = gi.cwiseProduct(gu);
    L.tc.col(t) = L.c.col(t).array().tanh();
    L.h.col(t) = go.cwiseProduct(L.tc.col(t));
  }
}

// child-sum cell over a pre-order node list (children carry higher indices).
// The forget block of g.col(n) stores node n's own gate, computed while
// visiting its parent; the root's forget block is unused.
inline void run_layer_tree(const CMapM& W, const CMapM& U, const CMapV& b, const TreeEncoding& tree,
                           LayerCache& L) {
  int h = static_cast<int>(U.cols());
  int N = static_cast<int>(tree.nodes.size());
  L.g.setZero(4 * h, N);
  L.ht.resize(h, N);
  L.c.resize(h, N);
  L.tc.resize(h, N);
  L.h.resize(h, N);
  Eigen::VectorXd a(4 * h), af(h);
  for (int n = N - 1; n >= 0; --n) {
    const auto& kids = tree.nodes[static_cast<size_t>(n)].kids;
    L.ht.col(n).setZero();
    for (int k : kids) L.ht.col(n) += L.h.col(k);
    a.noalias() = W * L.x.col(n);
    a += b;
    // children add U_f h_k to the still-raw forget block below; i/o/u use
    // the child-sum state
    if (!kids.empty()) {
      a.segment(0, h).noalias() += U.middleRows(0, h) * L.ht.col(n);
      a.segment(2 * h, 2 * h).noalias() += U.middleRows(2 * h, 2 * h) * L.ht.col(n);
    }
    for (int i = 0; i < h; ++i) a[i] = sigmoid(a[i]);
    for (int i = 2 * h; i < 3 * h; ++i) a[i] = sigmoid(a[i]);
    for (int i = 3 * h; i < 4 * h; ++i) a[i] = std::tanh(a[i]);
    L.g.col(n).segment(0, h) = a.segment(0, h);
    L.g.col(n).segment(2 * h, 2 * h) = a.segment(2 * h, 2 * h);
    L.c.col(n) = a.segment(0, h).cwiseProduct(a.segment(3 * h, h));
    for (int k : kids) {
      af.noalias() = U.middleRows(h, h) * L.h.col(k);
      af += a.segment(h, h);
      for (int i = 0; i < h; ++i) af[i] = sigmoid(af[i]);
      L.g.col(k).segment(h, h) = af;
      L.c.col(n) += af.cwiseProduct(L.c.col(k));
    }
    L.tc.col(n) = L.c.col(n).array().tanh();
    L.h.col(n) = L.g.col(n).segment(2 * h, h).cwiseProduct(L.tc.col(n));
  }
}

struct Views {
  CMapM E, W1, U1, W2, U2, Wd;
  CMapV b1, b2, bd, wo;
  double bo;
};

inline Views views(const ClassifierStack& s) {
  const double* p = s.theta.val.data();
  const auto& l = s.lay;
  return Views{CMapM(p + l.emb, l.d, l.vocab),
               CMapM(p + l.w1, 4 * l.h1, l.d),
               CMapM(p + l.u1, 4 * l.h1, l.h1),
               CMapM(p + l.w2, 4 * l.h2, l.h1),
               CMapM(p + l.u2, 4 * l.h2, l.h2),
               CMapM(p + l.wd, l.dd, l.h2),
               CMapV(p + l.b1, 4 * l.h1),
               CMapV(p + l.b2, 4 * l.h2),
               CMapV(p + l.bd, l.dd),
               CMapV(p + l.wo, l.dd),
               p[l.bo]};
}

// probability for one example; pass a mask to enable dropout (training)
inline double stack_forward(const ClassifierStack& s, const EncodedExample& ex,
                            const Eigen::VectorXd* mask, StackCache& cc) {
  Views v = views(s);
  const auto& l = s.lay;
  if (s.kind == CellKind::Sequence) {
    cc.tree = nullptr;
    cc.toks = ex.seq;
  } else {
    cc.tree = &ex.tree;
    cc.toks.clear();
    for (const auto& n : ex.tree.nodes) cc.toks.push_back(n.token);
  }
  int T = static_cast<int>(cc.toks.size());
  if (T == 0) throw std::invalid_argument("stack_forward: empty input");
  cc.l1.x.resize(l.d, T);
  for (int t = 0; t < T; ++t) {
    int tok = cc.toks[static_cast<size_t>(t)];
    if (tok < 0 || tok >= l.vocab)
      throw std::out_of_range("stack_forward: token id outside vocabulary");
    cc.l1.x.col(t) = v.E.col(tok);
  }
  if (s.kind == CellKind::Sequence) {
    run_layer_sequence(v.W1, v.U1, v.b1, cc.l1);
    cc.l2.x = cc.l1.h;
    run_layer_sequence(v.W2, v.U2, v.b2, cc.l2);
    cc.hfin = cc.l2.h.col(T - 1);
  } else {
    run_layer_tree(v.W1, v.U1, v.b1, *cc.tree, cc.l1);
    cc.l2.x = cc.l1.h;
    run_layer_tree(v.W2, v.U2, v.b2, *cc.tree, cc.l2);
    cc.hfin = cc.l2.h.col(0);
  }
  if (mask) {
    cc.mask = *mask;
    cc.hfin = cc.hfin.cwiseProduct(cc.mask);
  } else {
    cc.mask.resize(0);
  }
  cc.z.noalias() = v.Wd * cc.hfin;
  cc.z += v.bd;
  cc.a = cc.z.cwiseMax(0.0);
  cc.logit = v.wo.dot(cc.a) + v.bo;
  cc.p = sigmoid(cc.logit);
  return cc.p;
}

struct GradViews {
  MapM E, W1, U1, W2, U2, Wd;
  MapV b1, b2, bd, wo;
  double* bo;
};

inline GradViews grad_views(ClassifierStack& s) {
  s.theta.ensure_grad();
  double* p = s.theta.grad.data();
  const auto& l = s.lay;
  return GradViews{MapM(p + l.emb, l.d, l.vocab),
                   MapM(p + l.w1, 4 * l.h1, l.d),
                   MapM(p + l.u1, 4 * l.h1, l.h1),
                   MapM(p + l.w2, 4 * l.h2, l.h1),
                   MapM(p + l.u2, 4 * l.h2, l.h2),
                   MapM(p + l.wd, l.dd, l.h2),
                   MapV(p + l.b1, 4 * l.h1),
                   MapV(p + l.b2, 4 * l.h2),
                   MapV(p + l.bd, l.dd),
                   MapV(p + l.wo, l.dd),
                   p + l.bo};
}

// reverse pass of run_layer_sequence; dH is the downstream gradient per
// step, dX receives input gradients
inline void back_layer_sequence(const CMapM& W, const CMapM& U, MapM& dW, MapM& dU, MapV& db,
                                const LayerCache& L, const Eigen::MatrixXd& dH,
                                Eigen::MatrixXd& dX) {
  int h = static_cast<int>(U.cols());
  int T = static_cast<int>(L.x.cols());
  dX.resize(L.x.rows(), T);
  Eigen::VectorXd dh_rec = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd dc_rec = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd da(4 * h);
  for (int t = T - 1; t >= 0; --t) {
    auto gi = L.g.col(t).segment(0, h), gf = L.g.col(t).segment(h, h),
         go = L.g.col(t).segment(2 * h, h), gu = L.g.col(t).segment(3 * h, h);
    Eigen::VectorXd dh = dH.col(t) + dh_rec;
    Eigen::VectorXd dc =
        dc_rec + dh.cwiseProduct(go).cwiseProduct((1.0 - L.tc.col(t).array().square()).matrix());
    da.segment(2 * h, h) =
        dh.cwiseProduct(L.tc.col(t)).cwiseProduct(go).cwiseProduct((1.0 - go.array()).matrix());
    da.segment(0, h) =
        dc.cwiseProduct(gu).cwiseProduct(gi).cwiseProduct((1.0 - gi.array()).matrix());
    da.segment(3 * h, h) = dc.cwiseProduct(gi).cwiseProduct((1.0 - gu.array().square()).matrix());
    if (t > 0) {
      da.segment(h, h) = dc.cwiseProduct(L.c.col(t - 1))
                             .cwiseProduct(gf)
                             .cwiseProduct((1.0 - gf.array()).matrix());
      dc_rec = dc.cwiseProduct(gf);
    } else {
      da.segment(h, h).setZero();
    }
    dW.noalias() += da * L.x.col(t).transpose();
    if (t > 0) dU.noalias() += da * L.h.col(t - 1).transpose();
    db += da;
    dh_rec.noalias() = U.transpose() * da;
    dX.col(t).noalias() = W.transpose() * da;
  }
}

// reverse pass of run_layer_tree; parents sit before children in the node
// list, so one ascending sweep pushes gradients rootward-to-leafward
inline void back_layer_tree(const CMapM& W, const CMapM& U, MapM& dW, MapM& dU, MapV& db,
                            const TreeEncoding& tree, const LayerCache& L,
                            const Eigen::MatrixXd& dH, Eigen::MatrixXd& dX) {
  int h = static_cast<int>(U.cols());
  int N = static_cast<int>(tree.nodes.size());
  dX.resize(L.x.rows(), N);
  Eigen::MatrixXd dh_acc = Eigen::MatrixXd::Zero(h, N);
  Eigen::MatrixXd dc_acc = Eigen::MatrixXd::Zero(h, N);
  Eigen::VectorXd da(4 * h), daf(h), daf_sum(h);
  for (int n = 0; n < N; ++n) {
    const auto& kids = tree.nodes[static_cast<size_t>(n)].kids;
    auto gi = L.g.col(n).segment(0, h), go = L.g.col(n).segment(2 * h, h),
         gu = L.g.col(n).segment(3 * h, h);
    Eigen::VectorXd dh = dH.col(n) + dh_acc.col(n);
    Eigen::VectorXd dc =
        dc_acc.col(n) +
        dh.cwiseProduct(go).cwiseProduct((1.0 - L.tc.col(n).array().square()).matrix());
    da.segment(2 * h, h) =
        dh.cwiseProduct(L.tc.col(n)).cwiseProduct(go).cwiseProduct((1.0 - go.array()).matrix());
    da.segment(0, h) =
        dc.cwiseProduct(gu).cwiseProduct(gi).cwiseProduct((1.0 - gi.array()).matrix());
    da.segment(3 * h, h) = dc.cwiseProduct(gi).cwiseProduct((1.0 - gu.array().square()).matrix());
    da.segment(h, h).setZero();
    daf_sum.setZero();
    Eigen::VectorXd dht = Eigen::VectorXd::Zero(h);
    if (!kids.empty()) {
      dht.noalias() = U.middleRows(0, h).transpose() * da.segment(0, h);
      dht.noalias() += U.middleRows(2 * h, 2 * h).transpose() * da.segment(2 * h, 2 * h);
    }
    for (int k : kids) {
      auto fk = L.g.col(k).segment(h, h);
      daf = dc.cwiseProduct(L.c.col(k)).cwiseProduct(fk).cwiseProduct((1.0 - fk.array()).matrix());
      dc_acc.col(k) += dc.cwiseProduct(fk);
      dh_acc.col(k) += dht;
      dh_acc.col(k).noalias() += U.middleRows(h, h).transpose() * daf;
      dU.middleRows(h, h).noalias() += daf * L.h.col(k).transpose();
      db.segment(h, h) += daf;
      daf_sum += daf;
    }
    if (!kids.empty()) {
      dU.middleRows(0, h).noalias() += da.segment(0, h) * L.ht.col(n).transpose();
      dU.middleRows(2 * h, 2 * h).noalias() +=
          da.segment(2 * h, 2 * h) * L.ht.col(n).transpose();
    }
    da.segment(h, h) = daf_sum;
    dW.noalias() += da * L.x.col(n).transpose();
    db.segment(0, h) += da.segment(0, h);
    db.segment(2 * h, 2 * h) += da.segment(2 * h, 2 * h);
    dX.col(n).noalias() = W.transpose() * da;
  }
}

// accumulate parameter gradients for one example given dL/dlogit
inline void stack_backward(ClassifierStack& s, const StackCache& cc, double dlogit) {
  Views v = views(s);
  GradViews g = grad_views(s);
  g.wo += dlogit * cc.a;
  *g.bo += dlogit;
  Eigen::VectorXd dz = (dlogit * v.wo).cwiseProduct(
      (cc.z.array() > 0.0).cast<double>().matrix());
  g.Wd.noalias() += dz * cc.hfin.transpose();
  g.bd += dz;
  Eigen::VectorXd dhfin = v.Wd.transpose() * dz;
  if (cc.mask.size() > 0) dhfin = dhfin.cwiseProduct(cc.mask);
  int T = static_cast<int>(cc.toks.size());
  Eigen::MatrixXd dH2 = Eigen::MatrixXd::Zero(s.lay.h2, T);
  dH2.col(cc.tree ? 0 : T - 1) = dhfin;
  Eigen::MatrixXd dX2, dX1;
  if (cc.tree) {
    back_layer_tree(v.W2, v.U2, g.W2, g.U2, g.b2, *cc.tree, cc.l2, dH2, dX2);
    back_layer_tree(v.W1, v.U1, g.W1, g.U1, g.b1, *cc.tree, cc.l1, dX2, dX1);
  } else {
    back_layer_sequence(v.W2, v.U2, g.W2, g.U2, g.b2, cc.l2, dH2, dX2);
    back_layer_sequence(v.W1, v.U1, g.W1, g.U1, g.b1, cc.l1, dX2, dX1);
  }
  for (int t = 0; t < T; ++t) g.E.col(cc.toks[static_cast<size_t>(t)]) += dX1.col(t);
}

}  // namespace detail

// eval-mode probability (deterministic, no dropout)
inline double stack_predict(const ClassifierStack& s, const EncodedExample& ex) {
  detail::StackCache cc;
  return detail::stack_forward(s, ex, nullptr, cc);
}

// max relative error between analytic and central-difference gradients
inline double gradcheck_stack(ClassifierStack& s, const EncodedExample& ex, int y,
                              const Eigen::VectorXd* mask = nullptr, double step = 1e-5) {
  detail::StackCache cc;
  double p = detail::stack_forward(s, ex, mask, cc);
  s.theta.ensure_grad();
  s.theta.zero_grad();
  detail::stack_backward(s, cc, p - y);
  double worst = 0.0;
  for (size_t i = 0; i < s.theta.val.size(); ++i) {
    double keep = s.theta.val[i];
    s.theta.val[i] = keep + step;
    double up = loss_bce(detail::stack_forward(s, ex, mask, cc), y);
    s.theta.val[i] = keep - step;
    double dn = loss_bce(detail::stack_forward(s, ex, mask, cc), y);
    s.theta.val[i] = keep;
    double num = (up - dn) / (2.0 * step);
    double ana = s.theta.grad[i];
    // the 1e-6 floor keeps differencing round-off (about 1e-11 on a unit
    // loss) from registering on parameters whose true gradient is zero
    double rel = std::abs(num - ana) / std::max(1e-6, std::abs(num) + std::abs(ana));
    worst = std::max(worst, rel);
  }
  return worst;
}

struct BinaryRelevanceModel {
  CellKind kind = CellKind::Sequence;
  NNConfig cfg;
  std::vector<ClassifierStack> stacks;  // one per sub-algorithm, independent
};

inline BinaryRelevanceModel make_model(CellKind kind, const NNConfig& cfg) {
  cfg.validate();
  BinaryRelevanceModel m;
  m.kind = kind;
  m.cfg = cfg;
  m.stacks.resize(kAlgCount);
  for (int j = 0; j < kAlgCount; ++j) {
    m.stacks[static_cast<size_t>(j)].cfg = cfg;
    m.stacks[static_cast<size_t>(j)].kind = kind;
    Rng rng = Rng::derive(cfg.seed, 600 + static_cast<uint64_t>(kind), static_cast<uint64_t>(j));
    m.stacks[static_cast<size_t>(j)].init(rng);
  }
  return m;
}

inline std::array<double, kAlgCount> predict(const BinaryRelevanceModel& m,
                                             const EncodedExample& ex) {
  std::array<double, kAlgCount> out{};
  for (int j = 0; j < kAlgCount; ++j) out[static_cast<size_t>(j)] = stack_predict(m.stacks[static_cast<size_t>(j)], ex);
  return out;
}

inline std::array<double, kAlgCount> predict(const BinaryRelevanceModel& m, Expr e,
                                             const Vocabulary& v) {
  EncodedExample ex;
  ex.seq = encode_sequence(e, v);
  ex.tree = encode_tree(e, v);
  return predict(m, ex);
}

struct TrainResult {
  std::array<std::vector<double>, kAlgCount> loss_curves;  // mean train BCE per epoch
  std::array<double, kAlgCount> pos_weight{};
};

namespace detail {

inline void train_one_classifier(ClassifierStack& s, const std::vector<EncodedExample>& data,
                                 int label_index, std::vector<double>& curve, double& posw_out) {
  const NNConfig& c = s.cfg;
  size_t n = data.size();
  int64_t pos = 0;
  for (const auto& ex : data) pos += ex.labels[static_cast<size_t>(label_index)];
  int64_t neg = static_cast<int64_t>(n) - pos;
  double posw = pos > 0 ? std::min(10.0, std::max(1.0, double(neg) / double(pos))) : 1.0;
  posw_out = posw;

  Rng rng = Rng::derive(c.seed, 700 + static_cast<uint64_t>(s.kind), static_cast<uint64_t>(label_index));
  s.theta.ensure_grad();
  std::vector<double> m(s.theta.size(), 0.0), v(s.theta.size(), 0.0);
  int64_t step = 0;
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  StackCache cc;

  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0.0;
    size_t at = 0;
    while (at < n) {
      size_t bs = std::min(static_cast<size_t>(c.batch), n - at);
      s.theta.zero_grad();
      for (size_t b = 0; b < bs; ++b) {
        const EncodedExample& ex = data[order[at + b]];
        int y = ex.labels[static_cast<size_t>(label_index)];
        Eigen::VectorXd mask = make_dropout_mask(c.h2, c.dropout, rng);
        double p = stack_forward(s, ex, &mask, cc);
        double w = y ? posw : 1.0;
        epoch_loss += w * loss_bce(p, y);
        double dlogit = (y ? posw * (p - 1.0) : p) / static_cast<double>(bs);
        stack_backward(s, cc, dlogit);
      }
      ++step;
      double b1t = 1.0 - std::pow(c.beta1, static_cast<double>(step));
      double b2t = 1.0 - std::pow(c.beta2, static_cast<double>(step));
      for (size_t i = 0; i < s.theta.size(); ++i) {
        double gi = s.theta.grad[i];
        if (!std::isfinite(gi))
          throw numeric_error("train: non-finite gradient in classifier " +
                              std::string(alg_name(static_cast<SubAlgorithmId>(label_index))) +
                              ", epoch " + std::to_string(epoch));
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
        s.theta.val[i] -= c.lr * (m[i] / b1t) / (std::sqrt(v[i] / b2t) + c.adam_eps);
      }
      at += bs;
    }
    double mean = epoch_loss / static_cast<double>(n);
    if (!std::isfinite(mean))
      throw numeric_error("train: loss diverged in classifier " +
                          std::string(alg_name(static_cast<SubAlgorithmId>(label_index))) +
                          ", epoch " + std::to_string(epoch));
    curve.push_back(mean);
  }
}

}  // namespace detail

// trains all five classifiers; parallel across classifiers only, so the
// result is independent of the worker count
inline TrainResult train(BinaryRelevanceModel& model, const std::vector<EncodedExample>& data,
                         int workers = 1) {
  model.cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  TrainResult res;
  if (workers <= 1) {
    for (int j = 0; j < kAlgCount; ++j)
      detail::train_one_classifier(model.stacks[static_cast<size_t>(j)], data, j,
                                   res.loss_curves[static_cast<size_t>(j)], res.pos_weight[static_cast<size_t>(j)]);
    return res;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(kAlgCount);
  for (int w = 0; w < std::min(workers, kAlgCount); ++w) {
    pool.emplace_back([&, w]() {
      for (int j = w; j < kAlgCount; j += std::min(workers, kAlgCount)) {
        try {
          detail::train_one_classifier(model.stacks[static_cast<size_t>(j)], data, j,
                                       res.loss_curves[static_cast<size_t>(j)],
                                       res.pos_weight[static_cast<size_t>(j)]);
        } catch (...) {
          errs[static_cast<size_t>(j)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return res;
}

// ---- checkpoints ----

namespace detail {

inline nlohmann::ordered_json tensor_block(const double* p, size_t n, std::vector<int> shape) {
  nlohmann::ordered_json j;
  j["shape"] = shape;
  j["values"] = std::vector<double>(p, p + n);
  return j;
}

}  // namespace detail

inline void save_checkpoint(const BinaryRelevanceModel& m, std::uint64_t vocab_hash,
                            const std::string& path, const std::string& provenance = "") {
  nlohmann::ordered_json j;
  j["artifact"] = "model_checkpoint";
  j["format_version"] = 1;
  j["cell"] = cell_name(m.kind);
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(vocab_hash));
  j["vocab_hash"] = hex;
  if (!provenance.empty()) j["config_hash"] = provenance;
  j["config"] = {{"vocab", m.cfg.vocab},   {"d_emb", m.cfg.d_emb},     {"h1", m.cfg.h1},
                 {"h2", m.cfg.h2},         {"d_dense", m.cfg.d_dense}, {"dropout", m.cfg.dropout},
                 {"lr", m.cfg.lr},         {"beta1", m.cfg.beta1},     {"beta2", m.cfg.beta2},
                 {"epochs", m.cfg.epochs}, {"batch", m.cfg.batch},     {"seed", m.cfg.seed}};
  nlohmann::ordered_json cls = nlohmann::ordered_json::array();
  for (int ji = 0; ji < kAlgCount; ++ji) {
    const ClassifierStack& s = m.stacks[static_cast<size_t>(ji)];
    const auto& l = s.lay;
    const double* p = s.theta.val.data();
    nlohmann::ordered_json t;
    t["algorithm"] = alg_name(static_cast<SubAlgorithmId>(ji));
    nlohmann::ordered_json ten;
    ten["embedding"] = detail::tensor_block(p + l.emb, size_t(l.d) * l.vocab, {l.d, l.vocab});
    ten["rec1_w"] = detail::tensor_block(p + l.w1, size_t(4 * l.h1) * l.d, {4 * l.h1, l.d});
    ten["rec1_u"] = detail::tensor_block(p + l.u1, size_t(4 * l.h1) * l.h1, {4 * l.h1, l.h1});
    ten["rec1_b"] = detail::tensor_block(p + l.b1, size_t(4 * l.h1), {4 * l.h1});
    ten["rec2_w"] = detail::tensor_block(p + l.w2, size_t(4 * l.h2) * l.h1, {4 * l.h2, l.h1});
    ten["rec2_u"] = detail::tensor_block(p + l.u2, size_t(4 * l.h2) * l.h2, {4 * l.h2, l.h2});
    ten["rec2_b"] = detail::tensor_block(p + l.b2, size_t(4 * l.h2), {4 * l.h2});
    ten["dense_w"] = detail::tensor_block(p + l.wd, size_t(l.dd) * l.h2, {l.dd, l.h2});
    ten["dense_b"] = detail::tensor_block(p + l.bd, size_t(l.dd), {l.dd});
    ten["out_w"] = detail::tensor_block(p + l.wo, size_t(l.dd), {l.dd});
    ten["out_b"] = detail::tensor_block(p + l.bo, 1, {1});
    t["tensors"] = std::move(ten);
    cls.push_back(std::move(t));
  }
  j["classifiers"] = std::move(cls);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump() << '\n';
}

inline BinaryRelevanceModel load_checkpoint(const std::string& path, std::uint64_t vocab_hash) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("artifact", "") != "model_checkpoint" || j.value("format_version", 0) != 1)
    throw std::runtime_error("load_checkpoint: unrecognized container");
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(vocab_hash));
  if (j.value("vocab_hash", "") != hex)
    throw std::runtime_error("load_checkpoint: vocabulary hash mismatch");
  NNConfig c;
  const auto& jc = j.at("config");
  c.vocab = jc.at("vocab");
  c.d_emb = jc.at("d_emb");
  c.h1 = jc.at("h1");
  c.h2 = jc.at("h2");
  c.d_dense = jc.at("d_dense");
  c.dropout = jc.at("dropout");
  c.lr = jc.at("lr");
  c.beta1 = jc.at("beta1");
  c.beta2 = jc.at("beta2");
  c.epochs = jc.at("epochs");
  c.batch = jc.at("batch");
  c.seed = jc.at("seed");
  std::string cell = j.value("cell", "");
  CellKind kind;
  if (cell == "sequence")
    kind = CellKind::Sequence;
  else if (cell == "tree")
    kind = CellKind::Tree;
  else
    throw std::runtime_error("load_checkpoint: unknown cell kind");
  BinaryRelevanceModel m = make_model(kind, c);
  const auto& cls = j.at("classifiers");
  if (cls.size() != kAlgCount) throw std::runtime_error("load_checkpoint: classifier count");
  for (int ji = 0; ji < kAlgCount; ++ji) {
    ClassifierStack& s = m.stacks[static_cast<size_t>(ji)];
    const auto& l = s.lay;
    const auto& jt = cls[static_cast<size_t>(ji)];
    if (jt.value("algorithm", "") != alg_name(static_cast<SubAlgorithmId>(ji)))
      throw std::runtime_error("load_checkpoint: classifier order mismatch");
    const auto& ten = jt.at("tensors");
    auto read = [&](const char* name, size_t off, size_t n, std::vector<int> shape) {
      const auto& b = ten.at(name);
      if (b.at("shape").get<std::vector<int>>() != shape)
        throw std::runtime_error(std::string("load_checkpoint: shape mismatch for ") + name);
      const auto& vals = b.at("values");
      if (vals.size() != n)
        throw std::runtime_error(std::string("load_checkpoint: size mismatch for ") + name);
      for (size_t i = 0; i < n; ++i) s.theta.val[off + i] = vals[i].get<double>();
    };
    read("embedding", l.emb, size_t(l.d) * l.vocab, {l.d, l.vocab});
    read("rec1_w", l.w1, size_t(4 * l.h1) * l.d, {4 * l.h1, l.d});
    read("rec1_u", l.u1, size_t(4 * l.h1) * l.h1, {4 * l.h1, l.h1});
    read("rec1_b", l.b1, size_t(4 * l.h1), {4 * l.h1});
    read("rec2_w", l.w2, size_t(4 * l.h2) * l.h1, {4 * l.h2, l.h1});
    read("rec2_u", l.u2, size_t(4 * l.h2) * l.h2, {4 * l.h2, l.h2});
    read("rec2_b", l.b2, size_t(4 * l.h2), {4 * l.h2});
    read("dense_w", l.wd, size_t(l.dd) * l.h2, {l.dd, l.h2});
    read("dense_b", l.bd, size_t(l.dd), {l.dd});
    read("out_w", l.wo, size_t(l.dd), {l.dd});
    read("out_b", l.bo, 1, {1});
  }
  return m;
}

}  // namespace intsel
