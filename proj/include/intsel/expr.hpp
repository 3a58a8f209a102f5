#pragma once

#include <algorithm>
#include <cassert>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "intsel/util.hpp"

namespace intsel {

using BigInt = boost::multiprecision::cpp_int;
using BigRat = boost::multiprecision::cpp_rational;

inline BigInt rat_num(const BigRat& r) { return boost::multiprecision::numerator(r); }
inline BigInt rat_den(const BigRat& r) { return boost::multiprecision::denominator(r); }

inline BigInt ipow(BigInt base, unsigned e) {
  BigInt acc = 1;
  while (e) {
    if (e & 1) acc *= base;
    base *= base;
    e >>= 1;
  }
  return acc;
}

// boost's rational normalize() rejects negative denominators for unbounded
// integer types, so flip signs before constructing
inline BigRat make_rat(BigInt n, BigInt d) {
  if (d < 0) {
    n = -n;
    d = -d;
  }
  return BigRat(std::move(n), std::move(d));
}

inline BigRat rpow(const BigRat& r, long e) {
  if (e == 0) return BigRat(1);
  unsigned m = static_cast<unsigned>(e < 0 ? -e : e);
  BigInt n = ipow(rat_num(r), m), d = ipow(rat_den(r), m);
  return e > 0 ? make_rat(std::move(n), std::move(d)) : make_rat(std::move(d), std::move(n));
}

enum class Kind : uint8_t { Integer, ConstSym, Variable, Func, Pow, Mul, Add };

enum class FuncSym : uint8_t { Sin, Cos, Tan, Exp, Ln, Sqrt, Arctan, Arcsin };
inline constexpr int kFuncCount = 8;

inline const char* func_name(FuncSym f) {
  static const char* names[] = {"sin", "cos", "tan", "exp", "ln", "sqrt", "arctan", "arcsin"};
  return names[static_cast<int>(f)];
}
inline const char* func_token(FuncSym f) {
  // capitalized heads for the prefix serialization
  static const char* names[] = {"Sin", "Cos", "Tan", "Exp", "Ln", "Sqrt", "Arctan", "Arcsin"};
  return names[static_cast<int>(f)];
}
inline std::optional<FuncSym> func_by_name(const std::string& s) {
  for (int i = 0; i < kFuncCount; ++i)
    if (s == func_name(static_cast<FuncSym>(i))) return static_cast<FuncSym>(i);
  return std::nullopt;
}
inline std::optional<FuncSym> func_by_token(const std::string& s) {
  for (int i = 0; i < kFuncCount; ++i)
    if (s == func_token(static_cast<FuncSym>(i))) return static_cast<FuncSym>(i);
  return std::nullopt;
}

using NodeId = uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

struct Node {
  Kind kind;
  FuncSym func{FuncSym::Sin};   // Kind::Func
  uint8_t clevel{0};            // Kind::ConstSym: 1, 2, or 3
  BigInt ival;                  // Kind::Integer
  std::string var;              // Kind::Variable
  std::vector<NodeId> kids;     // Add/Mul >= 2, Pow {base, exp}, Func {arg}
};

class ExprStore;

// Lightweight handle: a node id plus the store it lives in. Structural
// equality of canonical expressions is identifier equality.
struct Expr {
  ExprStore* store{nullptr};
  NodeId id{kNoNode};

  Expr() = default;
  Expr(ExprStore* s, NodeId i) : store(s), id(i) {}
  bool valid() const { return store != nullptr && id != kNoNode; }
  const Node& node() const;
  Kind kind() const { return node().kind; }
  const std::vector<NodeId>& kid_ids() const { return node().kids; }
  size_t arity() const { return node().kids.size(); }
  Expr kid(size_t i) const { return Expr(store, node().kids[i]); }
  bool same(const Expr& o) const { return store == o.store && id == o.id; }
  bool operator==(const Expr& o) const { return same(o); }
  bool is_integer() const { return kind() == Kind::Integer; }
  bool is_integer(long v) const { return is_integer() && node().ival == v; }
  bool is_variable() const { return kind() == Kind::Variable; }
  const BigInt& ivalue() const { return node().ival; }
};

class parse_error : public std::runtime_error {
 public:
  parse_error(size_t pos, const std::string& msg)
      : std::runtime_error("parse error at position " + std::to_string(pos) + ": " + msg),
        pos(pos) {}
  size_t pos;
};

class eval_error : public std::runtime_error {
 public:
  enum class Code { UnboundVariable, Domain, Overflow };
  eval_error(Code c, NodeId where, const std::string& msg)
      : std::runtime_error(msg), code(c), where(where) {}
  Code code;
  NodeId where;
};

// Hash-consed arena. Structurally identical nodes intern to one id; the
// canonical builders (add/mul/pow/...) also flatten, fold integer constants
// and keep n-ary children in a fixed total order, so equal expressions get
// equal ids. Single writer; concurrent reads of a quiescent store are fine.
class ExprStore {
 public:
  size_t node_count() const { return arena_.size(); }
  const Node& node(NodeId id) const { return arena_[id]; }

  Expr integer(BigInt v) {
    Node n;
    n.kind = Kind::Integer;
    n.ival = std::move(v);
    return Expr(this, intern(std::move(n)));
  }
  Expr integer(long v) { return integer(BigInt(v)); }

  Expr constsym(int level) {
    if (level < 1 || level > 3) throw std::invalid_argument("constsym level must be 1..3");
    Node n;
    n.kind = Kind::ConstSym;
    n.clevel = static_cast<uint8_t>(level);
    return Expr(this, intern(std::move(n)));
  }

  Expr variable(std::string name) {
    Node n;
    n.kind = Kind::Variable;
    n.var = std::move(name);
    return Expr(this, intern(std::move(n)));
  }

  // num/den in lowest terms; den > 1 becomes Mul(num, Pow(den, -1)).
  Expr rational(const BigRat& r) {
    BigInt num = rat_num(r), den = rat_den(r);
    if (den == 1) return integer(num);
    Expr inv = intern_pow(integer(den), integer(-1l));
    if (num == 1) return inv;
    Node n;
    n.kind = Kind::Mul;
    n.kids = {integer(num).id, inv.id};
    return Expr(this, intern(std::move(n)));
  }

  Expr func(FuncSym f, Expr a) {
    check(a);
    // constant folds with exact rational results only
    if (a.is_integer(0)) {
      switch (f) {
        case FuncSym::Sin:
        case FuncSym::Tan:
        case FuncSym::Arctan:
        case FuncSym::Arcsin:
        case FuncSym::Sqrt:
          return integer(0l);
        case FuncSym::Cos:
        case FuncSym::Exp:
          return integer(1l);
        default:
          break;
      }
    }
    if (a.is_integer(1) && (f == FuncSym::Ln)) return integer(0l);
    if (a.is_integer(1) && (f == FuncSym::Sqrt)) return integer(1l);
    if (f == FuncSym::Sqrt) {
      if (auto r = as_rational(a)) {
        if (*r > 0) {
          BigInt sn = boost::multiprecision::sqrt(rat_num(*r));
          BigInt sd = boost::multiprecision::sqrt(rat_den(*r));
          if (sn * sn == rat_num(*r) && sd * sd == rat_den(*r)) return rational(BigRat(sn, sd));
        }
      }
    }
    Node n;
    n.kind = Kind::Func;
    n.func = f;
    n.kids = {a.id};
    return Expr(this, intern(std::move(n)));
  }

  Expr add(std::vector<Expr> kids) {
    // flatten
    std::vector<Expr> flat;
    for (auto& k : kids) {
      check(k);
      if (k.kind() == Kind::Add)
        for (NodeId c : k.kid_ids()) flat.emplace_back(this, c);
      else
        flat.push_back(k);
    }
    // collect like terms: expr = sum of coeff * core
    BigRat constant = 0;
    std::vector<std::pair<NodeId, BigRat>> terms;  // core id -> coeff
    auto merge = [&](NodeId core, const BigRat& c) {
      for (auto& t : terms)
        if (t.first == core) {
          t.second += c;
          return;
        }
      terms.emplace_back(core, c);
    };
    for (auto& k : flat) {
      if (auto r = as_rational(k)) {
        constant += *r;
        continue;
      }
      auto [c, core] = split_const_factor(k);
      merge(core.id, c);
    }
    std::vector<Expr> out;
    for (auto& [core, c] : terms) {
      if (c == 0) continue;
      if (c == 1)
        out.emplace_back(this, core);
      else
        out.push_back(mul({rational(c), Expr(this, core)}));
    }
    if (constant != 0) out.push_back(rational(constant));
    if (out.empty()) return integer(0l);
    if (out.size() == 1) return out[0];
    sort_canonical(out);
    Node n;
    n.kind = Kind::Add;
    for (auto& e : out) n.kids.push_back(e.id);
    return Expr(this, intern(std::move(n)));
  }

  Expr mul(std::vector<Expr> kids) {
    std::vector<Expr> flat;
    for (auto& k : kids) {
      check(k);
      if (k.kind() == Kind::Mul)
        for (NodeId c : k.kid_ids()) flat.emplace_back(this, c);
      else
        flat.push_back(k);
    }
    BigRat racc = 1;
    // group factors by base; exponents = rational part + symbolic parts
    struct Factor {
      NodeId base;
      BigRat rexp;
      std::vector<NodeId> sexp;
    };
    std::vector<Factor> factors;
    auto merge = [&](NodeId base, const BigRat& re, NodeId se) {
      for (auto& f : factors)
        if (f.base == base) {
          f.rexp += re;
          if (se != kNoNode) f.sexp.push_back(se);
          return;
        }
      Factor f;
      f.base = base;
      f.rexp = re;
      if (se != kNoNode) f.sexp.push_back(se);
      factors.push_back(std::move(f));
    };
    for (auto& k : flat) {
      if (auto r = as_rational(k)) {
        racc *= *r;
        continue;
      }
      if (k.kind() == Kind::Pow) {
        Expr b = k.kid(0), e = k.kid(1);
        if (auto re = as_rational(e))
          merge(b.id, *re, kNoNode);
        else
          merge(b.id, BigRat(0), e.id);
      } else {
        merge(k.id, BigRat(1), kNoNode);
      }
    }
    if (racc == 0) return integer(0l);
    std::vector<Expr> out;
    for (auto& f : factors) {
      Expr base(this, f.base);
      Expr factor;
      if (f.sexp.empty()) {
        if (f.rexp == 0) continue;
        if (f.rexp == 1) {
          out.push_back(base);
          continue;
        }
        factor = pow(base, rational(f.rexp));
      } else {
        std::vector<Expr> eparts;
        for (NodeId s : f.sexp) eparts.emplace_back(this, s);
        if (f.rexp != 0) eparts.push_back(rational(f.rexp));
        factor = pow(base, add(std::move(eparts)));
      }
      if (auto fr = as_rational(factor)) {
        racc *= *fr;
        continue;
      }
      out.push_back(factor);
    }
    // emit the rational coefficient as canonical Integer/Pow children
    if (racc != 1) {
      BigInt num = rat_num(racc), den = rat_den(racc);
      if (den != 1) out.push_back(intern_pow(integer(den), integer(-1l)));
      if (num != 1 || out.empty()) out.push_back(integer(num));
    }
    if (out.empty()) return integer(1l);
    if (out.size() == 1) return out[0];
    sort_canonical(out);
    Node n;
    n.kind = Kind::Mul;
    for (auto& e : out) n.kids.push_back(e.id);
    return Expr(this, intern(std::move(n)));
  }

  Expr pow(Expr b, Expr e) {
    check(b);
    check(e);
    if (e.is_integer()) {
      const BigInt& n = e.ivalue();
      if (n == 0) return integer(1l);
      if (n == 1) return b;
      bool small = n >= -256 && n <= 256;
      long ln = small ? static_cast<long>(n) : 0;
      if (auto br = as_rational(b)) {
        if (*br == 0) {
          if (n > 0) return integer(0l);
          return intern_pow(b, e);  // 0^negative: domain error at eval time
        }
        if (small) return rational(rpow(*br, ln));
        return intern_pow(b, e);
      }
      if (b.kind() == Kind::Pow) {
        Expr ib = b.kid(0), ie = b.kid(1);
        if (as_rational(ie)) return pow(ib, mul({ie, e}));
      }
      if (b.kind() == Kind::Mul) {
        std::vector<Expr> parts;
        for (NodeId k : b.kid_ids()) parts.push_back(pow(Expr(this, k), e));
        return mul(std::move(parts));
      }
    } else if (auto br = as_rational(b)) {
      if (*br == 1) return integer(1l);
    }
    return intern_pow(b, e);
  }
  Expr pow(Expr b, long e) { return pow(b, integer(e)); }

  Expr neg(Expr a) { return mul({integer(-1l), a}); }
  Expr sub(Expr a, Expr b) { return add({a, neg(b)}); }
  Expr div(Expr a, Expr b) { return mul({a, pow(b, -1l)}); }

  // Exact-shape interning that bypasses canonicalization. Used where the
  // children are known to already be in final form (constant normalization).
  Expr raw(Kind k, std::vector<NodeId> kids, FuncSym f = FuncSym::Sin) {
    Node n;
    n.kind = k;
    n.func = f;
    n.kids = std::move(kids);
    return Expr(this, intern(std::move(n)));
  }

  // Recognize Integer | Pow(d,-1) | Mul(Integer, Pow(d,-1)).
  std::optional<BigRat> as_rational(Expr e) const {
    const Node& n = e.node();
    switch (n.kind) {
      case Kind::Integer:
        return BigRat(n.ival);
      case Kind::Pow: {
        const Node& b = arena_[n.kids[0]];
        const Node& x = arena_[n.kids[1]];
        if (b.kind == Kind::Integer && b.ival != 0 && x.kind == Kind::Integer && x.ival == -1)
          return make_rat(BigInt(1), b.ival);
        return std::nullopt;
      }
      case Kind::Mul: {
        if (n.kids.size() != 2) return std::nullopt;
        const Node& a = arena_[n.kids[0]];
        if (a.kind != Kind::Integer) return std::nullopt;
        auto inv = as_rational(Expr(const_cast<ExprStore*>(this), n.kids[1]));
        if (!inv || rat_num(*inv) != 1 || rat_den(*inv) == 1) return std::nullopt;
        return BigRat(a.ival) * *inv;
      }
      default:
        return std::nullopt;
    }
  }
  bool is_rational_const(Expr e) const { return as_rational(e).has_value(); }

  // e == coeff * core with core free of any rational constant factor.
  std::pair<BigRat, Expr> split_const_factor(Expr e) {
    if (auto r = as_rational(e)) return {*r, integer(1l)};
    if (e.kind() != Kind::Mul) return {BigRat(1), e};
    BigRat c = 1;
    std::vector<NodeId> rest;
    for (NodeId k : e.kid_ids()) {
      Expr ke(this, k);
      if (auto r = as_rational(ke))
        c *= *r;
      else
        rest.push_back(k);
    }
    if (rest.empty()) return {c, integer(1l)};
    if (rest.size() == 1) return {c, Expr(this, rest[0])};
    if (c == 1) return {c, e};
    Node n;
    n.kind = Kind::Mul;
    n.kids = std::move(rest);  // still sorted: removal keeps order
    return {c, Expr(this, intern(std::move(n)))};
  }

  // canonical total order: Integer < ConstSym < Variable < Func < Pow < Mul < Add
  int cmp(NodeId a, NodeId b) const {
    if (a == b) return 0;
    const Node& x = arena_[a];
    const Node& y = arena_[b];
    int rx = rank(x.kind), ry = rank(y.kind);
    if (rx != ry) return rx < ry ? -1 : 1;
    switch (x.kind) {
      case Kind::Integer:
        return x.ival < y.ival ? -1 : (x.ival == y.ival ? 0 : 1);
      case Kind::ConstSym:
        return x.clevel < y.clevel ? -1 : (x.clevel == y.clevel ? 0 : 1);
      case Kind::Variable:
        return x.var < y.var ? -1 : (x.var == y.var ? 0 : 1);
      case Kind::Func: {
        if (x.func != y.func) return x.func < y.func ? -1 : 1;
        return cmp(x.kids[0], y.kids[0]);
      }
      default: {
        size_t n = std::min(x.kids.size(), y.kids.size());
        for (size_t i = 0; i < n; ++i) {
          int c = cmp(x.kids[i], y.kids[i]);
          if (c != 0) return c;
        }
        if (x.kids.size() != y.kids.size()) return x.kids.size() < y.kids.size() ? -1 : 1;
        return 0;
      }
    }
  }

 private:
  static int rank(Kind k) {
    switch (k) {
      case Kind::Integer: return 0;
      case Kind::ConstSym: return 1;
      case Kind::Variable: return 2;
      case Kind::Func: return 3;
      case Kind::Pow: return 4;
      case Kind::Mul: return 5;
      case Kind::Add: return 6;
    }
    return 7;
  }

  void check(const Expr& e) const {
    if (e.store != this) throw std::logic_error("expression from a different store");
  }

  Expr intern_pow(Expr b, Expr e) {
    Node n;
    n.kind = Kind::Pow;
    n.kids = {b.id, e.id};
    return Expr(this, intern(std::move(n)));
  }

  void sort_canonical(std::vector<Expr>& v) const {
    std::sort(v.begin(), v.end(), [this](const Expr& a, const Expr& b) { return cmp(a.id, b.id) < 0; });
  }

  NodeId intern(Node&& n) {
    std::string key = make_key(n);
    auto it = map_.find(key);
    if (it != map_.end()) return it->second;
    NodeId id = static_cast<NodeId>(arena_.size());
    arena_.push_back(std::move(n));
    map_.emplace(std::move(key), id);
    return id;
  }

  static std::string make_key(const Node& n) {
    std::string k;
    switch (n.kind) {
      case Kind::Integer:
        k = "I";
        k += n.ival.str();
        return k;
      case Kind::ConstSym:
        k = "C";
        k += static_cast<char>('0' + n.clevel);
        return k;
      case Kind::Variable:
        k = "V";
        k += n.var;
        return k;
      case Kind::Func:
        k = "F";
        k += static_cast<char>('a' + static_cast<int>(n.func));
        break;
      case Kind::Pow:
        k = "P";
        break;
      case Kind::Mul:
        k = "M";
        break;
      case Kind::Add:
        k = "A";
        break;
    }
    for (NodeId c : n.kids) {
      k += ':';
      k += std::to_string(c);
    }
    return k;
  }

  // deque: interning must not invalidate references held across builder calls
  std::deque<Node> arena_;
  std::unordered_map<std::string, NodeId> map_;
};

inline const Node& Expr::node() const { return store->node(id); }

// ---- structural utilities ----

inline bool free_of(Expr e, const std::string& var) {
  std::unordered_map<NodeId, bool> memo;
  auto rec = [&](auto&& self, NodeId id) -> bool {
    auto it = memo.find(id);
    if (it != memo.end()) return it->second;
    const Node& n = e.store->node(id);
    bool r = true;
    if (n.kind == Kind::Variable)
      r = n.var != var;
    else
      for (NodeId k : n.kids)
        if (!self(self, k)) {
          r = false;
          break;
        }
    memo[id] = r;
    return r;
  };
  return rec(rec, e.id);
}

inline bool contains_any_variable(Expr e) {
  std::unordered_set<NodeId> seen;
  auto rec = [&](auto&& self, NodeId id) -> bool {
    if (!seen.insert(id).second) return false;
    const Node& n = e.store->node(id);
    if (n.kind == Kind::Variable) return true;
    for (NodeId k : n.kids)
      if (self(self, k)) return true;
    return false;
  };
  return rec(rec, e.id);
}

// distinct reachable nodes, shared subexpressions counted once
inline int dag_size(Expr e) {
  std::unordered_set<NodeId> seen;
  std::vector<NodeId> stack{e.id};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (!seen.insert(id).second) continue;
    for (NodeId k : e.store->node(id).kids) stack.push_back(k);
  }
  return static_cast<int>(seen.size());
}

// node count of the tree unfolding (sharing expanded); saturates at 2^62
inline uint64_t tree_size(Expr e) {
  std::unordered_map<NodeId, uint64_t> memo;
  constexpr uint64_t cap = 1ull << 62;
  auto rec = [&](auto&& self, NodeId id) -> uint64_t {
    auto it = memo.find(id);
    if (it != memo.end()) return it->second;
    const Node& n = e.store->node(id);
    uint64_t total = 1;
    for (NodeId k : n.kids) {
      total += self(self, k);
      if (total > cap) total = cap;
    }
    memo[id] = total;
    return total;
  };
  return rec(rec, e.id);
}

namespace detail {
template <typename Fn>
Expr rebuild(Expr e, Fn&& leaf_fn) {
  // leaf_fn(Expr node) -> optional<Expr>: replacement for this node, or
  // nullopt to rebuild from children. Applied top-down, memoized over the DAG.
  ExprStore& st = *e.store;
  std::unordered_map<NodeId, NodeId> memo;
  auto rec = [&](auto&& self, NodeId id) -> NodeId {
    auto it = memo.find(id);
    if (it != memo.end()) return it->second;
    Expr cur(&st, id);
    NodeId result;
    if (auto rep = leaf_fn(cur)) {
      result = rep->id;
    } else {
      const Node& n = st.node(id);
      std::vector<Expr> kids;
      kids.reserve(n.kids.size());
      bool changed = false;
      for (NodeId k : n.kids) {
        NodeId nk = self(self, k);
        changed |= nk != k;
        kids.emplace_back(&st, nk);
      }
      if (!changed) {
        result = id;
      } else {
        switch (n.kind) {
          case Kind::Add: result = st.add(kids).id; break;
          case Kind::Mul: result = st.mul(kids).id; break;
          case Kind::Pow: result = st.pow(kids[0], kids[1]).id; break;
          case Kind::Func: result = st.func(n.func, kids[0]).id; break;
          default: result = id; break;
        }
      }
    }
    memo[id] = result;
    return result;
  };
  return Expr(&st, rec(rec, e.id));
}
}  // namespace detail

inline Expr substitute(Expr e, const std::string& var, Expr replacement) {
  return detail::rebuild(e, [&](Expr n) -> std::optional<Expr> {
    if (n.kind() == Kind::Variable && n.node().var == var) return replacement;
    return std::nullopt;
  });
}

// replace every occurrence of `target` (as a whole subexpression) by `repl`
inline Expr replace_all(Expr e, Expr target, Expr repl) {
  return detail::rebuild(e, [&](Expr n) -> std::optional<Expr> {
    if (n.id == target.id) return repl;
    return std::nullopt;
  });
}

// collect distinct subexpression ids in post-order
inline std::vector<NodeId> subexpressions(Expr e) {
  std::vector<NodeId> order;
  std::unordered_set<NodeId> seen;
  auto rec = [&](auto&& self, NodeId id) -> void {
    if (!seen.insert(id).second) return;
    for (NodeId k : e.store->node(id).kids) self(self, k);
    order.push_back(id);
  };
  rec(rec, e.id);
  return order;
}

// ---- numeric evaluation ----

class Evaluator {
 public:
  explicit Evaluator(const std::unordered_map<std::string, double>& bindings)
      : bindings_(bindings) {}

  double eval(Expr e) {
    memo_.clear();
    return rec(e.store, e.id);
  }

 private:
  double rec(ExprStore* st, NodeId id) {
    auto it = memo_.find(id);
    if (it != memo_.end()) return it->second;
    const Node& n = st->node(id);
    double v = 0;
    switch (n.kind) {
      case Kind::Integer: {
        v = n.ival.convert_to<double>();
        break;
      }
      case Kind::ConstSym:
        throw eval_error(eval_error::Code::Domain, id,
                         "CONST placeholder has no numeric value");
      case Kind::Variable: {
        auto b = bindings_.find(n.var);
        if (b == bindings_.end())
          throw eval_error(eval_error::Code::UnboundVariable, id, "unbound variable " + n.var);
        v = b->second;
        break;
      }
      case Kind::Add: {
        for (NodeId k : n.kids) v += rec(st, k);
        break;
      }
      case Kind::Mul: {
        v = 1;
        for (NodeId k : n.kids) v *= rec(st, k);
        break;
      }
      case Kind::Pow: {
        double b = rec(st, n.kids[0]);
        double e = rec(st, n.kids[1]);
        if (b == 0 && e < 0)
          throw eval_error(eval_error::Code::Domain, id, "division by zero");
        if (b < 0 && e != std::floor(e))
          throw eval_error(eval_error::Code::Domain, id, "negative base with fractional exponent");
        v = std::pow(b, e);
        break;
      }
      case Kind::Func: {
        double a = rec(st, n.kids[0]);
        switch (n.func) {
          case FuncSym::Sin: v = std::sin(a); break;
          case FuncSym::Cos: v = std::cos(a); break;
          case FuncSym::Tan: v = std::tan(a); break;
          case FuncSym::Exp: v = std::exp(a); break;
          case FuncSym::Ln:
            if (a <= 0) throw eval_error(eval_error::Code::Domain, id, "ln of non-positive value");
            v = std::log(a);
            break;
          case FuncSym::Sqrt:
            if (a < 0) throw eval_error(eval_error::Code::Domain, id, "sqrt of negative value");
            v = std::sqrt(a);
            break;
          case FuncSym::Arctan: v = std::atan(a); break;
          case FuncSym::Arcsin:
            if (a < -1 || a > 1)
              throw eval_error(eval_error::Code::Domain, id, "arcsin argument outside [-1, 1]");
            v = std::asin(a);
            break;
        }
        break;
      }
    }
    if (!std::isfinite(v))
      throw eval_error(eval_error::Code::Overflow, id, "non-finite intermediate value");
    memo_[id] = v;
    return v;
  }

  const std::unordered_map<std::string, double>& bindings_;
  std::unordered_map<NodeId, double> memo_;
};

inline double eval_numeric(Expr e, const std::unordered_map<std::string, double>& bindings) {
  Evaluator ev(bindings);
  return ev.eval(e);
}
inline double eval_numeric(Expr e, const std::string& var, double x) {
  std::unordered_map<std::string, double> b{{var, x}};
  return eval_numeric(e, b);
}

// ---- infix printing ----

namespace detail {

inline bool is_plain_atom(const Node& n) {
  switch (n.kind) {
    case Kind::Integer: return n.ival >= 0;
    case Kind::ConstSym:
    case Kind::Variable:
    case Kind::Func:
      return true;
    default:
      return false;
  }
}

inline void print_rec(ExprStore* st, NodeId id, int parent_prec, std::string& out) {
  const Node& n = st->node(id);
  switch (n.kind) {
    case Kind::Integer: {
      if (n.ival < 0 && parent_prec > 1) {
        out += '(';
        out += n.ival.str();
        out += ')';
      } else {
        out += n.ival.str();
      }
      return;
    }
    case Kind::ConstSym: {
      out += n.clevel == 1 ? "CONST" : (n.clevel == 2 ? "CONST2" : "CONST3");
      return;
    }
    case Kind::Variable:
      out += n.var;
      return;
    case Kind::Func: {
      out += func_name(n.func);
      out += '(';
      print_rec(st, n.kids[0], 0, out);
      out += ')';
      return;
    }
    case Kind::Pow: {
      const Node& e = st->node(n.kids[1]);
      auto base_str = [&] {
        std::string s;
        const Node& b = st->node(n.kids[0]);
        if (is_plain_atom(b)) {
          print_rec(st, n.kids[0], 0, s);
        } else {
          s += '(';
          print_rec(st, n.kids[0], 0, s);
          s += ')';
        }
        return s;
      };
      const Node& bnode = st->node(n.kids[0]);
      bool zero_base = bnode.kind == Kind::Integer && bnode.ival == 0;
      if (e.kind == Kind::Integer && e.ival < 0 && !zero_base) {
        // reciprocal form reads better than a negative exponent; 0 is kept in
        // exponent form because 1/0^2 would re-fold the denominator first
        std::string piece = "1/" + base_str();
        BigInt ae = -e.ival;
        if (ae != 1) {
          piece += '^';
          piece += ae.str();
        }
        if (2 < parent_prec) {
          out += '(';
          out += piece;
          out += ')';
        } else {
          out += piece;
        }
        return;
      }
      std::string piece = base_str();
      piece += '^';
      bool eplain = (e.kind == Kind::Integer && e.ival > 0) || e.kind == Kind::Variable ||
                    e.kind == Kind::ConstSym || e.kind == Kind::Func;
      if (eplain)
        print_rec(st, n.kids[1], 0, piece);
      else {
        piece += '(';
        print_rec(st, n.kids[1], 0, piece);
        piece += ')';
      }
      if (3 < parent_prec) {
        out += '(';
        out += piece;
        out += ')';
      } else {
        out += piece;
      }
      return;
    }
    case Kind::Mul: {
      // split numerator / denominator on negative integer exponents
      std::vector<NodeId> num;
      std::vector<std::pair<NodeId, BigInt>> den;  // base, positive exponent
      for (NodeId k : n.kids) {
        const Node& kn = st->node(k);
        if (kn.kind == Kind::Pow) {
          const Node& en = st->node(kn.kids[1]);
          const Node& bn = st->node(kn.kids[0]);
          bool zb = bn.kind == Kind::Integer && bn.ival == 0;
          if (en.kind == Kind::Integer && en.ival < 0 && !zb) {
            den.emplace_back(kn.kids[0], -en.ival);
            continue;
          }
        }
        num.push_back(k);
      }
      bool negative = false;
      std::vector<std::string> parts;
      if (!num.empty()) {
        const Node& first = st->node(num[0]);
        if (first.kind == Kind::Integer && first.ival < 0) {
          negative = true;
          BigInt av = -first.ival;
          num.erase(num.begin());
          if (av != 1 || num.empty()) parts.push_back(av.str());
        }
      }
      for (NodeId k : num) {
        std::string s;
        print_rec(st, k, 2, s);
        parts.push_back(std::move(s));
      }
      if (parts.empty()) parts.push_back("1");
      std::string piece;
      for (size_t i = 0; i < parts.size(); ++i) {
        if (i) piece += '*';
        piece += parts[i];
      }
      for (auto& [base, expo] : den) {
        piece += '/';
        const Node& bn = st->node(base);
        if (is_plain_atom(bn)) {
          print_rec(st, base, 0, piece);
        } else {
          piece += '(';
          print_rec(st, base, 0, piece);
          piece += ')';
        }
        if (expo != 1) {
          piece += '^';
          piece += expo.str();
        }
      }
      std::string full = negative ? "-" + piece : piece;
      int myprec = negative ? 1 : 2;
      if (myprec < parent_prec) {
        out += '(';
        out += full;
        out += ')';
      } else {
        out += full;
      }
      return;
    }
    case Kind::Add: {
      std::string piece;
      bool first = true;
      for (NodeId k : n.kids) {
        std::string term;
        print_rec(st, k, 1, term);
        if (first) {
          piece += term;
          first = false;
        } else if (!term.empty() && term[0] == '-') {
          piece += " - ";
          piece += term.substr(1);
        } else {
          piece += " + ";
          piece += term;
        }
      }
      if (1 < parent_prec) {
        out += '(';
        out += piece;
        out += ')';
      } else {
        out += piece;
      }
      return;
    }
  }
}

}  // namespace detail

inline std::string print_infix(Expr e) {
  std::string out;
  detail::print_rec(e.store, e.id, 0, out);
  return out;
}

// ---- infix parsing ----

namespace detail {

struct Token {
  enum class Type { Integer, Ident, Op, LParen, RParen, End };
  Type type;
  std::string text;
  size_t pos;
};

class Lexer {
 public:
  explicit Lexer(const std::string& s) : s_(s) { advance(); }
  const Token& peek() const { return cur_; }
  Token next() {
    Token t = cur_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    cur_.pos = i_;
    if (i_ >= s_.size()) {
      cur_.type = Token::Type::End;
      cur_.text.clear();
      return;
    }
    char c = s_[i_];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t j = i_;
      while (j < s_.size() && std::isdigit(static_cast<unsigned char>(s_[j]))) ++j;
      cur_.type = Token::Type::Integer;
      cur_.text = s_.substr(i_, j - i_);
      i_ = j;
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t j = i_;
      while (j < s_.size() && std::isalnum(static_cast<unsigned char>(s_[j]))) ++j;
      cur_.type = Token::Type::Ident;
      cur_.text = s_.substr(i_, j - i_);
      i_ = j;
      return;
    }
    if (c == '(') {
      cur_.type = Token::Type::LParen;
      cur_.text = "(";
      ++i_;
      return;
    }
    if (c == ')') {
      cur_.type = Token::Type::RParen;
      cur_.text = ")";
      ++i_;
      return;
    }
    if (c == '+' || c == '-' || c == '*' || c == '/' || c == '^') {
      cur_.type = Token::Type::Op;
      cur_.text = std::string(1, c);
      ++i_;
      return;
    }
    throw parse_error(i_, std::string("unexpected character '") + c + "'");
  }

  const std::string& s_;
  size_t i_ = 0;
  Token cur_;
};

class InfixParser {
 public:
  InfixParser(const std::string& s, ExprStore& st) : lex_(s), st_(st) {}

  Expr parse() {
    Expr e = parse_add();
    if (lex_.peek().type != Token::Type::End)
      throw parse_error(lex_.peek().pos, "trailing input '" + lex_.peek().text + "'");
    return e;
  }

 private:
  Expr parse_add() {
    Expr e = parse_mul();
    for (;;) {
      const Token& t = lex_.peek();
      if (t.type == Token::Type::Op && (t.text == "+" || t.text == "-")) {
        bool minus = t.text == "-";
        lex_.next();
        Expr rhs = parse_mul();
        e = minus ? st_.sub(e, rhs) : st_.add({e, rhs});
      } else {
        return e;
      }
    }
  }

  Expr parse_mul() {
    Expr e = parse_unary();
    for (;;) {
      const Token& t = lex_.peek();
      if (t.type == Token::Type::Op && (t.text == "*" || t.text == "/")) {
        bool div = t.text == "/";
        lex_.next();
        Expr rhs = parse_unary();
        e = div ? st_.div(e, rhs) : st_.mul({e, rhs});
      } else {
        return e;
      }
    }
  }

  Expr parse_unary() {
    const Token& t = lex_.peek();
    if (t.type == Token::Type::Op && t.text == "-") {
      lex_.next();
      return st_.neg(parse_unary());
    }
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    const Token& t = lex_.peek();
    if (t.type == Token::Type::Op && t.text == "^") {
      lex_.next();
      Expr e = parse_unary();  // right-associative; allows x^-2
      return st_.pow(base, e);
    }
    return base;
  }

  Expr parse_atom() {
    Token t = lex_.next();
    switch (t.type) {
      case Token::Type::Integer:
        return st_.integer(BigInt(t.text));
      case Token::Type::Ident: {
        if (t.text == "CONST") return st_.constsym(1);
        if (t.text == "CONST2") return st_.constsym(2);
        if (t.text == "CONST3") return st_.constsym(3);
        if (lex_.peek().type == Token::Type::LParen) {
          auto f = func_by_name(t.text);
          if (!f) throw parse_error(t.pos, "unknown function '" + t.text + "'");
          lex_.next();
          Expr arg = parse_add();
          expect_rparen();
          return st_.func(*f, arg);
        }
        if (func_by_name(t.text))
          throw parse_error(t.pos, "function '" + t.text + "' requires an argument list");
        return st_.variable(t.text);
      }
      case Token::Type::LParen: {
        Expr e = parse_add();
        expect_rparen();
        return e;
      }
      default:
        throw parse_error(t.pos, "expected expression, got '" + t.text + "'");
    }
  }

  void expect_rparen() {
    Token t = lex_.next();
    if (t.type != Token::Type::RParen) throw parse_error(t.pos, "expected ')'");
  }

  Lexer lex_;
  ExprStore& st_;
};

}  // namespace detail

inline Expr parse(const std::string& text, ExprStore& store) {
  detail::InfixParser p(text, store);
  return p.parse();
}

// ---- prefix serialization ----
// Whitespace-separated tokens; Add/Mul carry an explicit arity token:
//   Mul 2 x Sin x        == x*sin(x)
//   Add 3 a b c          == a+b+c
//   Pow x -1             == 1/x

inline void serialize_prefix_rec(ExprStore* st, NodeId id, std::string& out) {
  const Node& n = st->node(id);
  auto emit = [&](const std::string& tok) {
    if (!out.empty()) out += ' ';
    out += tok;
  };
  switch (n.kind) {
    case Kind::Integer:
      emit(n.ival.str());
      return;
    case Kind::ConstSym:
      emit(n.clevel == 1 ? "CONST" : (n.clevel == 2 ? "CONST2" : "CONST3"));
      return;
    case Kind::Variable:
      emit(n.var);
      return;
    case Kind::Func:
      emit(func_token(n.func));
      serialize_prefix_rec(st, n.kids[0], out);
      return;
    case Kind::Pow:
      emit("Pow");
      serialize_prefix_rec(st, n.kids[0], out);
      serialize_prefix_rec(st, n.kids[1], out);
      return;
    case Kind::Mul:
    case Kind::Add:
      emit(n.kind == Kind::Mul ? "Mul" : "Add");
      emit(std::to_string(n.kids.size()));
      for (NodeId k : n.kids) serialize_prefix_rec(st, k, out);
      return;
  }
}

inline std::string serialize_prefix(Expr e) {
  std::string out;
  serialize_prefix_rec(e.store, e.id, out);
  return out;
}

namespace detail {
class PrefixParser {
 public:
  PrefixParser(std::vector<std::string> toks, ExprStore& st) : toks_(std::move(toks)), st_(st) {}
  Expr parse() {
    Expr e = rec();
    if (i_ != toks_.size()) throw parse_error(i_, "trailing prefix tokens");
    return e;
  }

 private:
  const std::string& next() {
    if (i_ >= toks_.size()) throw parse_error(i_, "unexpected end of prefix input");
    return toks_[i_++];
  }
  Expr rec() {
    const std::string& t = next();
    if (t == "Add" || t == "Mul") {
      size_t n = std::stoul(next());
      if (n < 2) throw parse_error(i_, "n-ary head with arity < 2");
      std::vector<Expr> kids;
      kids.reserve(n);
      for (size_t k = 0; k < n; ++k) kids.push_back(rec());
      return t == "Add" ? st_.add(std::move(kids)) : st_.mul(std::move(kids));
    }
    if (t == "Pow") {
      Expr b = rec();
      Expr e = rec();
      return st_.pow(b, e);
    }
    if (auto f = func_by_token(t)) return st_.func(*f, rec());
    if (t == "CONST") return st_.constsym(1);
    if (t == "CONST2") return st_.constsym(2);
    if (t == "CONST3") return st_.constsym(3);
    if (t[0] == '-' || std::isdigit(static_cast<unsigned char>(t[0]))) return st_.integer(BigInt(t));
    return st_.variable(t);
  }

  std::vector<std::string> toks_;
  size_t i_ = 0;
  ExprStore& st_;
};
}  // namespace detail

inline Expr parse_prefix(const std::string& text, ExprStore& store) {
  detail::PrefixParser p(split_ws(text), store);
  return p.parse();
}

}  // namespace intsel
