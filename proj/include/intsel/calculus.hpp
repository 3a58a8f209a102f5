#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "intsel/expr.hpp"
#include "intsel/poly.hpp"

namespace intsel {

// ---- differentiation ----

namespace detail {
class Differentiator {
 public:
  Differentiator(ExprStore& st, const std::string& var) : st_(st), var_(var) {}

  Expr run(Expr e) { return Expr(&st_, rec(e.id)); }

 private:
  NodeId rec(NodeId id) {
    auto it = memo_.find(id);
    if (it != memo_.end()) return it->second;
    const Node& n = st_.node(id);
    Expr self(&st_, id);
    Expr d;
    switch (n.kind) {
      case Kind::Integer:
      case Kind::ConstSym:
        d = st_.integer(0l);
        break;
      case Kind::Variable:
        d = st_.integer(n.var == var_ ? 1l : 0l);
        break;
      case Kind::Add: {
        std::vector<Expr> parts;
        for (NodeId k : n.kids) parts.emplace_back(&st_, rec(k));
        d = st_.add(std::move(parts));
        break;
      }
      case Kind::Mul: {
        // n-ary product rule
        std::vector<Expr> terms;
        for (size_t i = 0; i < n.kids.size(); ++i) {
          std::vector<Expr> factors;
          factors.emplace_back(&st_, rec(n.kids[i]));
          for (size_t j = 0; j < n.kids.size(); ++j)
            if (j != i) factors.emplace_back(&st_, n.kids[j]);
          terms.push_back(st_.mul(std::move(factors)));
        }
        d = st_.add(std::move(terms));
        break;
      }
      case Kind::Pow: {
        Expr base(&st_, n.kids[0]);
        Expr expo(&st_, n.kids[1]);
        Expr db(&st_, rec(n.kids[0]));
        if (st_.as_rational(expo)) {
          // e * b^(e-1) * b'
          Expr em1 = st_.sub(expo, st_.integer(1l));
          d = st_.mul({expo, st_.pow(base, em1), db});
        } else {
          // b^e * (e' ln b + e b'/b)
          Expr de(&st_, rec(n.kids[1]));
          Expr t1 = st_.mul({de, st_.func(FuncSym::Ln, base)});
          Expr t2 = st_.mul({expo, db, st_.pow(base, -1l)});
          d = st_.mul({self, st_.add({t1, t2})});
        }
        break;
      }
      case Kind::Func: {
        Expr a(&st_, n.kids[0]);
        Expr da(&st_, rec(n.kids[0]));
        Expr outer;
        switch (n.func) {
          case FuncSym::Sin:
            outer = st_.func(FuncSym::Cos, a);
            break;
          case FuncSym::Cos:
            outer = st_.neg(st_.func(FuncSym::Sin, a));
            break;
          case FuncSym::Tan:
            outer = st_.add({st_.integer(1l), st_.pow(st_.func(FuncSym::Tan, a), 2l)});
            break;
          case FuncSym::Exp:
            outer = self;
            break;
          case FuncSym::Ln:
            outer = st_.pow(a, -1l);
            break;
          case FuncSym::Sqrt:
            outer = st_.mul({st_.rational(BigRat(1, 2)), st_.pow(self, -1l)});
            break;
          case FuncSym::Arctan:
            outer = st_.pow(st_.add({st_.integer(1l), st_.pow(a, 2l)}), -1l);
            break;
          case FuncSym::Arcsin:
            outer = st_.pow(
                st_.func(FuncSym::Sqrt, st_.sub(st_.integer(1l), st_.pow(a, 2l))), -1l);
            break;
        }
        d = st_.mul({outer, da});
        break;
      }
    }
    memo_[id] = d.id;
    return d.id;
  }

  ExprStore& st_;
  const std::string& var_;
  std::unordered_map<NodeId, NodeId> memo_;
};
}  // namespace detail

inline Expr differentiate(Expr e, const std::string& var) {
  detail::Differentiator d(*e.store, var);
  return d.run(e);
}

// ---- verification oracle ----

enum class VerifyResult { Pass, Fail, InconclusiveDomain };

// checks d(antiderivative)/dx == integrand numerically at `trials` points
// drawn uniformly from (-3, 3); points raising domain errors are redrawn up
// to 10x trials times
inline VerifyResult verify_pair(Expr integrand, Expr antiderivative, const std::string& var,
                                int trials = 20) {
  Expr d = differentiate(antiderivative, var);
  Rng rng(0x76657269667921ull);
  int valid = 0;
  int draws = 0;
  const int max_draws = 10 * trials;
  while (valid < trials && draws < max_draws) {
    ++draws;
    double x = rng.uniform(-3.0, 3.0);
    double fv, dv;
    try {
      fv = eval_numeric(integrand, var, x);
      dv = eval_numeric(d, var, x);
    } catch (const eval_error&) {
      continue;
    }
    double scale = std::abs(fv) > 1.0 ? std::abs(fv) : 1.0;
    if (std::abs(dv - fv) > 1e-6 * scale) return VerifyResult::Fail;
    ++valid;
  }
  if (valid == 0) return VerifyResult::InconclusiveDomain;
  return VerifyResult::Pass;
}

// ---- integration portfolio ----

enum class SubAlgorithmId : int {
  RuleTable = 0,
  DerivDivides = 1,
  Parts = 2,
  PartialFractions = 3,
  Hermite = 4,
};
inline constexpr int kAlgCount = 5;
inline constexpr std::array<SubAlgorithmId, 5> kAllAlgs = {
    SubAlgorithmId::RuleTable, SubAlgorithmId::DerivDivides, SubAlgorithmId::Parts,
    SubAlgorithmId::PartialFractions, SubAlgorithmId::Hermite};

inline const char* alg_name(SubAlgorithmId a) {
  static const char* names[] = {"RuleTable", "DerivDivides", "Parts", "PartialFractions",
                                "Hermite"};
  return names[static_cast<int>(a)];
}
inline std::optional<SubAlgorithmId> alg_by_name(const std::string& s) {
  for (int i = 0; i < kAlgCount; ++i)
    if (s == alg_name(static_cast<SubAlgorithmId>(i))) return static_cast<SubAlgorithmId>(i);
  return std::nullopt;
}

enum class IntStatus { Success, Failure, BudgetExceeded };

struct IntegrationOutcome {
  IntStatus status = IntStatus::Failure;
  std::optional<Expr> output;  // present iff Success
  int size = 0;                // dag_size(output) iff Success
  int steps_used = 0;
};

inline constexpr int kDefaultBudget = 10000;

namespace detail {

class Budget {
 public:
  explicit Budget(int total) : left_(total), total_(total) {}
  void spend(int n = 1) {
    left_ -= n;
    if (left_ < 0) throw budget_exhausted{};
  }
  int used() const { return total_ - (left_ < 0 ? 0 : left_); }

 private:
  int left_;
  int total_;
};

// u == a*x + b with rational a != 0, b
struct LinearForm {
  BigRat a, b;
};

inline std::optional<LinearForm> match_linear(Expr u, const std::string& var) {
  ExprStore& st = *u.store;
  if (u.is_variable() && u.node().var == var) return LinearForm{BigRat(1), BigRat(0)};
  if (u.kind() == Kind::Mul) {
    auto [c, core] = st.split_const_factor(u);
    if (core.is_variable() && core.node().var == var && c != 0) return LinearForm{c, BigRat(0)};
    return std::nullopt;
  }
  if (u.kind() == Kind::Add) {
    BigRat a = 0, b = 0;
    for (size_t i = 0; i < u.arity(); ++i) {
      Expr k = u.kid(i);
      if (auto r = st.as_rational(k)) {
        b += *r;
        continue;
      }
      auto [c, core] = st.split_const_factor(k);
      if (core.is_variable() && core.node().var == var)
        a += c;
      else
        return std::nullopt;
    }
    if (a == 0) return std::nullopt;
    return LinearForm{a, b};
  }
  return std::nullopt;
}

// ---- rule table ----
// Fixed antiderivative patterns over a linear inner argument u = a*x + b.
// Most specific shapes first so that composite matches win over the power
// rule. Each entry returns the exact antiderivative already divided by a.

class RuleTable {
 public:
  RuleTable(ExprStore& st, const std::string& var) : st_(st), var_(var) {}

  std::optional<Expr> integrate(Expr core, Budget& budget) {
    budget.spend();
    ExprStore& st = st_;
    // constants
    if (auto r = st.as_rational(core)) return st.mul({st.rational(*r), x()});
    if (core.kind() == Kind::ConstSym) return st.mul({core, x()});

    // two-factor trig products
    if (core.kind() == Kind::Mul && core.arity() == 2) {
      Expr f0 = core.kid(0), f1 = core.kid(1);
      // sin(u)*cos(u) -> sin(u)^2 / (2a)
      if (auto u = same_linear_args(f0, FuncSym::Sin, f1, FuncSym::Cos))
        return st.mul({st.rational(BigRat(1, 2) / u->a),
                       st.pow(st.func(FuncSym::Sin, linexpr(*u)), 2l)});
      // sin(u)/cos(u)^2 -> 1/(a*cos(u))
      if (auto u = func_over_square(core, FuncSym::Sin, FuncSym::Cos))
        return st.mul({st.rational(BigRat(1) / u->a),
                       st.pow(st.func(FuncSym::Cos, linexpr(*u)), -1l)});
      // cos(u)/sin(u)^2 -> -1/(a*sin(u))
      if (auto u = func_over_square(core, FuncSym::Cos, FuncSym::Sin))
        return st.mul({st.rational(BigRat(-1) / u->a),
                       st.pow(st.func(FuncSym::Sin, linexpr(*u)), -1l)});
    }

    // powers
    if (core.kind() == Kind::Pow) {
      Expr base = core.kid(0);
      // c^u for rational c > 0, c != 1 over a linear exponent
      if (auto c = st.as_rational(base)) {
        if (*c > 0 && *c != 1) {
          if (auto u = match_linear(core.kid(1), var_))
            return st.mul({st.rational(BigRat(1) / u->a), core,
                           st.pow(st.func(FuncSym::Ln, st.rational(*c)), -1l)});
        }
      }
      if (core.kid(1).is_integer()) {
        const BigInt& npow = core.kid(1).ivalue();
        if (base.kind() == Kind::Func) {
          if (auto u = match_linear(base.kid(0), var_)) {
            auto r = func_power(base.node().func, *u, npow);
            if (r) return r;
          }
        }
        // 1/(1 + u^2) -> arctan(u)/a ; 1/sqrt(1 - u^2) -> arcsin(u)/a
        if (npow == -1) {
          if (auto u = match_one_plus_square(base))
            return st.mul({st.rational(BigRat(1) / u->a), st.func(FuncSym::Arctan, linexpr(*u))});
          if (base.kind() == Kind::Func && base.node().func == FuncSym::Sqrt) {
            if (auto u = match_one_minus_square(base.kid(0)))
              return st.mul(
                  {st.rational(BigRat(1) / u->a), st.func(FuncSym::Arcsin, linexpr(*u))});
            // 1/sqrt(u) -> 2 sqrt(u)/a
            if (auto u = match_linear(base.kid(0), var_))
              return st.mul({st.rational(BigRat(2) / u->a), st.func(FuncSym::Sqrt, linexpr(*u))});
          }
        }
      }
    }

    // single function applications
    if (core.kind() == Kind::Func) {
      if (auto u = match_linear(core.kid(0), var_)) {
        Expr U = linexpr(*u);
        BigRat ia = BigRat(1) / u->a;
        switch (core.node().func) {
          case FuncSym::Sin:
            return st.mul({st.rational(-ia), st.func(FuncSym::Cos, U)});
          case FuncSym::Cos:
            return st.mul({st.rational(ia), st.func(FuncSym::Sin, U)});
          case FuncSym::Tan:
            return st.mul({st.rational(-ia), st.func(FuncSym::Ln, st.func(FuncSym::Cos, U))});
          case FuncSym::Exp:
            return st.mul({st.rational(ia), core});
          case FuncSym::Ln:
            return st.mul({st.rational(ia), st.sub(st.mul({U, core}), U)});
          case FuncSym::Sqrt:
            return st.mul({st.rational(ia * BigRat(2, 3)), U, core});
          case FuncSym::Arctan: {
            Expr lnterm = st.mul({st.rational(BigRat(1, 2)),
                                  st.func(FuncSym::Ln, st.add({st.integer(1l), st.pow(U, 2l)}))});
            return st.mul({st.rational(ia), st.sub(st.mul({U, core}), lnterm)});
          }
          case FuncSym::Arcsin: {
            Expr root = st.func(FuncSym::Sqrt, st.sub(st.integer(1l), st.pow(U, 2l)));
            return st.mul({st.rational(ia), st.add({st.mul({U, core}), root})});
          }
        }
      }
      return std::nullopt;
    }

    // power rule family on a linear base
    if (core.is_variable() && core.node().var == var_)
      return st.mul({st.rational(BigRat(1, 2)), st.pow(core, 2l)});
    if (core.kind() == Kind::Pow && core.kid(1).is_integer()) {
      if (auto u = match_linear(core.kid(0), var_)) {
        const BigInt& n = core.kid(1).ivalue();
        if (n == -1) {
          // 1/u -> ln(u)/a
          return st.mul({st.rational(BigRat(1) / u->a), st.func(FuncSym::Ln, linexpr(*u))});
        }
        if (n >= -64 && n <= 64) {
          long ln = static_cast<long>(n);
          BigRat coef = BigRat(1) / (u->a * BigRat(ln + 1));
          return st.mul({st.rational(coef), st.pow(linexpr(*u), ln + 1)});
        }
      }
    }
    if (core.kind() == Kind::Add) {
      // linear polynomial shapes that canonicalized into one Add node
      if (auto u = match_linear(core, var_)) {
        // integrate a*x + b directly
        Expr t1 = st.mul({st.rational(u->a / 2), st.pow(x(), 2l)});
        Expr t2 = st.mul({st.rational(u->b), x()});
        return st.add({t1, t2});
      }
    }
    return std::nullopt;
  }

 private:
  Expr x() { return st_.variable(var_); }
  Expr linexpr(const LinearForm& u) {
    return st_.add({st_.mul({st_.rational(u.a), x()}), st_.rational(u.b)});
  }

  std::optional<LinearForm> same_linear_args(Expr f0, FuncSym s0, Expr f1, FuncSym s1) {
    // accept either factor order
    for (int swap = 0; swap < 2; ++swap) {
      Expr a = swap ? f1 : f0;
      Expr b = swap ? f0 : f1;
      if (a.kind() == Kind::Func && a.node().func == s0 && b.kind() == Kind::Func &&
          b.node().func == s1 && a.kid(0).same(b.kid(0))) {
        return match_linear(a.kid(0), var_);
      }
    }
    return std::nullopt;
  }

  std::optional<LinearForm> func_over_square(Expr m, FuncSym top, FuncSym bottom) {
    Expr f0 = m.kid(0), f1 = m.kid(1);
    for (int swap = 0; swap < 2; ++swap) {
      Expr t = swap ? f1 : f0;
      Expr b = swap ? f0 : f1;
      if (t.kind() == Kind::Func && t.node().func == top && b.kind() == Kind::Pow &&
          b.kid(1).is_integer(-2) && b.kid(0).kind() == Kind::Func &&
          b.kid(0).node().func == bottom && t.kid(0).same(b.kid(0).kid(0))) {
        return match_linear(t.kid(0), var_);
      }
    }
    return std::nullopt;
  }

  // Add(1, Pow(u, 2)) with u linear
  std::optional<LinearForm> match_one_plus_square(Expr e) {
    if (e.kind() != Kind::Add || e.arity() != 2) return std::nullopt;
    if (!e.kid(0).is_integer(1)) return std::nullopt;
    Expr sq = e.kid(1);
    if (sq.kind() == Kind::Pow && sq.kid(1).is_integer(2)) return match_linear(sq.kid(0), var_);
    return std::nullopt;
  }

  // Add(1, Mul(-1, Pow(u, 2))) with u linear
  std::optional<LinearForm> match_one_minus_square(Expr e) {
    if (e.kind() != Kind::Add || e.arity() != 2) return std::nullopt;
    if (!e.kid(0).is_integer(1)) return std::nullopt;
    Expr t = e.kid(1);
    if (t.kind() != Kind::Mul) return std::nullopt;
    auto [c, core] = st_.split_const_factor(t);
    if (c != -1) return std::nullopt;
    if (core.kind() == Kind::Pow && core.kid(1).is_integer(2)) return match_linear(core.kid(0), var_);
    return std::nullopt;
  }

  // sin^n, cos^n, tan^2, exp^n, 1/sin^2, 1/cos^2 for integer n
  std::optional<Expr> func_power(FuncSym f, const LinearForm& u, const BigInt& npow) {
    ExprStore& st = st_;
    Expr U = linexpr(u);
    BigRat ia = BigRat(1) / u.a;
    auto fn = [&](FuncSym s) { return st.func(s, U); };
    if (f == FuncSym::Exp && npow >= -64 && npow <= 64 && npow != 0) {
      long n = static_cast<long>(npow);
      // exp(u)^n == exp(n u)
      return st.mul({st.rational(ia / BigRat(n)), st.pow(fn(FuncSym::Exp), n)});
    }
    if (npow == 2) {
      if (f == FuncSym::Sin) {
        // u/2 - sin(u)cos(u)/2
        Expr sc = st.mul({fn(FuncSym::Sin), fn(FuncSym::Cos)});
        return st.mul({st.rational(ia), st.sub(st.mul({st.rational(BigRat(1, 2)), U}),
                                               st.mul({st.rational(BigRat(1, 2)), sc}))});
      }
      if (f == FuncSym::Cos) {
        Expr sc = st.mul({fn(FuncSym::Sin), fn(FuncSym::Cos)});
        return st.mul({st.rational(ia), st.add({st.mul({st.rational(BigRat(1, 2)), U}),
                                                st.mul({st.rational(BigRat(1, 2)), sc})})});
      }
      if (f == FuncSym::Tan) return st.mul({st.rational(ia), st.sub(fn(FuncSym::Tan), U)});
    }
    if (npow == 3) {
      if (f == FuncSym::Sin) {
        // cos^3/3 - cos
        Expr c = fn(FuncSym::Cos);
        return st.mul({st.rational(ia),
                       st.sub(st.mul({st.rational(BigRat(1, 3)), st.pow(c, 3l)}), c)});
      }
      if (f == FuncSym::Cos) {
        Expr s = fn(FuncSym::Sin);
        return st.mul({st.rational(ia),
                       st.sub(s, st.mul({st.rational(BigRat(1, 3)), st.pow(s, 3l)}))});
      }
    }
    if (npow == -2) {
      if (f == FuncSym::Cos) return st.mul({st.rational(ia), fn(FuncSym::Tan)});
      if (f == FuncSym::Sin)
        return st.mul({st.rational(-ia), fn(FuncSym::Cos), st.pow(fn(FuncSym::Sin), -1l)});
    }
    return std::nullopt;
  }

  ExprStore& st_;
  const std::string& var_;
};

// splits the integrand over Add terms and pulls rational constant factors,
// then runs `core_fn` on each stripped term; fails if any term fails
template <typename Fn>
std::optional<Expr> linear_split(Expr e, ExprStore& st, Fn&& core_fn) {
  std::vector<Expr> terms;
  if (e.kind() == Kind::Add)
    for (size_t i = 0; i < e.arity(); ++i) terms.push_back(e.kid(i));
  else
    terms.push_back(e);
  std::vector<Expr> outs;
  for (Expr t : terms) {
    auto [c, core] = st.split_const_factor(t);
    auto r = core_fn(core);
    if (!r) return std::nullopt;
    outs.push_back(c == 1 ? *r : st.mul({st.rational(c), *r}));
  }
  return st.add(std::move(outs));
}

// ---- derivative-divides ----
// For candidate inner functions g, tests whether integrand / g' collapses to
// an expression in g alone; the survivor is integrated in the substituted
// variable by the rule table (or one recursion of the same scheme).

class DerivDivides {
 public:
  DerivDivides(ExprStore& st, const std::string& var) : st_(st), var_(var) {}

  std::optional<Expr> integrate(Expr core, Budget& budget, int depth = 2) {
    // inner variable name unique per nesting level
    std::string uname = "u_" + std::to_string(depth);
    Expr uvar = st_.variable(uname);
    std::vector<Expr> candidates;
    for (NodeId id : subexpressions(core)) {
      Expr s(&st_, id);
      if (s.id == core.id) continue;
      if (free_of(s, var_)) continue;
      if (s.is_variable()) continue;  // bare x handled by the identity candidate
      candidates.push_back(s);
    }
    std::sort(candidates.begin(), candidates.end(),
              [&](const Expr& a, const Expr& b) { return dag_size(a) > dag_size(b); });
    for (Expr g : candidates) {
      budget.spend();
      Expr dg = differentiate(g, var_);
      if (dg.is_integer(0)) continue;
      Expr q = st_.div(core, dg);
      Expr fu = replace_all(q, g, uvar);
      if (!free_of(fu, var_)) continue;
      if (fu.same(q) && !q.same(uvar)) continue;  // g absent from the quotient
      auto inner = inner_integrate(fu, uname, budget, depth);
      if (inner) return substitute(*inner, uname, g);
    }
    // identity candidate: u = x, reduces to a plain table lookup
    budget.spend();
    Expr fu = substitute(core, var_, uvar);
    auto inner = table_only(fu, uname, budget);
    if (inner) return substitute(*inner, uname, st_.variable(var_));
    return std::nullopt;
  }

 private:
  std::optional<Expr> table_only(Expr e, const std::string& v, Budget& budget) {
    RuleTable table(st_, v);
    return linear_split(e, st_,
                        [&](Expr c) -> std::optional<Expr> { return table.integrate(c, budget); });
  }

  std::optional<Expr> inner_integrate(Expr e, const std::string& v, Budget& budget, int depth) {
    if (auto r = table_only(e, v, budget)) return r;
    if (depth > 0) {
      DerivDivides inner(st_, v);
      return linear_split(e, st_, [&](Expr c) -> std::optional<Expr> {
        return inner.integrate(c, budget, depth - 1);
      });
    }
    return std::nullopt;
  }

  ExprStore& st_;
  std::string var_;
};

// ---- integration by parts ----
// Factor ranking follows the usual log / inverse-trig / algebraic / trig /
// exponential preference for choosing u. Repeated application accumulates
// (A, k) with integral(h) = A + k*integral(h0), so cyclic patterns like
// exp*sin solve algebraically at the top.

class PartsIntegrator {
 public:
  PartsIntegrator(ExprStore& st, const std::string& var) : st_(st), var_(var) {}

  std::optional<Expr> integrate(Expr core, Budget& budget, int max_depth = 4) {
    auto res = recurse(core, core, budget, max_depth, true);
    if (!res) return std::nullopt;
    auto [A, k] = *res;
    if (k == 1) return std::nullopt;  // integral cancelled out
    if (k == 0) return A;
    // I = A + k I  =>  I = A / (1 - k)
    return st_.mul({st_.rational(BigRat(1) / (BigRat(1) - k)), A});
  }

 private:
  // returns (A, k) with integral(h) == A + k * integral(h0)
  std::optional<std::pair<Expr, BigRat>> recurse(Expr h, Expr h0, Budget& budget, int depth,
                                                 bool top) {
    budget.spend();
    auto [c, core] = st_.split_const_factor(h);
    if (!top && core.same(h0)) return std::make_pair(st_.integer(0l), c);
    {
      RuleTable table(st_, var_);
      auto direct = linear_split(
          h, st_, [&](Expr t) -> std::optional<Expr> { return table.integrate(t, budget); });
      if (direct) return std::make_pair(*direct, BigRat(0));
    }
    if (depth <= 0) return std::nullopt;
    auto split = choose_split(core);
    if (!split) return std::nullopt;
    auto [u, dv] = *split;
    RuleTable table(st_, var_);
    auto v = table.integrate(dv, budget);
    if (!v) return std::nullopt;
    Expr du = differentiate(u, var_);
    Expr next = st_.mul({*v, du});
    auto sub = recurse(next, h0, budget, depth - 1, false);
    if (!sub) return std::nullopt;
    auto [A1, k1] = *sub;
    // integral(h) = c*(u*v - integral(v*du))
    Expr A = st_.mul({st_.rational(c), st_.sub(st_.mul({u, *v}), A1)});
    return std::make_pair(A, -c * k1);
  }

  static int liate_rank(Expr f) {
    if (f.kind() == Kind::Func) {
      switch (f.node().func) {
        case FuncSym::Ln:
          return 0;
        case FuncSym::Arctan:
        case FuncSym::Arcsin:
          return 1;
        case FuncSym::Sin:
        case FuncSym::Cos:
        case FuncSym::Tan:
          return 3;
        case FuncSym::Exp:
          return 4;
        case FuncSym::Sqrt:
          return 2;
      }
    }
    if (f.kind() == Kind::Pow) {
      Expr b = f.kid(0);
      if (f.kid(1).is_integer() && b.kind() == Kind::Func) {
        switch (b.node().func) {
          case FuncSym::Ln:
            return 0;
          case FuncSym::Arctan:
          case FuncSym::Arcsin:
            return 1;
          case FuncSym::Sin:
          case FuncSym::Cos:
          case FuncSym::Tan:
            return 3;
          case FuncSym::Exp:
            return 4;
          default:
            break;
        }
      }
      if (auto c = f.store->as_rational(b)) {
        (void)c;
        return 4;  // c^x behaves like an exponential
      }
    }
    return 2;  // algebraic
  }

  // u = lowest-ranked factor, dv = product of the rest (or 1)
  std::optional<std::pair<Expr, Expr>> choose_split(Expr core) {
    std::vector<Expr> factors;
    if (core.kind() == Kind::Mul)
      for (size_t i = 0; i < core.arity(); ++i) factors.push_back(core.kid(i));
    else
      factors.push_back(core);
    if (factors.size() == 1 && liate_rank(factors[0]) == 2 &&
        factors[0].kind() != Kind::Func)
      return std::nullopt;  // plain algebraic term: parts has nothing to grab
    int best = -1;
    int best_rank = 99;
    for (size_t i = 0; i < factors.size(); ++i) {
      int r = liate_rank(factors[i]);
      if (r < best_rank) {
        best_rank = r;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) return std::nullopt;
    Expr u = factors[static_cast<size_t>(best)];
    std::vector<Expr> rest;
    for (size_t i = 0; i < factors.size(); ++i)
      if (static_cast<int>(i) != best) rest.push_back(factors[i]);
    Expr dv = rest.empty() ? st_.integer(1l) : st_.mul(std::move(rest));
    return std::make_pair(u, dv);
  }

  ExprStore& st_;
  std::string var_;
};

// ---- rational function integration (partial fractions and Hermite) ----

// antiderivative of a polynomial, term by term
inline Expr integrate_poly(const Poly& p, const std::string& var, ExprStore& st) {
  Poly anti;
  anti.c.assign(p.c.size() + 1, BigRat(0));
  for (size_t i = 0; i < p.c.size(); ++i) anti.c[i + 1] = p.c[i] / BigRat(BigInt(i + 1));
  anti.trim();
  return poly_to_expr(anti, var, st);
}

// integral of 1/(x^2 + p x + q)^k via the standard reduction in the shifted
// variable w = x + p/2 over w^2 + c, c = q - p^2/4 != 0
inline std::optional<Expr> integrate_inverse_quadratic_power(const Poly& quad, int k,
                                                             const std::string& var,
                                                             ExprStore& st, Budget& budget) {
  BigRat p = quad.coeff(1), q = quad.coeff(0);
  BigRat c = q - p * p / 4;
  if (c == 0) return std::nullopt;  // perfect square slipped through
  Expr x = st.variable(var);
  Expr w = st.add({x, st.rational(p / 2)});
  Expr qexpr = poly_to_expr(quad, var, st);
  // base case J1
  Expr J;
  if (c > 0) {
    // 2/sqrt(4c) * arctan(w / sqrt(c)) written with sqrt of the exact rational
    Expr sc = st.func(FuncSym::Sqrt, st.rational(c));
    J = st.mul({st.pow(sc, -1l), st.func(FuncSym::Arctan, st.mul({w, st.pow(sc, -1l)}))});
  } else {
    // (1/(2 sqrt(-c))) ln((w - sqrt(-c))/(w + sqrt(-c)))
    Expr sc = st.func(FuncSym::Sqrt, st.rational(-c));
    Expr ratio = st.div(st.sub(w, sc), st.add({w, sc}));
    J = st.mul({st.rational(BigRat(1, 2)), st.pow(sc, -1l), st.func(FuncSym::Ln, ratio)});
  }
  for (int j = 2; j <= k; ++j) {
    budget.spend();
    // J_j = ( w/(w^2+c)^{j-1} + (2j-3) J_{j-1} ) / (2c(j-1))
    BigRat denom = 2 * c * BigRat(j - 1);
    Expr t1 = st.mul({w, st.pow(qexpr, static_cast<long>(1 - j))});
    Expr t2 = st.mul({st.integer(2l * j - 3l), J});
    J = st.mul({st.rational(BigRat(1) / denom), st.add({t1, t2})});
  }
  return J;
}

// factor a squarefree monic polynomial into rational-root linear pieces and
// remaining quadratics; fails when an unfactorable residual of degree > 2 is
// left behind
struct SquarefreeFactors {
  std::vector<BigRat> roots;  // linear factors x - r
  std::vector<Poly> quads;    // monic irreducible-over-Q quadratics
};
inline std::optional<SquarefreeFactors> factor_squarefree(const Poly& sf) {
  SquarefreeFactors out;
  Poly work = monic(sf);
  auto roots = rational_roots(work);
  if (!roots) return std::nullopt;  // root search over cap
  for (const BigRat& r : *roots) {
    out.roots.push_back(r);
    Poly lin({-r, BigRat(1)});
    work = work / lin;
  }
  while (work.degree() >= 2) {
    if (work.degree() == 2) {
      out.quads.push_back(monic(work));
      work = Poly::constant(BigRat(1));
      break;
    }
    return std::nullopt;  // degree >= 3 residual with no rational roots
  }
  return out;
}

// partial fraction expansion of num/den with den = prod(linear^mult, quad^mult)
// given explicitly; solves the coefficient identity exactly
struct PFTerm {
  Poly factor;   // monic, degree 1 or 2
  int power;     // denominator exponent
  Poly coeff;    // numerator, degree < degree(factor)
};
inline std::optional<std::vector<PFTerm>> partial_fractions(
    const Poly& num, const std::vector<std::pair<Poly, int>>& factors, Budget& budget) {
  int total = 0;
  for (auto& [f, m] : factors) total += f.degree() * m;
  if (total == 0) return std::nullopt;
  budget.spend(total);
  Poly den = Poly::constant(BigRat(1));
  for (auto& [f, m] : factors) den = den * poly_pow(f, static_cast<unsigned>(m));
  // unknowns: for each factor f, power j in 1..m, deg(f) coefficients
  struct Slot {
    size_t factor_idx;
    int power;
    int coeff_idx;
  };
  std::vector<Slot> slots;
  for (size_t fi = 0; fi < factors.size(); ++fi)
    for (int j = 1; j <= factors[fi].second; ++j)
      for (int ci = 0; ci < factors[fi].first.degree(); ++ci) slots.push_back({fi, j, ci});
  size_t n = slots.size();
  // build each unknown's polynomial multiplier: x^ci * den / f^j
  std::vector<std::vector<BigRat>> A(n, std::vector<BigRat>(n, BigRat(0)));
  std::vector<BigRat> b(n, BigRat(0));
  for (size_t s = 0; s < n; ++s) {
    const auto& [fi, j, ci] = slots[s];
    Poly multiplier = den / poly_pow(factors[fi].first, static_cast<unsigned>(j));
    Poly xci;
    xci.c.assign(static_cast<size_t>(ci) + 1, BigRat(0));
    xci.c[static_cast<size_t>(ci)] = 1;
    Poly contrib = multiplier * xci;
    for (int row = 0; row < static_cast<int>(n); ++row) A[static_cast<size_t>(row)][s] = contrib.coeff(row);
  }
  for (int row = 0; row < static_cast<int>(n); ++row) b[static_cast<size_t>(row)] = num.coeff(row);
  auto sol = solve_linear(std::move(A), std::move(b));
  if (!sol) return std::nullopt;
  std::vector<PFTerm> out;
  size_t s = 0;
  for (size_t fi = 0; fi < factors.size(); ++fi) {
    for (int j = 1; j <= factors[fi].second; ++j) {
      Poly coeff;
      coeff.c.assign(static_cast<size_t>(factors[fi].first.degree()), BigRat(0));
      for (int ci = 0; ci < factors[fi].first.degree(); ++ci) coeff.c[static_cast<size_t>(ci)] = (*sol)[s++];
      coeff.trim();
      if (!coeff.zero()) out.push_back({factors[fi].first, j, coeff});
    }
  }
  return out;
}

// integrates one partial-fraction term
inline std::optional<Expr> integrate_pf_term(const PFTerm& t, const std::string& var,
                                             ExprStore& st, Budget& budget) {
  budget.spend();
  Expr x = st.variable(var);
  if (t.factor.degree() == 1) {
    // A/(x - r)^j ; factor is monic: x + c0
    BigRat A = t.coeff.coeff(0);
    Expr lin = st.add({x, st.rational(t.factor.coeff(0))});
    if (t.power == 1) return st.mul({st.rational(A), st.func(FuncSym::Ln, lin)});
    BigRat scale = A / BigRat(1 - t.power);
    return st.mul({st.rational(scale), st.pow(lin, static_cast<long>(1 - t.power))});
  }
  // (B x + C)/(quad)^j with quad = x^2 + p x + q
  BigRat B = t.coeff.coeff(1), C = t.coeff.coeff(0);
  BigRat p = t.factor.coeff(1);
  Expr qexpr = poly_to_expr(t.factor, var, st);
  std::vector<Expr> pieces;
  if (B != 0) {
    // B/2 * (2x + p)/quad^j part
    if (t.power == 1) {
      pieces.push_back(st.mul({st.rational(B / 2), st.func(FuncSym::Ln, qexpr)}));
    } else {
      BigRat scale = (B / 2) / BigRat(1 - t.power);
      pieces.push_back(st.mul({st.rational(scale), st.pow(qexpr, static_cast<long>(1 - t.power))}));
    }
  }
  BigRat Cp = C - B * p / 2;
  if (Cp != 0) {
    auto J = integrate_inverse_quadratic_power(t.factor, t.power, var, st, budget);
    if (!J) return std::nullopt;
    pieces.push_back(st.mul({st.rational(Cp), *J}));
  }
  if (pieces.empty()) return st.integer(0l);
  return st.add(std::move(pieces));
}

// full partial-fraction integration of a rational function
class PartialFractionsIntegrator {
 public:
  PartialFractionsIntegrator(ExprStore& st, const std::string& var) : st_(st), var_(var) {}

  std::optional<Expr> integrate(Expr core, Budget& budget) {
    budget.spend();
    auto rf = expr_to_ratfun(core, var_);
    if (!rf) return std::nullopt;
    if (rf->den.degree() == 0) {
      Poly p = rf->num * (BigRat(1) / rf->den.coeff(0));
      return integrate_poly(p, var_, st_);
    }
    auto [quot, rem] = divmod(rf->num, rf->den);
    std::vector<Expr> pieces;
    if (!quot.zero()) pieces.push_back(integrate_poly(quot, var_, st_));
    if (!rem.zero()) {
      auto fr = integrate_proper(rem, rf->den, budget);
      if (!fr) return std::nullopt;
      pieces.push_back(*fr);
    }
    if (pieces.empty()) return st_.integer(0l);
    return st_.add(std::move(pieces));
  }

 private:
  std::optional<Expr> integrate_proper(const Poly& num, const Poly& den, Budget& budget) {
    // den monic from ratfun normalization
    auto sq = squarefree_decompose(den);
    std::vector<std::pair<Poly, int>> factors;
    for (const auto& part : sq) {
      budget.spend();
      auto fs = factor_squarefree(part.factor);
      if (!fs) return std::nullopt;
      for (const BigRat& r : fs->roots)
        factors.emplace_back(Poly({-r, BigRat(1)}), part.multiplicity);
      for (const Poly& qd : fs->quads) factors.emplace_back(qd, part.multiplicity);
    }
    auto terms = partial_fractions(num, factors, budget);
    if (!terms) return std::nullopt;
    std::vector<Expr> pieces;
    for (const auto& t : *terms) {
      auto piece = integrate_pf_term(t, var_, st_, budget);
      if (!piece) return std::nullopt;
      pieces.push_back(*piece);
    }
    if (pieces.empty()) return st_.integer(0l);
    return st_.add(std::move(pieces));
  }

  ExprStore& st_;
  std::string var_;
};

// ---- Hermite reduction ----
// Strips the rational part of the antiderivative without full factorization:
// repeatedly lowers the highest denominator multiplicity by solving a Bezout
// identity mod the squarefree factor; the leftover squarefree problem is
// finished with the partial-fraction log machinery.

class HermiteIntegrator {
 public:
  HermiteIntegrator(ExprStore& st, const std::string& var) : st_(st), var_(var) {}

  std::optional<Expr> integrate(Expr core, Budget& budget) {
    budget.spend();
    auto rf = expr_to_ratfun(core, var_);
    if (!rf) return std::nullopt;
    if (rf->den.degree() == 0) {
      Poly p = rf->num * (BigRat(1) / rf->den.coeff(0));
      return integrate_poly(p, var_, st_);
    }
    auto [quot, rem] = divmod(rf->num, rf->den);
    std::vector<Expr> pieces;
    if (!quot.zero()) pieces.push_back(integrate_poly(quot, var_, st_));
    Poly A = rem;
    Poly D = rf->den;
    // reduction loop: knock the top multiplicity down one step at a time
    while (!A.zero()) {
      budget.spend();
      auto sq = squarefree_decompose(D);
      int m = 0;
      Poly T;
      for (const auto& part : sq)
        if (part.multiplicity > m) {
          m = part.multiplicity;
          T = part.factor;
        }
      if (m < 2) break;
      Poly S = D / poly_pow(T, static_cast<unsigned>(m));
      Poly dT = derivative(T);
      // find B with  -(m-1) * S * dT * B == A  (mod T)
      Poly W = (S * dT) * BigRat(1 - m);
      auto eg = poly_ext_gcd(W % T, T);
      if (eg.g.degree() != 0 || eg.g.zero()) return std::nullopt;
      Poly Winv = eg.u * (BigRat(1) / eg.g.coeff(0));
      Poly B = (Winv * A) % T;
      // rational part B / T^(m-1)
      Expr tpow = st_.pow(poly_to_expr(T, var_, st_), static_cast<long>(1 - m));
      pieces.push_back(st_.mul({poly_to_expr(B, var_, st_), tpow}));
      // next numerator: (A + (m-1) S dT B)/T - S B'
      Poly top = A + (S * dT * B) * BigRat(m - 1);
      auto [q2, r2] = divmod(top, T);
      if (!r2.zero()) return std::nullopt;  // construction guarantees exact division
      A = q2 - S * derivative(B);
      D = S * poly_pow(T, static_cast<unsigned>(m - 1));
      RatFun reduced{A, D};
      detail::ratfun_normalize(reduced);
      A = reduced.num;
      D = reduced.den;
    }
    if (!A.zero()) {
      // squarefree remainder: finish with logarithmic/arctangent pieces
      auto fs = factor_squarefree(D);
      if (!fs) return std::nullopt;
      std::vector<std::pair<Poly, int>> factors;
      for (const BigRat& r : fs->roots) factors.emplace_back(Poly({-r, BigRat(1)}), 1);
      for (const Poly& qd : fs->quads) factors.emplace_back(qd, 1);
      auto terms = partial_fractions(A, factors, budget);
      if (!terms) return std::nullopt;
      for (const auto& t : *terms) {
        auto piece = integrate_pf_term(t, var_, st_, budget);
        if (!piece) return std::nullopt;
        pieces.push_back(*piece);
      }
    }
    if (pieces.empty()) return st_.integer(0l);
    return st_.add(std::move(pieces));
  }

 private:
  ExprStore& st_;
  std::string var_;
};

}  // namespace detail

// Runs one sub-algorithm with a step budget. Output expressions land in the
// integrand's store. Every Success is cross-checked by the verification
// oracle; a numeric mismatch downgrades to Failure.
inline IntegrationOutcome integrate_with(SubAlgorithmId alg, Expr e, const std::string& var,
                                         int budget_steps = kDefaultBudget) {
  ExprStore& st = *e.store;
  detail::Budget budget(budget_steps);
  // Polynomial kernels meter coefficient work against the same budget, so a
  // degree blowup inside the rational methods surfaces as BudgetExceeded.
  std::int64_t credit = static_cast<std::int64_t>(budget_steps) * 50;
  detail::PolyCreditScope credit_scope(&credit);
  IntegrationOutcome out;
  std::optional<Expr> result;
  try {
    switch (alg) {
      case SubAlgorithmId::RuleTable: {
        detail::RuleTable t(st, var);
        result = detail::linear_split(
            e, st, [&](Expr c) -> std::optional<Expr> { return t.integrate(c, budget); });
        break;
      }
      case SubAlgorithmId::DerivDivides: {
        detail::DerivDivides dd(st, var);
        result = detail::linear_split(
            e, st, [&](Expr c) -> std::optional<Expr> { return dd.integrate(c, budget); });
        break;
      }
      case SubAlgorithmId::Parts: {
        detail::PartsIntegrator p(st, var);
        result = detail::linear_split(
            e, st, [&](Expr c) -> std::optional<Expr> { return p.integrate(c, budget); });
        break;
      }
      case SubAlgorithmId::PartialFractions: {
        detail::PartialFractionsIntegrator pf(st, var);
        result = detail::linear_split(
            e, st, [&](Expr c) -> std::optional<Expr> { return pf.integrate(c, budget); });
        break;
      }
      case SubAlgorithmId::Hermite: {
        detail::HermiteIntegrator h(st, var);
        result = detail::linear_split(
            e, st, [&](Expr c) -> std::optional<Expr> { return h.integrate(c, budget); });
        break;
      }
    }
  } catch (const detail::budget_exhausted&) {
    out.status = IntStatus::BudgetExceeded;
    out.steps_used = budget.used();
    return out;
  }
  out.steps_used = budget.used();
  if (!result) {
    out.status = IntStatus::Failure;
    return out;
  }
  if (verify_pair(e, *result, var) == VerifyResult::Fail) {
    out.status = IntStatus::Failure;
    return out;
  }
  out.status = IntStatus::Success;
  out.output = *result;
  out.size = dag_size(*result);
  return out;
}

// every sub-algorithm's outcome on one integrand, in enum order
inline std::array<IntegrationOutcome, kAlgCount> run_portfolio(Expr e, const std::string& var,
                                                               int budget_steps = kDefaultBudget) {
  std::array<IntegrationOutcome, kAlgCount> outs;
  for (int i = 0; i < kAlgCount; ++i)
    outs[static_cast<size_t>(i)] = integrate_with(static_cast<SubAlgorithmId>(i), e, var, budget_steps);
  return outs;
}

}  // namespace intsel

