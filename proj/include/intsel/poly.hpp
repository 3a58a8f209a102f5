#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "intsel/expr.hpp"

namespace intsel {

namespace detail {

// Thrown when a work budget runs out; integrate_with maps it to BudgetExceeded.
struct budget_exhausted {};

// Coefficient-level work meter. Armed around integration calls so that
// degree blowups inside polynomial kernels count against the step budget
// instead of stalling the whole pipeline.
inline thread_local std::int64_t* poly_credit = nullptr;

inline void poly_spend(std::int64_t n) {
  if (!poly_credit) return;
  *poly_credit -= n;
  if (*poly_credit < 0) throw budget_exhausted{};
}

struct PolyCreditScope {
  explicit PolyCreditScope(std::int64_t* credit) : prev_(poly_credit) { poly_credit = credit; }
  ~PolyCreditScope() { poly_credit = prev_; }
  PolyCreditScope(const PolyCreditScope&) = delete;
  PolyCreditScope& operator=(const PolyCreditScope&) = delete;

 private:
  std::int64_t* prev_;
};

// Bit length of a rational, the cost driver for big-number arithmetic. The
// Euclidean remainder sequence over Q grows coefficients exponentially, so
// charging per operation alone lets runaway gcd calls stall for minutes.
inline std::int64_t rat_bits(const BigRat& r) {
  BigInt n = boost::multiprecision::numerator(r);
  if (n < 0) n = -n;
  const BigInt& d = boost::multiprecision::denominator(r);
  std::int64_t bits = 2;
  if (n > 0) bits += static_cast<std::int64_t>(boost::multiprecision::msb(n));
  if (d > 1) bits += static_cast<std::int64_t>(boost::multiprecision::msb(d));
  return bits;
}

}  // namespace detail

// Dense univariate polynomial over the rationals. coeff[i] multiplies x^i;
// no trailing zeros, so the zero polynomial has an empty coefficient list.
struct Poly {
  std::vector<BigRat> c;

  Poly() = default;
  explicit Poly(std::vector<BigRat> coeffs) : c(std::move(coeffs)) { trim(); }
  static Poly constant(BigRat v) {
    Poly p;
    if (v != 0) p.c.push_back(std::move(v));
    return p;
  }
  static Poly x() { return Poly({BigRat(0), BigRat(1)}); }

  void trim() {
    while (!c.empty() && c.back() == 0) c.pop_back();
  }
  bool zero() const { return c.empty(); }
  int degree() const { return static_cast<int>(c.size()) - 1; }
  const BigRat& lead() const { return c.back(); }
  BigRat coeff(int i) const {
    if (i < 0 || i >= static_cast<int>(c.size())) return BigRat(0);
    return c[static_cast<size_t>(i)];
  }
  bool is_constant() const { return c.size() <= 1; }

  bool operator==(const Poly& o) const { return c == o.c; }
};

inline Poly operator+(const Poly& a, const Poly& b) {
  Poly r;
  r.c.resize(std::max(a.c.size(), b.c.size()), BigRat(0));
  for (size_t i = 0; i < a.c.size(); ++i) r.c[i] += a.c[i];
  for (size_t i = 0; i < b.c.size(); ++i) r.c[i] += b.c[i];
  r.trim();
  return r;
}

inline Poly operator-(const Poly& a) {
  Poly r = a;
  for (auto& v : r.c) v = -v;
  return r;
}

inline Poly operator-(const Poly& a, const Poly& b) { return a + (-b); }

inline Poly operator*(const Poly& a, const Poly& b) {
  if (a.zero() || b.zero()) return Poly();
  detail::poly_spend(static_cast<std::int64_t>(a.c.size()) * static_cast<std::int64_t>(b.c.size()));
  Poly r;
  r.c.assign(a.c.size() + b.c.size() - 1, BigRat(0));
  for (size_t i = 0; i < a.c.size(); ++i) {
    if (a.c[i] == 0) continue;
    for (size_t j = 0; j < b.c.size(); ++j) r.c[i + j] += a.c[i] * b.c[j];
  }
  r.trim();
  return r;
}

inline Poly operator*(const Poly& a, const BigRat& s) {
  if (s == 0) return Poly();
  Poly r = a;
  for (auto& v : r.c) v *= s;
  return r;
}

inline Poly poly_pow(Poly base, unsigned e) {
  Poly acc = Poly::constant(BigRat(1));
  while (e) {
    if (e & 1) acc = acc * base;
    base = base * base;
    e >>= 1;
  }
  return acc;
}

// quotient and remainder with deg(rem) < deg(div); exact over Q
inline std::pair<Poly, Poly> divmod(const Poly& a, const Poly& b) {
  if (b.zero()) throw std::domain_error("polynomial division by zero");
  Poly rem = a;
  Poly quot;
  int db = b.degree();
  if (rem.degree() >= db) quot.c.assign(static_cast<size_t>(rem.degree() - db) + 1, BigRat(0));
  while (!rem.zero() && rem.degree() >= db) {
    int shift = rem.degree() - db;
    BigRat f = rem.lead() / b.lead();
    detail::poly_spend((db + 1) * (1 + detail::rat_bits(f) / 64));
    quot.c[static_cast<size_t>(shift)] = f;
    for (int i = 0; i <= db; ++i)
      rem.c[static_cast<size_t>(i + shift)] -= f * b.c[static_cast<size_t>(i)];
    rem.trim();
  }
  quot.trim();
  return {quot, rem};
}

inline Poly operator/(const Poly& a, const Poly& b) { return divmod(a, b).first; }
inline Poly operator%(const Poly& a, const Poly& b) { return divmod(a, b).second; }

inline Poly monic(const Poly& p) {
  if (p.zero()) return p;
  Poly r = p;
  BigRat inv = BigRat(1) / p.lead();
  for (auto& v : r.c) v *= inv;
  return r;
}

inline Poly poly_gcd(Poly a, Poly b) {
  while (!b.zero()) {
    Poly r = a % b;
    a = std::move(b);
    b = std::move(r);
  }
  return monic(a);
}

// g = gcd(a,b) monic with u*a + v*b = g
struct ExtGcd {
  Poly g, u, v;
};
inline ExtGcd poly_ext_gcd(Poly a, Poly b) {
  Poly r0 = std::move(a), r1 = std::move(b);
  Poly s0 = Poly::constant(BigRat(1)), s1;
  Poly t0, t1 = Poly::constant(BigRat(1));
  while (!r1.zero()) {
    auto [q, r] = divmod(r0, r1);
    Poly s = s0 - q * s1;
    Poly t = t0 - q * t1;
    r0 = std::move(r1);
    r1 = std::move(r);
    s0 = std::move(s1);
    s1 = std::move(s);
    t0 = std::move(t1);
    t1 = std::move(t);
  }
  if (r0.zero()) return {r0, s0, t0};
  BigRat inv = BigRat(1) / r0.lead();
  return {r0 * inv, s0 * inv, t0 * inv};
}

inline Poly derivative(const Poly& p) {
  Poly r;
  if (p.c.size() <= 1) return r;
  r.c.resize(p.c.size() - 1);
  for (size_t i = 1; i < p.c.size(); ++i) r.c[i - 1] = p.c[i] * BigRat(BigInt(i));
  return r;
}

inline BigRat poly_eval(const Poly& p, const BigRat& x) {
  detail::poly_spend(static_cast<std::int64_t>(p.c.size()));
  BigRat acc = 0;
  for (size_t i = p.c.size(); i-- > 0;) acc = acc * x + p.c[i];
  return acc;
}

// Yun's algorithm: p == lead * prod factors[k].first ^ factors[k].second with
// square-free pairwise-coprime monic factors, multiplicities strictly rising
struct SquareFreePart {
  Poly factor;
  int multiplicity;
};
inline std::vector<SquareFreePart> squarefree_decompose(const Poly& p) {
  std::vector<SquareFreePart> out;
  if (p.degree() < 1) return out;
  Poly a = monic(p);
  Poly da = derivative(a);
  Poly g = poly_gcd(a, da);
  if (g.degree() == 0) {
    out.push_back({a, 1});
    return out;
  }
  Poly w = a / g;
  Poly y = da / g;
  Poly z = y - derivative(w);
  int mult = 1;
  while (!z.zero()) {
    Poly f = poly_gcd(w, z);
    if (f.degree() > 0) out.push_back({f, mult});
    w = w / f;
    y = z / f;
    z = y - derivative(w);
    ++mult;
  }
  if (w.degree() > 0) out.push_back({w, mult});
  return out;
}

namespace detail {
// divisors of |n| up to a work cap; caller treats overflow of the cap as
// "roots unknown" rather than wrong answers
inline std::optional<std::vector<BigInt>> divisors(BigInt n, size_t cap = 1u << 16) {
  if (n < 0) n = -n;
  if (n == 0) return std::nullopt;
  std::vector<BigInt> small, large;
  BigInt i = 1;
  size_t steps = 0;
  while (i * i <= n) {
    if (++steps > cap) return std::nullopt;
    if (n % i == 0) {
      small.push_back(i);
      BigInt other = n / i;
      if (other != i) large.push_back(other);
    }
    ++i;
  }
  for (size_t k = large.size(); k-- > 0;) small.push_back(large[k]);
  return small;
}
}  // namespace detail

// all rational roots with multiplicity stripped out of p; returns nullopt if
// the candidate search exceeded its work cap (callers then treat the
// polynomial as having no usable linear factors)
inline std::optional<std::vector<BigRat>> rational_roots(const Poly& p) {
  std::vector<BigRat> roots;
  if (p.degree() < 1) return roots;
  if (p.degree() == 1) {
    roots.push_back(-p.c[0] / p.c[1]);
    return roots;
  }
  // clear denominators to an integer polynomial
  BigInt scale = 1;
  for (const auto& v : p.c) {
    BigInt d = rat_den(v);
    scale = scale / boost::multiprecision::gcd(scale, d) * d;
  }
  std::vector<BigInt> ic;
  ic.reserve(p.c.size());
  for (const auto& v : p.c) {
    BigRat s = v * BigRat(scale);
    ic.push_back(rat_num(s));
  }
  while (!ic.empty() && ic.front() == 0) {
    // x divides: root 0
    ic.erase(ic.begin());
    roots.push_back(BigRat(0));
  }
  if (ic.size() <= 1) return roots;
  auto ds0 = detail::divisors(ic.front());
  auto dsn = detail::divisors(ic.back());
  if (!ds0 || !dsn) return std::nullopt;
  Poly work;
  for (const auto& v : ic) work.c.push_back(BigRat(v));
  work.trim();
  for (const BigInt& pn : *ds0) {
    for (const BigInt& qn : *dsn) {
      if (boost::multiprecision::gcd(pn, qn) != 1) continue;
      for (int sign = 0; sign < 2; ++sign) {
        BigRat cand = make_rat(sign ? -pn : pn, qn);
        while (work.degree() >= 1 && poly_eval(work, cand) == 0) {
          roots.push_back(cand);
          // deflate by (x - cand)
          Poly lin({-cand, BigRat(1)});
          work = work / lin;
        }
      }
    }
  }
  return roots;
}

// n x n linear solve via Gaussian elimination; nullopt when singular
inline std::optional<std::vector<BigRat>> solve_linear(std::vector<std::vector<BigRat>> a,
                                                       std::vector<BigRat> b) {
  size_t n = a.size();
  for (size_t col = 0; col < n; ++col) {
    detail::poly_spend(static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - col));
    size_t piv = col;
    while (piv < n && a[piv][col] == 0) ++piv;
    if (piv == n) return std::nullopt;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    BigRat inv = BigRat(1) / a[col][col];
    for (size_t j = col; j < n; ++j) a[col][j] *= inv;
    b[col] *= inv;
    for (size_t i = 0; i < n; ++i) {
      if (i == col || a[i][col] == 0) continue;
      BigRat f = a[i][col];
      for (size_t j = col; j < n; ++j) a[i][j] -= f * a[col][j];
      b[i] -= f * b[col];
    }
  }
  return b;
}

// ---- conversion between Expr and rational functions ----

struct RatFun {
  Poly num, den;  // den monic, gcd(num, den) == 1, den != 0
};

namespace detail {
inline void ratfun_normalize(RatFun& r) {
  if (r.num.zero()) {
    r.den = Poly::constant(BigRat(1));
    return;
  }
  Poly g = poly_gcd(r.num, r.den);
  if (g.degree() > 0) {
    r.num = r.num / g;
    r.den = r.den / g;
  }
  BigRat lead = r.den.lead();
  if (lead != 1) {
    BigRat inv = BigRat(1) / lead;
    r.num = r.num * inv;
    r.den = r.den * inv;
  }
}

// Degree ceiling for rational-function manipulation. Past this the exact
// arithmetic cost explodes without adding anything the portfolio can use.
inline constexpr int kRatFunDegreeCap = 30;

inline bool ratfun_too_big(const RatFun& r) {
  return r.num.degree() > kRatFunDegreeCap || r.den.degree() > kRatFunDegreeCap;
}

inline std::optional<RatFun> to_ratfun_rec(Expr e, const std::string& var) {
  ExprStore& st = *e.store;
  if (auto rc = st.as_rational(e)) return RatFun{Poly::constant(*rc), Poly::constant(BigRat(1))};
  switch (e.kind()) {
    case Kind::Variable:
      if (e.node().var != var) return std::nullopt;
      return RatFun{Poly::x(), Poly::constant(BigRat(1))};
    case Kind::Add: {
      RatFun acc{Poly(), Poly::constant(BigRat(1))};
      for (size_t i = 0; i < e.arity(); ++i) {
        auto t = to_ratfun_rec(e.kid(i), var);
        if (!t) return std::nullopt;
        acc.num = acc.num * t->den + t->num * acc.den;
        acc.den = acc.den * t->den;
        ratfun_normalize(acc);
        if (ratfun_too_big(acc)) return std::nullopt;
      }
      return acc;
    }
    case Kind::Mul: {
      RatFun acc{Poly::constant(BigRat(1)), Poly::constant(BigRat(1))};
      for (size_t i = 0; i < e.arity(); ++i) {
        auto t = to_ratfun_rec(e.kid(i), var);
        if (!t) return std::nullopt;
        acc.num = acc.num * t->num;
        acc.den = acc.den * t->den;
        ratfun_normalize(acc);
        if (ratfun_too_big(acc)) return std::nullopt;
      }
      return acc;
    }
    case Kind::Pow: {
      Expr ex = e.kid(1);
      if (!ex.is_integer()) return std::nullopt;
      const BigInt& n = ex.ivalue();
      if (n > 64 || n < -64) return std::nullopt;
      long ln = static_cast<long>(n);
      auto base = to_ratfun_rec(e.kid(0), var);
      if (!base) return std::nullopt;
      unsigned m = static_cast<unsigned>(ln < 0 ? -ln : ln);
      int base_deg = std::max(base->num.degree(), base->den.degree());
      if (base_deg > 0 && base_deg * static_cast<long>(m) > kRatFunDegreeCap)
        return std::nullopt;
      RatFun r{poly_pow(base->num, m), poly_pow(base->den, m)};
      if (ln < 0) {
        if (r.num.zero()) return std::nullopt;
        std::swap(r.num, r.den);
      }
      ratfun_normalize(r);
      if (ratfun_too_big(r)) return std::nullopt;
      return r;
    }
    default:
      return std::nullopt;
  }
}
}  // namespace detail

// nullopt unless e is a rational function of var (no function symbols, no
// symbolic constants, integer exponents only)
inline std::optional<RatFun> expr_to_ratfun(Expr e, const std::string& var) {
  auto r = detail::to_ratfun_rec(e, var);
  if (r) detail::ratfun_normalize(*r);
  return r;
}

inline Expr poly_to_expr(const Poly& p, const std::string& var, ExprStore& st) {
  std::vector<Expr> terms;
  Expr x = st.variable(var);
  for (size_t i = 0; i < p.c.size(); ++i) {
    if (p.c[i] == 0) continue;
    Expr t = st.rational(p.c[i]);
    if (i >= 1) {
      Expr xp = i == 1 ? x : st.pow(x, static_cast<long>(i));
      t = st.mul({t, xp});
    }
    terms.push_back(t);
  }
  if (terms.empty()) return st.integer(0l);
  if (terms.size() == 1) return terms[0];
  return st.add(std::move(terms));
}

inline Expr ratfun_to_expr(const RatFun& r, const std::string& var, ExprStore& st) {
  Expr n = poly_to_expr(r.num, var, st);
  if (r.den.degree() == 0 && r.den.coeff(0) == 1) return n;
  return st.div(n, poly_to_expr(r.den, var, st));
}

}  // namespace intsel
