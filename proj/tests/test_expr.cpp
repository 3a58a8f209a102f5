#include <catch2/catch_amalgamated.hpp>

#include "intsel/expr.hpp"

using namespace intsel;

namespace {

// depth-bounded random expression for property tests; builders keep it canonical
Expr random_expr(ExprStore& st, Rng& rng, int depth) {
  if (depth <= 0 || rng.chance(0.25)) {
    switch (rng.below(4)) {
      case 0: return st.integer(rng.range(-9, 9));
      case 1: return st.variable("x");
      case 2: return st.variable("y");
      default: return st.constsym(static_cast<int>(rng.range(1, 3)));
    }
  }
  switch (rng.below(4)) {
    case 0: {
      std::vector<Expr> kids;
      size_t n = static_cast<size_t>(rng.range(2, 3));
      for (size_t i = 0; i < n; ++i) kids.push_back(random_expr(st, rng, depth - 1));
      return st.add(std::move(kids));
    }
    case 1: {
      std::vector<Expr> kids;
      size_t n = static_cast<size_t>(rng.range(2, 3));
      for (size_t i = 0; i < n; ++i) kids.push_back(random_expr(st, rng, depth - 1));
      return st.mul(std::move(kids));
    }
    case 2: {
      Expr b = random_expr(st, rng, depth - 1);
      if (rng.chance(0.7)) return st.pow(b, rng.range(-3, 4));
      return st.pow(b, random_expr(st, rng, depth - 1));
    }
    default: {
      auto f = static_cast<FuncSym>(rng.below(kFuncCount));
      return st.func(f, random_expr(st, rng, depth - 1));
    }
  }
}

uint64_t tree_node_count(Expr e) {
  uint64_t total = 1;
  for (size_t i = 0; i < e.arity(); ++i) total += tree_node_count(e.kid(i));
  return total;
}

}  // namespace

TEST_CASE("parse produces canonical forms", "[expr]") {
  ExprStore st;

  Expr e = parse("x*sin(x)", st);
  REQUIRE(e.kind() == Kind::Mul);
  REQUIRE(e.arity() == 2);
  REQUIRE(e.kid(0).same(st.variable("x")));
  REQUIRE(e.kid(1).same(st.func(FuncSym::Sin, st.variable("x"))));

  REQUIRE(parse("0", st).same(st.integer(0l)));
  REQUIRE(parse("x + x", st).same(st.mul({st.integer(2l), st.variable("x")})));
}

TEST_CASE("constant folding and flattening", "[expr]") {
  ExprStore st;
  REQUIRE(parse("2*3", st).same(st.integer(6l)));
  REQUIRE(parse("2+3", st).same(st.integer(5l)));
  REQUIRE(parse("x - x", st).same(st.integer(0l)));
  REQUIRE(parse("x/x", st).same(st.integer(1l)));
  REQUIRE(parse("x*x", st).same(st.pow(st.variable("x"), 2l)));
  REQUIRE(parse("x*x^2", st).same(st.pow(st.variable("x"), 3l)));
  REQUIRE(parse("2^10", st).same(st.integer(1024l)));
  REQUIRE(parse("(x+y)+z", st).arity() == 3);
  REQUIRE(parse("(x*y)*z", st).arity() == 3);
  REQUIRE(parse("(x+1)*(x+1)", st).same(st.pow(parse("x+1", st), 2l)));
  // no Add directly under Add, no Mul under Mul
  Expr nested = parse("(x + sin(x)) + (y + cos(y))", st);
  for (size_t i = 0; i < nested.arity(); ++i) REQUIRE(nested.kid(i).kind() != Kind::Add);
}

TEST_CASE("rational coefficients use integer times inverse-integer form", "[expr]") {
  ExprStore st;
  Expr half = parse("1/2", st);
  REQUIRE(half.kind() == Kind::Pow);
  REQUIRE(half.kid(0).same(st.integer(2l)));
  REQUIRE(half.kid(1).same(st.integer(-1l)));

  Expr tt = parse("2/3", st);
  REQUIRE(tt.kind() == Kind::Mul);
  REQUIRE(st.as_rational(tt).value() == BigRat(2, 3));
  REQUIRE(st.as_rational(parse("10/4", st)).value() == BigRat(5, 2));
  REQUIRE(print_infix(parse("10/4", st)) == "5/2");
  REQUIRE(st.as_rational(parse("2^(-2)", st)).value() == BigRat(1, 4));
  REQUIRE(parse("-1/2", st).kind() == Kind::Mul);
  REQUIRE(st.as_rational(parse("-1/2", st)).value() == BigRat(-1, 2));
}

TEST_CASE("dag size counts shared nodes once", "[expr]") {
  ExprStore st;
  REQUIRE(dag_size(st.integer(5l)) == 1);
  REQUIRE(dag_size(parse("x*sin(x)", st)) == 3);
  Expr e = st.add({st.func(FuncSym::Sin, st.variable("x")),
                   st.mul({st.variable("x"), st.func(FuncSym::Sin, st.variable("x"))})});
  REQUIRE(dag_size(e) == 4 + 1 - 1);  // x, sin, Mul, Add with sin/x shared
  REQUIRE(dag_size(e) == 4);
  REQUIRE(tree_node_count(e) == 7);
  REQUIRE(tree_size(e) == 7);
}

TEST_CASE("substitution", "[expr]") {
  ExprStore st;
  Expr s = substitute(parse("sin(u)", st), "u", parse("x^2", st));
  REQUIRE(s.same(parse("sin(x^2)", st)));

  Expr any = parse("x*cos(x) + ln(x+2)", st);
  REQUIRE(substitute(any, "x", st.variable("x")).same(any));

  REQUIRE(substitute(parse("u + u^2", st), "u", st.integer(3l)).same(st.integer(12l)));
}

TEST_CASE("numeric evaluation", "[expr]") {
  ExprStore st;
  REQUIRE(eval_numeric(parse("x^2", st), "x", 3.0) == Catch::Approx(9.0));
  REQUIRE_THROWS_AS(eval_numeric(parse("ln(x)", st), "x", -1.0), eval_error);
  try {
    eval_numeric(parse("ln(x)", st), "x", -1.0);
  } catch (const eval_error& e) {
    REQUIRE(e.code == eval_error::Code::Domain);
  }
  REQUIRE(eval_numeric(parse("sin(x)*exp(x)", st), "x", 1.0) ==
          Catch::Approx(2.2873552871788).epsilon(1e-10));
  REQUIRE_THROWS_AS(eval_numeric(parse("1/x", st), "x", 0.0), eval_error);
  REQUIRE_THROWS_AS(eval_numeric(parse("x + y", st), "x", 1.0), eval_error);
  REQUIRE_THROWS_AS(eval_numeric(parse("arcsin(x)", st), "x", 2.0), eval_error);
}

TEST_CASE("parse errors carry position", "[expr]") {
  ExprStore st;
  REQUIRE_THROWS_AS(parse("x + ", st), parse_error);
  REQUIRE_THROWS_AS(parse("foo(x)", st), parse_error);
  REQUIRE_THROWS_AS(parse("x @ y", st), parse_error);
  REQUIRE_THROWS_AS(parse("(x + 1", st), parse_error);
  try {
    parse("x + $", st);
  } catch (const parse_error& e) {
    REQUIRE(e.pos == 4);
  }
}

TEST_CASE("prefix serialization format", "[expr]") {
  ExprStore st;
  REQUIRE(serialize_prefix(parse("x*sin(x)", st)) == "Mul 2 x Sin x");
  REQUIRE(serialize_prefix(parse("a+b+c", st)) == "Add 3 a b c");
  REQUIRE(serialize_prefix(parse("1/x", st)) == "Pow x -1");
  REQUIRE(serialize_prefix(st.constsym(1)) == "CONST");
  REQUIRE(parse_prefix("Mul 2 x Sin x", st).same(parse("x*sin(x)", st)));
}

TEST_CASE("round trips over random expressions", "[expr][property]") {
  ExprStore st;
  Rng rng(20240901ull);
  int nontrivial = 0;
  for (int i = 0; i < 10000; ++i) {
    Expr e = random_expr(st, rng, 4);
    if (e.arity() > 0) ++nontrivial;
    std::string inf = print_infix(e);
    INFO("infix: " << inf);
    Expr back = parse(inf, st);
    REQUIRE(back.same(e));
    Expr back2 = parse_prefix(serialize_prefix(e), st);
    REQUIRE(back2.same(e));
  }
  REQUIRE(nontrivial > 5000);
}

TEST_CASE("hash consing interns structurally equal expressions", "[expr][property]") {
  ExprStore st;
  Rng rng(7ull);
  for (int i = 0; i < 200; ++i) {
    Expr e = random_expr(st, rng, 4);
    Expr again = parse_prefix(serialize_prefix(e), st);
    REQUIRE(again.id == e.id);
  }
  REQUIRE(parse("x + sin(x)*2", st).id == parse("2*sin(x) + x", st).id);
}

TEST_CASE("dag size bounded by tree size", "[expr][property]") {
  ExprStore st;
  Rng rng(99ull);
  for (int i = 0; i < 2000; ++i) {
    Expr e = random_expr(st, rng, 4);
    REQUIRE(static_cast<uint64_t>(dag_size(e)) <= tree_node_count(e));
  }
  // shared subexpression forces strict inequality
  Expr shared = parse("sin(x) + x*sin(x)", st);
  REQUIRE(static_cast<uint64_t>(dag_size(shared)) < tree_node_count(shared));
}

TEST_CASE("addition and multiplication are order independent", "[expr][property]") {
  ExprStore st;
  Rng rng(1234ull);
  for (int i = 0; i < 500; ++i) {
    Expr a = random_expr(st, rng, 3);
    Expr b = random_expr(st, rng, 3);
    REQUIRE(st.add({a, b}).id == st.add({b, a}).id);
    REQUIRE(st.mul({a, b}).id == st.mul({b, a}).id);
  }
}

TEST_CASE("free_of and subexpression walks", "[expr]") {
  ExprStore st;
  REQUIRE(free_of(parse("sin(y) + 3", st), "x"));
  REQUIRE(!free_of(parse("sin(y) + x", st), "x"));
  REQUIRE(contains_any_variable(parse("x + 1", st)));
  REQUIRE(!contains_any_variable(parse("2/3", st)));
  auto subs = subexpressions(parse("x*sin(x)", st));
  REQUIRE(subs.size() == 3);
}
