// Walk a handful of integrands through the portfolio and show where the
// fixed priority order pays for ignoring output size.

#include <cstdio>

#include "intsel/select.hpp"

using namespace intsel;

int main() {
  const char* inputs[] = {
      "cos(x)",
      "x*exp(x)",
      "2*x*cos(x^2)",
      "(3*x+1)/(x^2+3*x+2)",
      "1/(x^2+2)^3",
      "(x^2+1)/(x^2+4)^4",
  };

  ExprStore st;
  for (const char* text : inputs) {
    Expr e = parse(text, st);
    auto rec = label_record(e, Generator::Fwd, "x");
    printf("integral of %s\n", print_infix(e).c_str());
    if (!rec) {
      printf("  no method in the portfolio solves this one\n\n");
      continue;
    }
    for (int a = 0; a < kAlgCount; ++a) {
      const auto& o = rec->outcomes[(size_t)a];
      if (o.status == IntStatus::Success) {
        ExprStore ost;
        Expr out = parse_prefix(o.output_prefix, ost);
        printf("  %-16s size %3d%s  %s\n", alg_name((SubAlgorithmId)a), o.size,
               rec->labels[(size_t)a] ? " *" : "  ", print_infix(out).c_str());
      } else {
        printf("  %-16s %s\n", alg_name((SubAlgorithmId)a),
               o.status == IntStatus::Failure ? "fails" : "budget exceeded");
      }
    }
    auto base = baseline_meta(*rec);
    auto best = oracle_select(*rec);
    printf("  fixed order picks %s (size %d), best is %s (size %d)\n\n",
           alg_name(base.chosen), base.achieved, alg_name(best.chosen), best.achieved);
  }
  return 0;
}
