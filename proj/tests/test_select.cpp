#include <catch2/catch_amalgamated.hpp>

#include "intsel/select.hpp"

using namespace intsel;

namespace {

// synthetic record: sizes per algorithm in id order, -1 means failure
IntegrandRecord mk(Generator g, std::array<int, kAlgCount> sizes) {
  IntegrandRecord r;
  r.generator = g;
  int best = 0;
  bool any = false;
  for (int s : sizes)
    if (s > 0 && (!any || s < best)) {
      best = s;
      any = true;
    }
  for (int i = 0; i < kAlgCount; ++i) {
    auto& o = r.outcomes[static_cast<size_t>(i)];
    if (sizes[static_cast<size_t>(i)] > 0) {
      o.status = IntStatus::Success;
      o.size = sizes[static_cast<size_t>(i)];
      r.labels[static_cast<size_t>(i)] = (o.size == best) ? 1 : 0;
    } else {
      o.status = IntStatus::Failure;
    }
  }
  r.optimal_size = any ? best : 0;
  return r;
}

const std::vector<IntegrandRecord>& fixture10() {
  static const std::vector<IntegrandRecord> recs = {
      mk(Generator::Fwd, {10, -1, -1, -1, -1}),
      mk(Generator::Bwd, {12, 10, -1, -1, -1}),
      mk(Generator::Ibp, {-1, 10, -1, -1, -1}),
      mk(Generator::Sub, {-1, -1, 10, -1, -1}),
      mk(Generator::Fwd, {-1, -1, -1, 12, 10}),
      mk(Generator::Bwd, {-1, -1, -1, 21, 20}),
      mk(Generator::Ibp, {-1, -1, -1, 22, 20}),
      mk(Generator::Sub, {-1, -1, -1, 10, 10}),
      mk(Generator::Fwd, {-1, -1, -1, -1, -1}),
      mk(Generator::Bwd, {30, -1, -1, 12, 10}),
  };
  return recs;
}

std::vector<IntegrandRecord> small_labeled_corpus() {
  CorpusConfig cfg;
  cfg.seed = 5;
  cfg.train_per_gen = 30;
  cfg.test_per_gen = 10;
  auto res = build_corpus(cfg);
  auto all = res.train;
  all.insert(all.end(), res.test.begin(), res.test.end());
  return all;
}

}  // namespace

TEST_CASE("fallback tries algorithms in probability order and stops at first success") {
  auto rec = mk(Generator::Fwd, {10, 8, -1, -1, -1});

  // clear winner that succeeds: one attempt
  auto r = select_with_fallback({0.9, 0.1, 0.1, 0.1, 0.1}, rec);
  REQUIRE(r.attempts == std::vector<SubAlgorithmId>{SubAlgorithmId::RuleTable});
  REQUIRE(r.chosen == SubAlgorithmId::RuleTable);
  REQUIRE(r.outcome == IntStatus::Success);
  REQUIRE(r.achieved == 10);
  REQUIRE(r.optimal == 8);
  REQUIRE(r.ratio == Catch::Approx(10.0 / 8.0));

  // top choice fails, second succeeds
  auto rec2 = mk(Generator::Fwd, {-1, 10, -1, -1, -1});
  auto r2 = select_with_fallback({0.9, 0.8, 0.1, 0.1, 0.1}, rec2);
  REQUIRE(r2.attempts ==
          std::vector<SubAlgorithmId>{SubAlgorithmId::RuleTable, SubAlgorithmId::DerivDivides});
  REQUIRE(r2.chosen == SubAlgorithmId::DerivDivides);
  REQUIRE(r2.ratio == 1.0);
}

TEST_CASE("uniform probabilities fall back to the fixed id order") {
  auto rec = mk(Generator::Fwd, {-1, -1, -1, -1, -1});
  auto r = select_with_fallback({0.5, 0.5, 0.5, 0.5, 0.5}, rec);
  REQUIRE(r.attempts == std::vector<SubAlgorithmId>{
                            SubAlgorithmId::RuleTable, SubAlgorithmId::DerivDivides,
                            SubAlgorithmId::Parts, SubAlgorithmId::PartialFractions,
                            SubAlgorithmId::Hermite});
  REQUIRE(r.outcome == IntStatus::Failure);
  REQUIRE(r.achieved == -1);
  REQUIRE(r.ratio == 0.0);
}

TEST_CASE("fallback is total on labeled records") {
  auto recs = small_labeled_corpus();
  REQUIRE(recs.size() == 160);
  Rng rng = Rng::derive(9, 0, 0);
  for (const auto& rec : recs) {
    std::array<double, kAlgCount> probs{};
    for (auto& p : probs) p = rng.real();
    auto r = select_with_fallback(probs, rec);
    REQUIRE(!r.attempts.empty());
    REQUIRE(r.outcome == IntStatus::Success);
    REQUIRE(r.attempts.back() == r.chosen);
    REQUIRE(r.achieved >= r.optimal);
    REQUIRE(r.ratio >= 1.0);
    // every attempt before the chosen one actually failed
    for (size_t i = 0; i + 1 < r.attempts.size(); ++i)
      REQUIRE(rec.outcomes[static_cast<size_t>(r.attempts[i])].status != IntStatus::Success);
  }
}

TEST_CASE("score margins are cumulative for any strategy") {
  auto recs = small_labeled_corpus();
  Rng rng = Rng::derive(10, 0, 0);
  for (int trial = 0; trial < 8; ++trial) {
    std::array<double, kAlgCount> probs{};
    for (auto& p : probs) p = rng.real();
    Strategy s = [probs](const IntegrandRecord& rec) { return select_with_fallback(probs, rec); };
    auto rep = evaluate(s, recs, "random");
    REQUIRE(rep.total == static_cast<int>(recs.size()));
    REQUIRE(rep.exact_optimal <= rep.within_5pct);
    REQUIRE(rep.within_5pct <= rep.within_10pct);
    REQUIRE(rep.within_10pct + rep.all_failed <= rep.total);
    REQUIRE(rep.all_failed == 0);
    int gt = 0, ge = 0;
    for (int g = 0; g < kGenCount; ++g) {
      gt += rep.gen_total[static_cast<size_t>(g)];
      ge += rep.gen_exact[static_cast<size_t>(g)];
    }
    REQUIRE(gt == rep.total);
    REQUIRE(ge == rep.exact_optimal);
  }
}

TEST_CASE("oracle achieves the optimum on every labeled record") {
  auto recs = small_labeled_corpus();
  for (const auto& rec : recs) {
    auto r = oracle_select(rec);
    REQUIRE(r.outcome == IntStatus::Success);
    REQUIRE(r.achieved == rec.optimal_size);
    REQUIRE(r.ratio == 1.0);
    REQUIRE(r.attempts.size() == 1);
  }
  auto oracle_rep = evaluate(oracle_select, recs, "oracle");
  auto base_rep = evaluate(baseline_meta, recs, "baseline");
  REQUIRE(oracle_rep.exact_optimal == oracle_rep.total);
  REQUIRE(oracle_rep.exact_optimal >= base_rep.exact_optimal);
}

TEST_CASE("baseline is deterministic and follows its fixed priority") {
  auto recs = small_labeled_corpus();
  auto a = evaluate(baseline_meta, recs, "baseline");
  auto b = evaluate(baseline_meta, recs, "baseline");
  REQUIRE(a.exact_optimal == b.exact_optimal);
  REQUIRE(a.within_5pct == b.within_5pct);
  REQUIRE(a.within_10pct == b.within_10pct);
  REQUIRE(a.all_failed == b.all_failed);
  REQUIRE(a.gen_exact == b.gen_exact);

  auto dead = mk(Generator::Fwd, {-1, -1, -1, -1, -1});
  auto r = baseline_meta(dead);
  REQUIRE(r.attempts == std::vector<SubAlgorithmId>{
                            SubAlgorithmId::RuleTable, SubAlgorithmId::DerivDivides,
                            SubAlgorithmId::PartialFractions, SubAlgorithmId::Hermite,
                            SubAlgorithmId::Parts});
  REQUIRE(r.outcome == IntStatus::Failure);
}

TEST_CASE("ten record fixture scores as computed by hand") {
  const auto& recs = fixture10();
  auto reps = evaluate_compare(
      {{"oracle", Strategy(oracle_select)}, {"baseline", Strategy(baseline_meta)}}, recs);
  REQUIRE(reps.size() == 2);
  const auto& oracle = reps[0];
  const auto& base = reps[1];

  REQUIRE(base.total == 10);
  REQUIRE(base.exact_optimal == 4);   // records 1, 3, 4, 8
  REQUIRE(base.within_5pct == 5);     // plus record 6 at 21/20
  REQUIRE(base.within_10pct == 6);    // plus record 7 at 22/20
  REQUIRE(base.all_failed == 1);      // record 9
  REQUIRE(base.unique_wins == 0);

  REQUIRE(oracle.exact_optimal == 9);
  REQUIRE(oracle.all_failed == 1);
  REQUIRE(oracle.unique_wins == 5);   // records 2, 5, 6, 7, 10

  REQUIRE(base.gen_total == std::array<int, kGenCount>{3, 3, 2, 2});
  REQUIRE(base.gen_exact == std::array<int, kGenCount>{1, 0, 1, 2});
}

TEST_CASE("rule table wins cos x under the baseline") {
  ExprStore st;
  auto rec = label_record(parse("cos(x)", st), Generator::Fwd, "x");
  REQUIRE(rec.has_value());
  auto r = baseline_meta(*rec);
  REQUIRE(r.chosen == SubAlgorithmId::RuleTable);
  REQUIRE(r.attempts.size() == 1);
  REQUIRE(r.ratio == 1.0);
}

TEST_CASE("baseline is size blind on repeated quadratic denominators") {
  ExprStore st;
  auto rec = label_record(parse("1/(x^2+2)^3", st), Generator::Fwd, "x");
  REQUIRE(rec.has_value());
  // the cheap methods miss it, so the baseline reaches the rational pair and
  // takes the first of them regardless of output size
  REQUIRE(rec->outcomes[static_cast<size_t>(SubAlgorithmId::RuleTable)].status !=
          IntStatus::Success);
  REQUIRE(rec->outcomes[static_cast<size_t>(SubAlgorithmId::DerivDivides)].status !=
          IntStatus::Success);
  REQUIRE(rec->outcomes[static_cast<size_t>(SubAlgorithmId::PartialFractions)].status ==
          IntStatus::Success);
  REQUIRE(rec->outcomes[static_cast<size_t>(SubAlgorithmId::Hermite)].status ==
          IntStatus::Success);
  REQUIRE(rec->outcomes[static_cast<size_t>(SubAlgorithmId::Hermite)].size <
          rec->outcomes[static_cast<size_t>(SubAlgorithmId::PartialFractions)].size);

  auto base = baseline_meta(*rec);
  REQUIRE(base.chosen == SubAlgorithmId::PartialFractions);
  REQUIRE(base.ratio > 1.0);

  auto oracle = oracle_select(*rec);
  REQUIRE(oracle.chosen == SubAlgorithmId::Hermite);
  REQUIRE(oracle.ratio == 1.0);
}

TEST_CASE("parts only integrand exhausts the baseline order") {
  ExprStore st;
  auto rec = label_record(parse("x*exp(x)", st), Generator::Ibp, "x");
  REQUIRE(rec.has_value());
  for (int i = 0; i < kAlgCount; ++i) {
    bool ok = rec->outcomes[static_cast<size_t>(i)].status == IntStatus::Success;
    REQUIRE(ok == (i == static_cast<int>(SubAlgorithmId::Parts)));
  }
  auto r = baseline_meta(*rec);
  REQUIRE(r.chosen == SubAlgorithmId::Parts);
  REQUIRE(r.attempts.size() == 5);
  REQUIRE(r.outcome == IntStatus::Success);
  REQUIRE(r.ratio == 1.0);
}

TEST_CASE("anti oracle never lands on the optimum when sizes separate") {
  // two successes with different sizes on every record, prefer the larger
  std::vector<IntegrandRecord> recs = {
      mk(Generator::Fwd, {12, 10, -1, -1, -1}),
      mk(Generator::Bwd, {-1, 14, -1, 11, -1}),
      mk(Generator::Ibp, {-1, -1, 20, -1, 25}),
  };
  Strategy anti = [](const IntegrandRecord& rec) {
    std::array<double, kAlgCount> probs{};
    for (int i = 0; i < kAlgCount; ++i) {
      const auto& o = rec.outcomes[static_cast<size_t>(i)];
      probs[static_cast<size_t>(i)] =
          o.status == IntStatus::Success ? static_cast<double>(o.size) : 0.0;
    }
    return select_with_fallback(probs, rec);
  };
  auto rep = evaluate(anti, recs, "anti");
  REQUIRE(rep.exact_optimal == 0);
  REQUIRE(rep.all_failed == 0);
  REQUIRE(rep.total == 3);
}

TEST_CASE("report emission includes json table and bars") {
  auto reps = evaluate_compare(
      {{"oracle", Strategy(oracle_select)}, {"baseline", Strategy(baseline_meta)}}, fixture10());

  auto j = report_json(reps[1]);
  REQUIRE(j["strategy"] == "baseline");
  REQUIRE(j["total"] == 10);
  REQUIRE(j["exact_optimal"] == 4);
  REQUIRE(j["by_generator"]["FWD"]["total"] == 3);
  REQUIRE(j["by_generator"]["SUB"]["exact"] == 2);

  auto table = format_report_table(reps);
  REQUIRE(table.find("oracle") != std::string::npos);
  REQUIRE(table.find("baseline") != std::string::npos);
  REQUIRE(table.find("exact") != std::string::npos);

  auto bars = format_bar_data(reps);
  REQUIRE(bars.find("# oracle\n") != std::string::npos);
  REQUIRE(bars.find("exact_optimal\t9\n") != std::string::npos);
  REQUIRE(bars.find("exact_optimal\t4\n") != std::string::npos);
}
