#pragma once
// Selection strategies over labeled records: probability-ranked choice with
// failure fallback, the fixed-priority baseline, the label oracle, and the
// scoring used to compare them. Everything reads stored outcomes; nothing
// here re-runs integration.

#include <algorithm>
#include <array>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "intsel/datagen.hpp"

namespace intsel {

struct SelectionResult {
  SubAlgorithmId chosen = SubAlgorithmId::RuleTable;
  std::vector<SubAlgorithmId> attempts;  // in the order tried, chosen last when successful
  IntStatus outcome = IntStatus::Failure;
  int achieved = -1;  // output dag size; -1 when nothing succeeded
  int optimal = -1;
  double ratio = 0.0;  // achieved/optimal, 0 when undefined
};

namespace detail {

inline SelectionResult try_in_order(const std::array<int, kAlgCount>& order,
                                    const IntegrandRecord& rec) {
  SelectionResult r;
  r.optimal = rec.optimal_size;
  for (int idx : order) {
    r.attempts.push_back(static_cast<SubAlgorithmId>(idx));
    const AlgOutcome& o = rec.outcomes[static_cast<size_t>(idx)];
    if (o.status == IntStatus::Success) {
      r.chosen = static_cast<SubAlgorithmId>(idx);
      r.outcome = IntStatus::Success;
      r.achieved = o.size;
      r.ratio = r.optimal > 0 ? static_cast<double>(r.achieved) / r.optimal : 0.0;
      return r;
    }
  }
  r.chosen = r.attempts.back();
  r.outcome = IntStatus::Failure;
  return r;
}

}  // namespace detail

// highest probability first; ties fall back to the fixed id order
inline SelectionResult select_with_fallback(const std::array<double, kAlgCount>& probs,
                                            const IntegrandRecord& rec) {
  std::array<int, kAlgCount> order{};
  for (int i = 0; i < kAlgCount; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)]; });
  return detail::try_in_order(order, rec);
}

// cheap pattern methods first, then the rational specialists, parts last
inline SelectionResult baseline_meta(const IntegrandRecord& rec) {
  static constexpr std::array<int, kAlgCount> order = {
      static_cast<int>(SubAlgorithmId::RuleTable), static_cast<int>(SubAlgorithmId::DerivDivides),
      static_cast<int>(SubAlgorithmId::PartialFractions), static_cast<int>(SubAlgorithmId::Hermite),
      static_cast<int>(SubAlgorithmId::Parts)};
  return detail::try_in_order(order, rec);
}

// picks a true label; exact by construction on labeled records
inline SelectionResult oracle_select(const IntegrandRecord& rec) {
  SelectionResult r;
  r.optimal = rec.optimal_size;
  for (int i = 0; i < kAlgCount; ++i) {
    if (!rec.labels[static_cast<size_t>(i)]) continue;
    r.attempts.push_back(static_cast<SubAlgorithmId>(i));
    r.chosen = static_cast<SubAlgorithmId>(i);
    r.outcome = IntStatus::Success;
    r.achieved = rec.outcomes[static_cast<size_t>(i)].size;
    r.ratio = r.optimal > 0 ? static_cast<double>(r.achieved) / r.optimal : 0.0;
    return r;
  }
  // no labels can only happen on malformed input; fall back to everything
  std::array<int, kAlgCount> order{};
  for (int i = 0; i < kAlgCount; ++i) order[static_cast<size_t>(i)] = i;
  return detail::try_in_order(order, rec);
}

using Strategy = std::function<SelectionResult(const IntegrandRecord&)>;

struct NamedStrategy {
  std::string name;
  Strategy fn;
};

struct EvalReport {
  std::string strategy;
  int total = 0;
  int exact_optimal = 0;   // ratio == 1
  int within_5pct = 0;     // ratio <= 1.05, includes exact
  int within_10pct = 0;    // ratio <= 1.10, includes the above
  int all_failed = 0;
  int unique_wins = 0;     // filled by comparative evaluation only
  std::array<int, kGenCount> gen_total{};
  std::array<int, kGenCount> gen_exact{};
};

inline EvalReport evaluate(const Strategy& fn, const std::vector<IntegrandRecord>& slice,
                           const std::string& name = "") {
  EvalReport rep;
  rep.strategy = name;
  rep.total = static_cast<int>(slice.size());
  for (const auto& rec : slice) {
    SelectionResult r = fn(rec);
    int g = static_cast<int>(rec.generator);
    rep.gen_total[static_cast<size_t>(g)]++;
    if (r.outcome != IntStatus::Success) {
      rep.all_failed++;
      continue;
    }
    if (r.ratio <= 1.0) {
      rep.exact_optimal++;
      rep.gen_exact[static_cast<size_t>(g)]++;
    }
    if (r.ratio <= 1.05) rep.within_5pct++;
    if (r.ratio <= 1.10) rep.within_10pct++;
  }
  return rep;
}

// scores every strategy and counts records where exactly one of them lands
// on the optimum
inline std::vector<EvalReport> evaluate_compare(const std::vector<NamedStrategy>& strategies,
                                                const std::vector<IntegrandRecord>& slice) {
  if (strategies.empty()) throw std::invalid_argument("evaluate_compare: no strategies");
  std::vector<EvalReport> reps;
  for (const auto& s : strategies) reps.push_back(evaluate(s.fn, slice, s.name));
  for (const auto& rec : slice) {
    int winners = 0, winner = -1;
    for (size_t si = 0; si < strategies.size(); ++si) {
      SelectionResult r = strategies[si].fn(rec);
      if (r.outcome == IntStatus::Success && r.ratio <= 1.0) {
        ++winners;
        winner = static_cast<int>(si);
      }
    }
    if (winners == 1) reps[static_cast<size_t>(winner)].unique_wins++;
  }
  return reps;
}

// ---- report emission ----

inline nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["strategy"] = r.strategy;
  j["total"] = r.total;
  j["exact_optimal"] = r.exact_optimal;
  j["within_5pct"] = r.within_5pct;
  j["within_10pct"] = r.within_10pct;
  j["all_failed"] = r.all_failed;
  j["unique_wins"] = r.unique_wins;
  nlohmann::ordered_json gens;
  for (int g = 0; g < kGenCount; ++g) {
    gens[gen_name(static_cast<Generator>(g))] = {{"total", r.gen_total[static_cast<size_t>(g)]},
                                                 {"exact", r.gen_exact[static_cast<size_t>(g)]}};
  }
  j["by_generator"] = gens;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.strategy = j.at("strategy").get<std::string>();
  r.total = j.at("total").get<int>();
  r.exact_optimal = j.at("exact_optimal").get<int>();
  r.within_5pct = j.at("within_5pct").get<int>();
  r.within_10pct = j.at("within_10pct").get<int>();
  r.all_failed = j.at("all_failed").get<int>();
  r.unique_wins = j.at("unique_wins").get<int>();
  const auto& gens = j.at("by_generator");
  for (int g = 0; g < kGenCount; ++g) {
    const auto& jg = gens.at(gen_name(static_cast<Generator>(g)));
    r.gen_total[static_cast<size_t>(g)] = jg.at("total").get<int>();
    r.gen_exact[static_cast<size_t>(g)] = jg.at("exact").get<int>();
  }
  return r;
}

inline std::string format_report_table(const std::vector<EvalReport>& reps) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %8s %8s %8s %8s %8s %8s\n", "strategy", "total",
                "exact", "w5pct", "w10pct", "failed", "uniq");
  out << line;
  for (const auto& r : reps) {
    std::snprintf(line, sizeof line, "%-12s %8d %8d %8d %8d %8d %8d\n", r.strategy.c_str(),
                  r.total, r.exact_optimal, r.within_5pct, r.within_10pct, r.all_failed,
                  r.unique_wins);
    out << line;
    for (int g = 0; g < kGenCount; ++g) {
      std::snprintf(line, sizeof line, "  %-10s %8d %8d\n", gen_name(static_cast<Generator>(g)),
                    r.gen_total[static_cast<size_t>(g)], r.gen_exact[static_cast<size_t>(g)]);
      out << line;
    }
  }
  return out.str();
}

// label<TAB>count rows, one strategy per block, for external plotting
inline std::string format_bar_data(const std::vector<EvalReport>& reps) {
  std::ostringstream out;
  for (const auto& r : reps) {
    out << "# " << r.strategy << "\n";
    out << "exact_optimal\t" << r.exact_optimal << "\n";
    out << "within_5pct\t" << r.within_5pct << "\n";
    out << "within_10pct\t" << r.within_10pct << "\n";
  }
  return out.str();
}

}  // namespace intsel
