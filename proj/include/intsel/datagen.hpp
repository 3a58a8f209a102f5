#pragma once

// Dataset generation: sample random integrands, produce verified
// (integrand, antiderivative) pairs four different ways, normalize constants,
// deduplicate, and label each record by running the whole portfolio.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "intsel/calculus.hpp"
#include "intsel/expr.hpp"
#include "intsel/util.hpp"

namespace intsel {

enum class Generator : int { Fwd = 0, Bwd = 1, Ibp = 2, Sub = 3 };
inline constexpr int kGenCount = 4;
inline constexpr std::array<Generator, 4> kAllGens = {Generator::Fwd, Generator::Bwd,
                                                      Generator::Ibp, Generator::Sub};

inline const char* gen_name(Generator g) {
  static const char* names[] = {"FWD", "BWD", "IBP", "SUB"};
  return names[static_cast<int>(g)];
}
inline std::optional<Generator> gen_by_name(const std::string& s) {
  for (int i = 0; i < kGenCount; ++i)
    if (s == gen_name(static_cast<Generator>(i))) return static_cast<Generator>(i);
  return std::nullopt;
}

// ---- random expression sampler ----

struct SamplerParams {
  int max_ops = 11;            // internal operator budget; actual count drawn in [1, max_ops]
  double w_add = 0.30;         // operator class weights
  double w_mul = 0.30;
  double w_pow = 0.20;
  double w_func = 0.20;
  double leaf_var = 0.55;      // probability a leaf is the variable rather than an integer
  double ratfun_bias = 0.50;   // fraction of draws restricted to the function-free inventory,
                               // keeping rational integrands common enough to matter
  double rat_template = 0.72;   // fraction of those draws built as num/(Q1^a*Q2^b) templates;
                               // repeated composite denominators are where the rational
                               // methods disagree on output size
  std::string var = "x";
};

// Tally of operator-class draws, for checking the sampler against its weights.
struct SampleStats {
  std::array<std::uint64_t, 4> op_counts{};  // add, mul, pow, func
  std::uint64_t total() const { return op_counts[0] + op_counts[1] + op_counts[2] + op_counts[3]; }
};

namespace detail {

inline Expr sample_leaf(ExprStore& st, const SamplerParams& p, Rng& rng) {
  if (rng.chance(p.leaf_var)) return st.variable(p.var);
  long v = rng.range(1, 5);
  if (rng.chance(0.5)) v = -v;
  return st.integer(v);
}

inline Expr sample_ops(ExprStore& st, const SamplerParams& p, int ops, Rng& rng,
                       SampleStats* stats) {
  if (ops <= 0) return sample_leaf(st, p, rng);
  size_t cls = rng.weighted({p.w_add, p.w_mul, p.w_pow, p.w_func});
  if (stats) stats->op_counts[cls]++;
  switch (cls) {
    case 0:
    case 1: {
      int left = static_cast<int>(rng.below(static_cast<uint64_t>(ops)));
      Expr a = sample_ops(st, p, left, rng, stats);
      Expr b = sample_ops(st, p, ops - 1 - left, rng, stats);
      return cls == 0 ? st.add({a, b}) : st.mul({a, b});
    }
    case 2: {
      Expr base = sample_ops(st, p, ops - 1, rng, stats);
      static const long exps[] = {-3, -2, -1, 2, 3};
      return st.pow(base, exps[rng.below(5)]);
    }
    default: {
      auto f = static_cast<FuncSym>(rng.below(kFuncCount));
      return st.func(f, sample_ops(st, p, ops - 1, rng, stats));
    }
  }
}

// Structured rational draw. Generic op trees almost never land on repeated
// irreducible quadratic denominators, which is where the rational methods
// disagree on output size, so a slice of draws builds num/(x^2+c)^k
// directly; the rest use a looser num/(Q1^a*Q2^b) product for variety.
inline Expr sample_rational_template(ExprStore& st, const SamplerParams& p, Rng& rng) {
  Expr x = st.variable(p.var);
  auto coef = [&](bool allow_neg) {
    long v = rng.range(1, 5);
    if (allow_neg && rng.chance(0.5)) v = -v;
    return v;
  };
  if (rng.chance(0.7)) {
    // num over a repeated quadratic, sometimes with a linear cofactor. Long
    // numerators put distance between the denominator tokens and the string
    // tail, and the optional cofactor flips which rational method wins, so
    // the label hangs on structure rather than on any one nearby token.
    Expr num;
    switch (rng.below(6)) {
      case 0: num = st.integer(coef(true)); break;
      case 1:
        num = st.add({st.integer(coef(true)), st.mul({st.integer(coef(true)), st.pow(x, 2)})});
        break;
      case 2:
        num = st.add({st.integer(coef(true)), st.mul({st.integer(coef(true)), x})});
        break;
      default: {
        std::vector<Expr> ts;
        int terms = static_cast<int>(rng.range(4, 8));
        for (int t = 0; t < terms; ++t) {
          long e = rng.range(0, 8);
          ts.push_back(e == 0 ? st.integer(coef(true))
                              : st.mul({st.integer(coef(true)), st.pow(x, e)}));
        }
        num = st.add(ts);
        break;
      }
    }
    // k = 1 draws keep the exponent honest: with no first-power contrast the
    // repeated-factor cue would collapse to "template seen at all"
    static const long ks[] = {1, 1, 2, 3, 3, 4, 4, 5};
    Expr den = st.pow(st.add({st.pow(x, 2), st.integer(coef(false))}), ks[rng.below(8)]);
    if (rng.chance(0.25)) den = st.mul({den, st.add({x, st.integer(coef(false))})});
    return st.div(num, den);
  }
  bool rich = p.max_ops >= 6;
  std::vector<Expr> nterms;
  int terms = rich ? 1 + static_cast<int>(rng.below(2)) : 1;
  for (int t = 0; t < terms; ++t) {
    Expr mono = st.integer(coef(true));
    switch (rng.below(3)) {
      case 1: mono = st.mul({mono, x}); break;
      case 2: mono = st.mul({mono, st.pow(x, 2)}); break;
      default: break;
    }
    nterms.push_back(mono);
  }
  Expr num = nterms.size() == 1 ? nterms[0] : st.add(nterms);
  int nf = rich ? 1 + static_cast<int>(rng.below(2)) : 1;
  std::vector<Expr> dfac;
  for (int i = 0; i < nf; ++i) {
    Expr base;
    switch (rng.below(3)) {
      case 0: base = x; break;
      case 1: base = st.add({x, st.integer(coef(true))}); break;
      default: base = st.add({st.pow(x, 2), st.integer(coef(false))}); break;
    }
    static const long exps[] = {1, 2, 2, 3};
    long e = exps[rng.below(4)];
    dfac.push_back(e == 1 ? base : st.pow(base, e));
  }
  Expr den = dfac.size() == 1 ? dfac[0] : st.mul(dfac);
  return st.div(num, den);
}

}  // namespace detail

inline Expr sample_random_expr(ExprStore& st, const SamplerParams& p, Rng& rng,
                               SampleStats* stats = nullptr) {
  if (p.max_ops < 1) throw std::invalid_argument("sample_random_expr: max_ops must be >= 1");
  int target = static_cast<int>(rng.range(1, p.max_ops));
  if (p.ratfun_bias > 0.0 && rng.chance(p.ratfun_bias)) {
    if (p.rat_template > 0.0 && rng.chance(p.rat_template))
      return detail::sample_rational_template(st, p, rng);
    SamplerParams q = p;
    q.w_func = 0.0;
    return detail::sample_ops(st, q, target, rng, stats);
  }
  return detail::sample_ops(st, p, target, rng, stats);
}

// ---- pair generators ----

struct GeneratedPair {
  Expr integrand;
  Expr antiderivative;
  Generator generator;
  std::uint64_t seed = 0;
};

namespace detail {

// First portfolio member that succeeds and whose output re-verifies cleanly.
inline std::optional<Expr> portfolio_first(Expr e, const std::string& var, int budget) {
  for (SubAlgorithmId alg : kAllAlgs) {
    IntegrationOutcome o = integrate_with(alg, e, var, budget);
    if (o.status != IntStatus::Success) continue;
    if (verify_pair(e, *o.output, var) == VerifyResult::Pass) return o.output;
  }
  return std::nullopt;
}

}  // namespace detail

// FWD: sample f, integrate it with the portfolio, keep (f, F).
inline std::optional<GeneratedPair> gen_fwd(ExprStore& st, const SamplerParams& p, int budget,
                                            int node_cap, Rng& rng, std::uint64_t seed = 0) {
  Expr f = sample_random_expr(st, p, rng);
  if (tree_size(f) > static_cast<uint64_t>(node_cap)) return std::nullopt;
  auto F = detail::portfolio_first(f, p.var, budget);
  if (!F) return std::nullopt;
  return GeneratedPair{f, *F, Generator::Fwd, seed};
}

// BWD: sample f, differentiate, keep (f', f). Retries internally rather than
// skipping; the fallback pair is exact regardless.
inline GeneratedPair gen_bwd(ExprStore& st, const SamplerParams& p, int node_cap, Rng& rng,
                             std::uint64_t seed = 0) {
  for (int tries = 0; tries < 200; ++tries) {
    Expr f = sample_random_expr(st, p, rng);
    Expr fp = differentiate(f, p.var);
    if (tree_size(fp) > static_cast<uint64_t>(node_cap)) continue;
    if (verify_pair(fp, f, p.var) != VerifyResult::Pass) continue;
    return GeneratedPair{fp, f, Generator::Bwd, seed};
  }
  Expr f = st.variable(p.var);
  return GeneratedPair{differentiate(f, p.var), f, Generator::Bwd, seed};
}

// IBP: sample f and g; integrand f*g' has antiderivative f*g - int(f'g) when
// the correction integral is known to the portfolio.
inline std::optional<GeneratedPair> gen_ibp(ExprStore& st, const SamplerParams& p, int budget,
                                            int node_cap, Rng& rng, std::uint64_t seed = 0) {
  Expr f = sample_random_expr(st, p, rng);
  Expr g = sample_random_expr(st, p, rng);
  Expr integrand = st.mul({f, differentiate(g, p.var)});
  if (tree_size(integrand) > static_cast<uint64_t>(node_cap)) return std::nullopt;
  Expr corr = st.mul({differentiate(f, p.var), g});
  auto Ft = detail::portfolio_first(corr, p.var, budget);
  if (!Ft) return std::nullopt;
  Expr F = st.sub(st.mul({f, g}), *Ft);
  if (verify_pair(integrand, F, p.var) != VerifyResult::Pass) return std::nullopt;
  return GeneratedPair{integrand, F, Generator::Ibp, seed};
}

// SUB: draw (f, F) from the pool, substitute an inner expression g, keep
// (f(g)*g', F(g)). Pool entries are exchanged as prefix serializations so each
// worker can run against its own store.
inline std::optional<GeneratedPair> gen_sub(ExprStore& st,
                                            const std::vector<std::pair<std::string, std::string>>& pool,
                                            const SamplerParams& inner, int node_cap, Rng& rng,
                                            std::uint64_t seed = 0) {
  if (pool.empty()) throw std::invalid_argument("gen_sub: empty pool");
  const auto& [fs, Fs] = pool[rng.below(pool.size())];
  Expr f = parse_prefix(fs, st);
  Expr F = parse_prefix(Fs, st);
  Expr g = st.variable(inner.var);
  for (int tries = 0; tries < 50; ++tries) {
    Expr cand = sample_random_expr(st, inner, rng);
    if (free_of(cand, inner.var)) continue;
    g = cand;
    break;
  }
  Expr integrand = st.mul({substitute(f, inner.var, g), differentiate(g, inner.var)});
  if (tree_size(integrand) > static_cast<uint64_t>(node_cap)) return std::nullopt;
  Expr Fg = substitute(F, inner.var, g);
  if (verify_pair(integrand, Fg, inner.var) != VerifyResult::Pass) return std::nullopt;
  return GeneratedPair{integrand, Fg, Generator::Sub, seed};
}

// ---- constant normalization ----

// Integers in [-2, 2] survive; other integers collapse to CONST (one digit),
// CONST2 (two digits), or CONST3 (longer), sign discarded. The rebuild interns
// the exact shape without re-canonicalizing, so the map is idempotent.
inline Expr normalize_constants(Expr e) {
  ExprStore& st = *e.store;
  std::unordered_map<NodeId, NodeId> memo;
  for (NodeId id : subexpressions(e)) {
    const Node& n = st.node(id);
    switch (n.kind) {
      case Kind::Integer: {
        BigInt a = n.ival < 0 ? BigInt(-n.ival) : n.ival;
        if (a <= 2) {
          memo[id] = id;
        } else {
          int level = a < 10 ? 1 : (a < 100 ? 2 : 3);
          memo[id] = st.constsym(level).id;
        }
        break;
      }
      case Kind::ConstSym:
      case Kind::Variable:
        memo[id] = id;
        break;
      default: {
        std::vector<NodeId> kids;
        kids.reserve(n.kids.size());
        bool changed = false;
        for (NodeId k : n.kids) {
          NodeId m = memo.at(k);
          changed |= (m != k);
          kids.push_back(m);
        }
        memo[id] = changed ? st.raw(n.kind, std::move(kids), n.func).id : id;
        break;
      }
    }
  }
  return Expr(&st, memo.at(e.id));
}

// ---- labeled records ----

struct AlgOutcome {
  IntStatus status = IntStatus::Failure;
  int size = 0;                // dag size of the output, 0 unless Success
  std::string output_prefix;   // empty unless Success
};

struct IntegrandRecord {
  std::uint64_t id = 0;
  Generator generator = Generator::Fwd;
  std::string integrand_prefix;  // canonical form
  std::string integrand_infix;
  std::array<AlgOutcome, kAlgCount> outcomes;
  std::array<std::uint8_t, kAlgCount> labels{};
  int optimal_size = 0;
  std::string normalized_prefix;  // dedup key; recomputed on load, not serialized
};

inline std::string normalized_key(Expr integrand) {
  return serialize_prefix(normalize_constants(integrand));
}

// Run every sub-algorithm, mark the minimal-size successes. Records where
// nothing succeeds are dropped (nullopt).
inline std::optional<IntegrandRecord> label_record(Expr integrand, Generator gen,
                                                   const std::string& var,
                                                   int budget = kDefaultBudget) {
  auto outs = run_portfolio(integrand, var, budget);
  int best = 0;
  bool any = false;
  for (const auto& o : outs) {
    if (o.status != IntStatus::Success) continue;
    if (!any || o.size < best) best = o.size;
    any = true;
  }
  if (!any) return std::nullopt;
  IntegrandRecord r;
  r.generator = gen;
  r.integrand_prefix = serialize_prefix(integrand);
  r.integrand_infix = print_infix(integrand);
  for (int j = 0; j < kAlgCount; ++j) {
    const auto& o = outs[static_cast<size_t>(j)];
    auto& a = r.outcomes[static_cast<size_t>(j)];
    a.status = o.status;
    if (o.status == IntStatus::Success) {
      a.size = o.size;
      a.output_prefix = serialize_prefix(*o.output);
    }
    r.labels[static_cast<size_t>(j)] =
        (o.status == IntStatus::Success && o.size == best) ? 1 : 0;
  }
  r.optimal_size = best;
  r.normalized_prefix = normalized_key(integrand);
  return r;
}

// Keep the first record for each normalized serialization.
inline std::vector<IntegrandRecord> dedup(const std::vector<IntegrandRecord>& records) {
  std::vector<IntegrandRecord> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.normalized_prefix).second) out.push_back(r);
  return out;
}

// ---- corpus build ----

struct CorpusConfig {
  std::uint64_t seed = 1;
  int train_per_gen = 1500;
  int test_per_gen = 300;
  SamplerParams sampler;
  int sub_inner_ops = 5;       // operator cap for the inner substitution expression
  int budget = kDefaultBudget;
  int node_cap = 200;
  int workers = 1;
  std::string provenance;      // config hash echoed into every emitted file
};

struct CorpusStats {
  std::array<std::uint64_t, kGenCount> candidates{};
  std::array<std::uint64_t, kGenCount> skips{};
  std::uint64_t collisions = 0;
  std::uint64_t drops = 0;
  std::array<std::uint64_t, kAlgCount> label_histogram{};
  std::array<std::uint64_t, kAlgCount> labels_per_record{};  // index k: records with k+1 labels
  std::uint64_t train_records = 0;
  std::uint64_t test_records = 0;
};

namespace detail {

struct RawPair {
  std::string integrand;
  std::string antiderivative;
};

// Generate candidates index-by-index (parallel), then claim dedup keys and
// label survivors (labeling parallel, claiming sequential). The candidate
// schedule depends only on the config, so worker count cannot change output.
class CorpusBuilder {
 public:
  CorpusBuilder(const CorpusConfig& cfg, CorpusStats& stats) : cfg_(cfg), stats_(stats) {}

  std::vector<IntegrandRecord> run_generator(Generator gen,
                                             const std::vector<std::pair<std::string, std::string>>& pool,
                                             std::vector<std::pair<std::string, std::string>>* pool_out) {
    const int quota = cfg_.train_per_gen + cfg_.test_per_gen;
    const auto gi = static_cast<size_t>(gen);
    std::vector<IntegrandRecord> accepted;
    std::uint64_t next_index = 0;
    int stall_rounds = 0;
    while (static_cast<int>(accepted.size()) < quota) {
      int missing = quota - static_cast<int>(accepted.size());
      size_t batch = static_cast<size_t>(missing) * 2 + 64;
      std::vector<std::optional<RawPair>> raw(batch);
      parallel_for(batch, cfg_.workers, [&](size_t i) {
        std::uint64_t index = next_index + i;
        ExprStore st;
        Rng rng = Rng::derive(cfg_.seed, 101 + gi, index);
        std::optional<GeneratedPair> p;
        switch (gen) {
          case Generator::Fwd:
            p = gen_fwd(st, cfg_.sampler, cfg_.budget, cfg_.node_cap, rng, index);
            break;
          case Generator::Bwd:
            p = gen_bwd(st, cfg_.sampler, cfg_.node_cap, rng, index);
            break;
          case Generator::Ibp:
            p = gen_ibp(st, cfg_.sampler, cfg_.budget, cfg_.node_cap, rng, index);
            break;
          case Generator::Sub: {
            SamplerParams inner = cfg_.sampler;
            inner.max_ops = cfg_.sub_inner_ops;
            p = gen_sub(st, pool, inner, cfg_.node_cap, rng, index);
            break;
          }
        }
        if (p)
          raw[i] = RawPair{serialize_prefix(p->integrand), serialize_prefix(p->antiderivative)};
      });
      next_index += batch;
      stats_.candidates[gi] += batch;

      // sequential: dedup claims in candidate order
      std::vector<RawPair> claimed;
      for (auto& r : raw) {
        if (!r) {
          stats_.skips[gi]++;
          continue;
        }
        ExprStore st;
        std::string key = normalized_key(parse_prefix(r->integrand, st));
        if (!claimed_.insert(key).second) {
          stats_.collisions++;
          continue;
        }
        claimed.push_back(std::move(*r));
      }

      // parallel: label claimed candidates
      std::vector<std::optional<IntegrandRecord>> labeled(claimed.size());
      parallel_for(claimed.size(), cfg_.workers, [&](size_t i) {
        ExprStore st;
        Expr e = parse_prefix(claimed[i].integrand, st);
        labeled[i] = label_record(e, gen, cfg_.sampler.var, cfg_.budget);
      });

      // sequential: accept in order until the quota is filled
      for (size_t i = 0; i < labeled.size(); ++i) {
        if (!labeled[i]) {
          stats_.drops++;
          continue;
        }
        if (static_cast<int>(accepted.size()) >= quota) break;
        accepted.push_back(std::move(*labeled[i]));
        if (pool_out) pool_out->emplace_back(claimed[i].integrand, claimed[i].antiderivative);
      }

      if (claimed.empty()) {
        if (++stall_rounds > 50)
          throw std::runtime_error(std::string("corpus build stalled on generator ") +
                                   gen_name(gen));
      } else {
        stall_rounds = 0;
      }
    }
    return accepted;
  }

 private:
  const CorpusConfig& cfg_;
  CorpusStats& stats_;
  std::unordered_set<std::string> claimed_;
};

inline nlohmann::ordered_json record_to_json(const IntegrandRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["generator"] = gen_name(r.generator);
  j["integrand_prefix"] = r.integrand_prefix;
  j["integrand_infix"] = r.integrand_infix;
  nlohmann::ordered_json outs;
  for (int a = 0; a < kAlgCount; ++a) {
    const auto& o = r.outcomes[static_cast<size_t>(a)];
    nlohmann::ordered_json jo;
    jo["status"] = o.status == IntStatus::Success
                       ? "success"
                       : (o.status == IntStatus::Failure ? "failure" : "budget_exceeded");
    jo["size"] = o.size;
    jo["output_prefix"] = o.output_prefix;
    outs[alg_name(static_cast<SubAlgorithmId>(a))] = std::move(jo);
  }
  j["outcomes"] = std::move(outs);
  j["labels"] = r.labels;
  j["optimal_size"] = r.optimal_size;
  return j;
}

inline IntegrandRecord record_from_json(const nlohmann::json& j) {
  IntegrandRecord r;
  r.id = j.at("id").get<std::uint64_t>();
  auto g = gen_by_name(j.at("generator").get<std::string>());
  if (!g) throw std::runtime_error("corpus record: unknown generator");
  r.generator = *g;
  r.integrand_prefix = j.at("integrand_prefix").get<std::string>();
  r.integrand_infix = j.at("integrand_infix").get<std::string>();
  const auto& outs = j.at("outcomes");
  for (int a = 0; a < kAlgCount; ++a) {
    const auto& jo = outs.at(alg_name(static_cast<SubAlgorithmId>(a)));
    auto& o = r.outcomes[static_cast<size_t>(a)];
    std::string s = jo.at("status").get<std::string>();
    o.status = s == "success" ? IntStatus::Success
                              : (s == "failure" ? IntStatus::Failure : IntStatus::BudgetExceeded);
    o.size = jo.at("size").get<int>();
    o.output_prefix = jo.at("output_prefix").get<std::string>();
  }
  auto labels = j.at("labels").get<std::vector<int>>();
  if (labels.size() != kAlgCount) throw std::runtime_error("corpus record: bad label vector");
  for (int a = 0; a < kAlgCount; ++a)
    r.labels[static_cast<size_t>(a)] = static_cast<std::uint8_t>(labels[static_cast<size_t>(a)]);
  r.optimal_size = j.at("optimal_size").get<int>();
  ExprStore st;
  r.normalized_prefix = normalized_key(parse_prefix(r.integrand_prefix, st));
  return r;
}

}  // namespace detail

// One corpus file: a header line carrying provenance, then one record per line.
inline void write_corpus_file(const std::string& path, const std::vector<IntegrandRecord>& records,
                              const std::string& split, const CorpusConfig& cfg) {
  std::string out;
  nlohmann::ordered_json head;
  head["artifact"] = "corpus";
  head["format_version"] = 1;
  head["split"] = split;
  head["seed"] = cfg.seed;
  head["config_hash"] = cfg.provenance;
  head["records"] = records.size();
  out += head.dump();
  out += '\n';
  for (const auto& r : records) {
    out += detail::record_to_json(r).dump();
    out += '\n';
  }
  write_file(path, out);
}

struct CorpusFile {
  std::string split;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<IntegrandRecord> records;
};

inline CorpusFile load_corpus_file(const std::string& path) {
  std::string text = read_file(path);
  CorpusFile out;
  size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (header) {
      if (j.value("artifact", "") != "corpus")
        throw std::runtime_error(path + ": not a corpus file");
      out.split = j.at("split").get<std::string>();
      out.seed = j.at("seed").get<std::uint64_t>();
      out.config_hash = j.at("config_hash").get<std::string>();
      header = false;
      continue;
    }
    out.records.push_back(detail::record_from_json(j));
  }
  if (header) throw std::runtime_error(path + ": empty corpus file");
  return out;
}

struct CorpusResult {
  std::vector<IntegrandRecord> train;
  std::vector<IntegrandRecord> test;
  CorpusStats stats;
};

// Build the full corpus: fill each generator quota (FWD and BWD first so the
// SUB pool exists), dedup across the union, split per generator into
// train/test prefixes.
inline CorpusResult build_corpus(const CorpusConfig& cfg) {
  if (cfg.train_per_gen <= 0 || cfg.test_per_gen < 0)
    throw std::invalid_argument("build_corpus: per-generator quotas must be positive");
  if (cfg.budget <= 0) throw std::invalid_argument("build_corpus: budget must be positive");
  CorpusResult res;
  detail::CorpusBuilder builder(cfg, res.stats);
  std::vector<std::pair<std::string, std::string>> pool;
  std::array<std::vector<IntegrandRecord>, kGenCount> per_gen;
  per_gen[0] = builder.run_generator(Generator::Fwd, {}, &pool);
  per_gen[1] = builder.run_generator(Generator::Bwd, {}, &pool);
  per_gen[2] = builder.run_generator(Generator::Ibp, {}, nullptr);
  per_gen[3] = builder.run_generator(Generator::Sub, pool, nullptr);
  std::uint64_t id = 0;
  for (auto& recs : per_gen)
    for (size_t i = 0; i < recs.size(); ++i) {
      auto& dest = static_cast<int>(i) < cfg.train_per_gen ? res.train : res.test;
      recs[i].id = id++;
      dest.push_back(std::move(recs[i]));
    }
  for (const auto* split : {&res.train, &res.test})
    for (const auto& r : *split) {
      int nlab = 0;
      for (int a = 0; a < kAlgCount; ++a)
        if (r.labels[static_cast<size_t>(a)]) {
          res.stats.label_histogram[static_cast<size_t>(a)]++;
          nlab++;
        }
      res.stats.labels_per_record[static_cast<size_t>(nlab - 1)]++;
    }
  res.stats.train_records = res.train.size();
  res.stats.test_records = res.test.size();
  // The whole task degenerates if the algorithms rarely disagree; refuse to
  // emit a corpus where fewer than 30% of records show any outcome spread.
  std::uint64_t disagree = 0, total = 0;
  for (const auto* split : {&res.train, &res.test})
    for (const auto& r : *split) {
      total++;
      for (int a = 1; a < kAlgCount; ++a)
        if (r.outcomes[static_cast<size_t>(a)].status != r.outcomes[0].status ||
            r.outcomes[static_cast<size_t>(a)].size != r.outcomes[0].size) {
          disagree++;
          break;
        }
    }
  if (total > 0 && disagree * 10 < total * 3)
    throw std::runtime_error("build_corpus: portfolio disagreement below 30%");
  return res;
}

inline nlohmann::ordered_json corpus_manifest(const CorpusConfig& cfg, const CorpusStats& s) {
  nlohmann::ordered_json m;
  m["artifact"] = "corpus_manifest";
  m["config_hash"] = cfg.provenance;
  m["seed"] = cfg.seed;
  m["quotas"]["train_per_generator"] = cfg.train_per_gen;
  m["quotas"]["test_per_generator"] = cfg.test_per_gen;
  m["sampler"]["max_ops"] = cfg.sampler.max_ops;
  m["sampler"]["node_cap"] = cfg.node_cap;
  m["budget"] = cfg.budget;
  for (int g = 0; g < kGenCount; ++g) {
    auto& jg = m["generators"][gen_name(static_cast<Generator>(g))];
    jg["candidates"] = s.candidates[static_cast<size_t>(g)];
    jg["skips"] = s.skips[static_cast<size_t>(g)];
  }
  m["dedup_collisions"] = s.collisions;
  m["drops"] = s.drops;
  for (int a = 0; a < kAlgCount; ++a)
    m["label_histogram"][alg_name(static_cast<SubAlgorithmId>(a))] =
        s.label_histogram[static_cast<size_t>(a)];
  m["labels_per_record"] = s.labels_per_record;
  m["train_records"] = s.train_records;
  m["test_records"] = s.test_records;
  return m;
}

}  // namespace intsel
