#pragma once
// The three pipeline stages behind the command surface. Each stage reads and
// writes artifact files; provenance hashes tie them together so a stage
// refuses inputs produced under a different configuration.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "intsel/config.hpp"
#include "intsel/datagen.hpp"
#include "intsel/encode.hpp"
#include "intsel/nn.hpp"
#include "intsel/select.hpp"

namespace intsel {

inline std::vector<EncodedExample> encode_records(const std::vector<IntegrandRecord>& recs,
                                                  const Vocabulary& vocab) {
  ExprStore st;
  std::vector<EncodedExample> out;
  out.reserve(recs.size());
  for (const auto& r : recs) {
    Expr e = parse_prefix(r.normalized_prefix, st);
    EncodedExample ex;
    ex.seq = encode_sequence(e, vocab);
    ex.tree = encode_tree(e, vocab);
    ex.labels = r.labels;
    out.push_back(std::move(ex));
  }
  return out;
}

inline Vocabulary vocabulary_from_records(const std::vector<IntegrandRecord>& recs) {
  ExprStore st;
  std::vector<Expr> exprs;
  exprs.reserve(recs.size());
  for (const auto& r : recs) exprs.push_back(parse_prefix(r.normalized_prefix, st));
  return build_vocabulary(exprs);
}

struct GenerateSummary {
  std::string config_hash;
  CorpusStats stats;
  int vocab_size = 0;
};

inline GenerateSummary run_generate(const RunConfig& cfg, bool overwrite = false) {
  cfg.validate();
  namespace fs = std::filesystem;
  if (!overwrite && (fs::exists(cfg.corpus_train_path()) || fs::exists(cfg.corpus_test_path())))
    throw data_error("generate: corpus files already exist in " + cfg.out_dir +
                     " (pass the overwrite flag to replace them)");
  fs::create_directories(cfg.out_dir);
  CorpusConfig cc = cfg.corpus_config();
  cc.provenance = config_hash(cfg);
  auto res = build_corpus(cc);
  write_corpus_file(cfg.corpus_train_path(), res.train, "train", cc);
  write_corpus_file(cfg.corpus_test_path(), res.test, "test", cc);
  write_file(cfg.manifest_path(), corpus_manifest(cc, res.stats).dump(2) + "\n");
  Vocabulary vocab = vocabulary_from_records(res.train);
  save_vocabulary(vocab, cfg.vocab_path());
  GenerateSummary s;
  s.config_hash = cc.provenance;
  s.stats = res.stats;
  s.vocab_size = vocab.size();
  return s;
}

namespace detail {

inline CorpusFile load_split(const RunConfig& cfg, const std::string& path) {
  CorpusFile f;
  try {
    f = load_corpus_file(path);
  } catch (const std::exception& e) {
    throw data_error(std::string("corpus: ") + e.what());
  }
  if (f.config_hash != config_hash(cfg))
    throw data_error("corpus " + path + " was generated under config " + f.config_hash +
                     ", current config is " + config_hash(cfg));
  return f;
}

inline Vocabulary load_vocab_checked(const RunConfig& cfg) {
  try {
    return load_vocabulary(cfg.vocab_path());
  } catch (const std::exception& e) {
    throw data_error(std::string("vocabulary: ") + e.what());
  }
}

}  // namespace detail

struct TrainSummary {
  std::string checkpoint_path;
  std::string loss_path;
  TrainResult result;
};

inline TrainSummary run_train(const RunConfig& cfg, CellKind kind) {
  cfg.validate();
  CorpusFile train_file = detail::load_split(cfg, cfg.corpus_train_path());
  Vocabulary vocab = detail::load_vocab_checked(cfg);
  auto data = encode_records(train_file.records, vocab);
  BinaryRelevanceModel model = make_model(kind, cfg.nn_config(vocab.size()));
  TrainResult res = train(model, data, cfg.workers);
  save_checkpoint(model, vocabulary_hash(vocab), cfg.checkpoint_path(kind), config_hash(cfg));

  // one row per classifier and epoch
  std::string curves;
  for (int j = 0; j < kAlgCount; ++j)
    for (size_t e = 0; e < res.loss_curves[static_cast<size_t>(j)].size(); ++e) {
      char row[96];
      std::snprintf(row, sizeof row, "%s\t%zu\t%.10g\n", alg_name(static_cast<SubAlgorithmId>(j)),
                    e + 1, res.loss_curves[static_cast<size_t>(j)][e]);
      curves += row;
    }
  write_file(cfg.loss_path(kind), curves);

  TrainSummary s;
  s.checkpoint_path = cfg.checkpoint_path(kind);
  s.loss_path = cfg.loss_path(kind);
  s.result = std::move(res);
  return s;
}

struct EvalSummary {
  std::vector<EvalReport> reports;  // fixed row order: oracle, treelstm, lstm, baseline
};

inline EvalSummary run_eval(const RunConfig& cfg, std::vector<std::string> checkpoint_paths = {}) {
  cfg.validate();
  if (checkpoint_paths.empty())
    checkpoint_paths = {cfg.checkpoint_path(CellKind::Tree),
                        cfg.checkpoint_path(CellKind::Sequence)};
  CorpusFile test_file = detail::load_split(cfg, cfg.corpus_test_path());
  Vocabulary vocab = detail::load_vocab_checked(cfg);
  auto test_ex = encode_records(test_file.records, vocab);

  std::vector<BinaryRelevanceModel> models;
  for (const auto& path : checkpoint_paths) {
    try {
      std::ifstream in(path);
      if (!in) throw data_error("cannot open " + path);
      nlohmann::json j = nlohmann::json::parse(in);
      std::string prov = j.value("config_hash", "");
      if (prov != config_hash(cfg))
        throw data_error(path + " was trained under config " + (prov.empty() ? "<none>" : prov) +
                         ", current config is " + config_hash(cfg));
      models.push_back(load_checkpoint(path, vocabulary_hash(vocab)));
    } catch (const data_error&) {
      throw;
    } catch (const std::exception& e) {
      throw data_error(std::string("checkpoint ") + path + ": " + e.what());
    }
  }
  // tree rows come before sequence rows; duplicates of one kind are rejected
  std::stable_sort(models.begin(), models.end(), [](const auto& a, const auto& b) {
    return static_cast<int>(a.kind) > static_cast<int>(b.kind);
  });
  for (size_t i = 1; i < models.size(); ++i)
    if (models[i].kind == models[i - 1].kind)
      throw data_error("eval: two checkpoints of the same cell kind");

  const auto& records = test_file.records;
  std::vector<NamedStrategy> strategies;
  strategies.push_back({"oracle", Strategy(oracle_select)});
  for (const auto& m : models) {
    std::string name = m.kind == CellKind::Tree ? "treelstm" : "lstm";
    const BinaryRelevanceModel* mp = &m;
    strategies.push_back({name, [mp, &records, &test_ex](const IntegrandRecord& rec) {
                            size_t idx = static_cast<size_t>(&rec - records.data());
                            return select_with_fallback(predict(*mp, test_ex[idx]), rec);
                          }});
  }
  strategies.push_back({"baseline", Strategy(baseline_meta)});

  EvalSummary s;
  s.reports = evaluate_compare(strategies, records);

  nlohmann::ordered_json head;
  head["artifact"] = "eval_report";
  head["format_version"] = 1;
  head["config_hash"] = config_hash(cfg);
  head["test_records"] = records.size();
  std::string lines = head.dump() + "\n";
  for (const auto& r : s.reports) lines += report_json(r).dump() + "\n";
  write_file(cfg.report_path(), lines);
  write_file(cfg.report_table_path(), format_report_table(s.reports));
  write_file(cfg.report_bars_path(), format_bar_data(s.reports));
  return s;
}

// reread the line-delimited report container for display
inline std::vector<EvalReport> load_report(const RunConfig& cfg) {
  std::string text;
  try {
    text = read_file(cfg.report_path());
  } catch (const std::exception& e) {
    throw data_error(std::string("report: ") + e.what());
  }
  std::vector<EvalReport> out;
  size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (header) {
        if (j.value("artifact", "") != "eval_report")
          throw data_error(cfg.report_path() + ": not a report file");
        if (j.value("config_hash", "") != config_hash(cfg))
          throw data_error("report was produced under config " +
                           j.value("config_hash", std::string("<none>")) +
                           ", current config is " + config_hash(cfg));
        header = false;
        continue;
      }
      out.push_back(report_from_json(j));
    } catch (const data_error&) {
      throw;
    } catch (const std::exception& e) {
      throw data_error(std::string("report: ") + e.what());
    }
  }
  if (header) throw data_error(cfg.report_path() + ": empty report file");
  return out;
}

}  // namespace intsel
