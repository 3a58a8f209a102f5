#pragma once
// Run configuration: one JSON document drives corpus generation, training,
// and evaluation. The provenance hash covers every setting that can change
// an artifact's content, and deliberately excludes worker counts and output
// paths so the same experiment hashes the same everywhere it runs.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "intsel/datagen.hpp"
#include "intsel/nn.hpp"

namespace intsel {

struct RunConfig {
  std::uint64_t seed = 1;
  int workers = 1;

  // corpus
  int train_per_gen = 1500;
  int test_per_gen = 300;
  int max_ops = 11;
  double ratfun_bias = 0.50;
  double rat_template = 0.72;
  int sub_inner_ops = 5;
  int budget = kDefaultBudget;
  int node_cap = 200;

  // model; shared by both cell kinds so the comparison stays fair
  int d_emb = 32;
  int h1 = 64;
  int h2 = 32;
  int d_dense = 32;
  double dropout = 0.40;
  double lr = 1e-3;
  int epochs = 30;
  int batch = 32;

  // artifact locations, all relative to out_dir unless absolute
  std::string out_dir = "out";

  void validate() const {
    if (train_per_gen <= 0 || test_per_gen <= 0)
      throw config_error("config: per-generator quotas must be positive");
    if (budget <= 0) throw config_error("config: step budget must be positive");
    if (node_cap <= 0) throw config_error("config: node cap must be positive");
    if (max_ops <= 0) throw config_error("config: max_ops must be positive");
    if (sub_inner_ops <= 0) throw config_error("config: sub_inner_ops must be positive");
    if (ratfun_bias < 0 || ratfun_bias > 1 || rat_template < 0 || rat_template > 1)
      throw config_error("config: sampler fractions must lie in [0, 1]");
    if (workers < 1) throw config_error("config: workers must be at least 1");
    if (epochs <= 0 || batch <= 0) throw config_error("config: epochs and batch must be positive");
    if (d_emb <= 0 || h1 <= 0 || h2 <= 0 || d_dense <= 0)
      throw config_error("config: model dimensions must be positive");
    if (dropout < 0 || dropout >= 1) throw config_error("config: dropout must lie in [0, 1)");
    if (lr <= 0) throw config_error("config: learning rate must be positive");
    if (out_dir.empty()) throw config_error("config: out_dir must be set");
  }

  CorpusConfig corpus_config() const {
    CorpusConfig c;
    c.seed = seed;
    c.train_per_gen = train_per_gen;
    c.test_per_gen = test_per_gen;
    c.sampler.max_ops = max_ops;
    c.sampler.ratfun_bias = ratfun_bias;
    c.sampler.rat_template = rat_template;
    c.sub_inner_ops = sub_inner_ops;
    c.budget = budget;
    c.node_cap = node_cap;
    c.workers = workers;
    return c;
  }

  NNConfig nn_config(int vocab_size) const {
    NNConfig c;
    c.vocab = vocab_size;
    c.d_emb = d_emb;
    c.h1 = h1;
    c.h2 = h2;
    c.d_dense = d_dense;
    c.dropout = dropout;
    c.lr = lr;
    c.epochs = epochs;
    c.batch = batch;
    c.seed = seed;
    return c;
  }

  std::string path(const std::string& name) const {
    return out_dir + "/" + name;
  }
  std::string corpus_train_path() const { return path("corpus_train.jsonl"); }
  std::string corpus_test_path() const { return path("corpus_test.jsonl"); }
  std::string manifest_path() const { return path("corpus_manifest.json"); }
  std::string vocab_path() const { return path("vocab.txt"); }
  std::string checkpoint_path(CellKind k) const {
    return path(std::string(cell_name(k)) + "_checkpoint.json");
  }
  std::string loss_path(CellKind k) const { return path(std::string(cell_name(k)) + "_loss.tsv"); }
  std::string report_path() const { return path("report.jsonl"); }
  std::string report_table_path() const { return path("report.txt"); }
  std::string report_bars_path() const { return path("report_bars.tsv"); }
};

// settings that shape artifact content; workers and paths stay out on purpose
inline nlohmann::ordered_json config_provenance_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["train_per_gen"] = c.train_per_gen;
  j["test_per_gen"] = c.test_per_gen;
  j["max_ops"] = c.max_ops;
  j["ratfun_bias"] = c.ratfun_bias;
  j["rat_template"] = c.rat_template;
  j["sub_inner_ops"] = c.sub_inner_ops;
  j["budget"] = c.budget;
  j["node_cap"] = c.node_cap;
  j["d_emb"] = c.d_emb;
  j["h1"] = c.h1;
  j["h2"] = c.h2;
  j["d_dense"] = c.d_dense;
  j["dropout"] = c.dropout;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  return j;
}

inline std::string config_hash(const RunConfig& c) {
  return hex64(fnv1a(config_provenance_json(c).dump()));
}

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  auto j = config_provenance_json(c);
  j["workers"] = c.workers;
  j["out_dir"] = c.out_dir;
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.train_per_gen = j.value("train_per_gen", c.train_per_gen);
    c.test_per_gen = j.value("test_per_gen", c.test_per_gen);
    c.max_ops = j.value("max_ops", c.max_ops);
    c.ratfun_bias = j.value("ratfun_bias", c.ratfun_bias);
    c.rat_template = j.value("rat_template", c.rat_template);
    c.sub_inner_ops = j.value("sub_inner_ops", c.sub_inner_ops);
    c.budget = j.value("budget", c.budget);
    c.node_cap = j.value("node_cap", c.node_cap);
    c.d_emb = j.value("d_emb", c.d_emb);
    c.h1 = j.value("h1", c.h1);
    c.h2 = j.value("h2", c.h2);
    c.d_dense = j.value("d_dense", c.d_dense);
    c.dropout = j.value("dropout", c.dropout);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"seed",      "workers",   "train_per_gen", "test_per_gen",
                                  "max_ops",   "ratfun_bias", "rat_template", "sub_inner_ops",
                                  "budget",    "node_cap",  "d_emb",         "h1",
                                  "h2",        "d_dense",   "dropout",       "lr",
                                  "epochs",    "batch",     "out_dir"};
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw config_error("config: unknown key '" + it.key() + "'");
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: ") + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace intsel
