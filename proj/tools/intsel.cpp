// Command surface for the integration pipeline: generate labeled corpora,
// train the two model kinds, evaluate them against the baseline and oracle,
// and reprint stored reports.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "intsel/pipeline.hpp"

using namespace intsel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonFlags {
  std::string config_path;
  bool have_seed = false;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string out_dir;
};

// config file first, then explicit flags on top
RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg;
  std::string path = f.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("INTSEL_CONFIG")) path = env;
  }
  if (!path.empty()) cfg = load_config(path);
  if (f.have_seed) cfg.seed = f.seed;
  if (f.workers > 0) cfg.workers = f.workers;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path,
                  "config file (default: $INTSEL_CONFIG when set, else built-in defaults)");
  cmd->add_option("--seed", f.seed, "override the run seed")->each([&](const std::string&) {
    f.have_seed = true;
  });
  cmd->add_option("--workers", f.workers, "override the worker count");
  cmd->add_option("--out", f.out_dir, "override the artifact directory");
}

void print_histogram(const CorpusStats& s) {
  std::uint64_t total = s.train_records + s.test_records;
  printf("records: %llu train, %llu test\n", (unsigned long long)s.train_records,
         (unsigned long long)s.test_records);
  printf("label frequency (share of records marked optimal):\n");
  for (int a = 0; a < kAlgCount; ++a) {
    double share = total ? 100.0 * (double)s.label_histogram[(size_t)a] / (double)total : 0.0;
    int bar = (int)(share / 2.0 + 0.5);
    printf("  %-16s %6llu  %5.1f%% %.*s\n", alg_name((SubAlgorithmId)a),
           (unsigned long long)s.label_histogram[(size_t)a], share, bar,
           "##################################################");
  }
  printf("labels per record:");
  for (int k = 0; k < kAlgCount; ++k)
    printf("  %dx:%llu", k + 1, (unsigned long long)s.labels_per_record[(size_t)k]);
  printf("\n");
}

int cmd_generate(const CommonFlags& f, bool overwrite) {
  RunConfig cfg = resolve_config(f);
  auto s = run_generate(cfg, overwrite);
  printf("config %s -> %s\n", s.config_hash.c_str(), cfg.out_dir.c_str());
  print_histogram(s.stats);
  printf("vocabulary: %d tokens\n", s.vocab_size);
  return kExitOk;
}

int cmd_train(const CommonFlags& f, const std::string& model) {
  RunConfig cfg = resolve_config(f);
  CellKind kind;
  if (model == "lstm")
    kind = CellKind::Sequence;
  else if (model == "treelstm")
    kind = CellKind::Tree;
  else
    throw config_error("train: model must be lstm or treelstm");
  auto s = run_train(cfg, kind);
  printf("trained %s (%d epochs, seed %llu)\n", model.c_str(), cfg.epochs,
         (unsigned long long)cfg.seed);
  for (int j = 0; j < kAlgCount; ++j) {
    const auto& curve = s.result.loss_curves[(size_t)j];
    printf("  %-16s loss %.4f -> %.4f  pos_weight %.2f\n", alg_name((SubAlgorithmId)j),
           curve.front(), curve.back(), s.result.pos_weight[(size_t)j]);
  }
  printf("checkpoint: %s\nloss curves: %s\n", s.checkpoint_path.c_str(), s.loss_path.c_str());
  return kExitOk;
}

int cmd_eval(const CommonFlags& f, const std::vector<std::string>& checkpoints) {
  RunConfig cfg = resolve_config(f);
  auto s = run_eval(cfg, checkpoints);
  printf("%s", format_report_table(s.reports).c_str());
  printf("reports: %s, %s, %s\n", cfg.report_path().c_str(), cfg.report_table_path().c_str(),
         cfg.report_bars_path().c_str());
  return kExitOk;
}

int cmd_report(const CommonFlags& f, bool bars) {
  RunConfig cfg = resolve_config(f);
  auto reports = load_report(cfg);
  printf("%s", format_report_table(reports).c_str());
  if (bars) printf("\n%s", format_bar_data(reports).c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"algorithm selection pipeline for symbolic integration"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f, rep_f;
  bool overwrite = false;
  std::string model;
  std::vector<std::string> checkpoints;
  bool bars = false;

  auto* gen = app.add_subcommand("generate", "sample, verify and label a corpus");
  add_common(gen, gen_f);
  gen->add_flag("--overwrite", overwrite, "replace existing corpus files");

  auto* tr = app.add_subcommand("train", "train one model kind on the generated corpus");
  add_common(tr, train_f);
  tr->add_option("--model", model, "lstm or treelstm")->required();

  auto* ev = app.add_subcommand("eval", "score checkpoints against baseline and oracle");
  add_common(ev, eval_f);
  ev->add_option("--checkpoint", checkpoints, "checkpoint files (default: both standard paths)");

  auto* rep = app.add_subcommand("report", "reprint the stored evaluation report");
  add_common(rep, rep_f);
  rep->add_flag("--bars", bars, "also print the bar chart data");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_generate(gen_f, overwrite);
    if (tr->parsed()) return cmd_train(train_f, model);
    if (ev->parsed()) return cmd_eval(eval_f, checkpoints);
    if (rep->parsed()) return cmd_report(rep_f, bars);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const config_error& e) {
    fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const numeric_error& e) {
    fprintf(stderr, "numeric abort: %s\n", e.what());
    return kExitNumeric;
  } catch (const data_error& e) {
    fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitOk;
}
