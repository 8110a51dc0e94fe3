// adamrc: command-line driver for the adaptation workflow.
//
//   adamrc prepare        annotate corpora, build the vocabulary
//   adamrc train-qg       train the question generator on source data
//   adamrc gen-questions  build T_gen for unlabeled target passages
//   adamrc train-source   train the source-only reader (theta^s)
//   adamrc adapt          adversarial adaptation (theta*)
//   adamrc eval           EM/F1 on the target dev set
//   adamrc diagnose       feature KL, domain probe, 2-D projection
//   adamrc experiment     all of the above in memory, for several seeds
//
// Exit codes: 0 ok, 2 usage or missing input, 3 divergence.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "adamrc/adversary.hpp"
#include "adamrc/checkpoint.hpp"
#include "adamrc/config.hpp"
#include "adamrc/corpus.hpp"
#include "adamrc/diagnostics.hpp"
#include "adamrc/io.hpp"
#include "adamrc/metrics.hpp"
#include "adamrc/mrc.hpp"
#include "adamrc/pipeline.hpp"
#include "adamrc/qgen.hpp"
#include "adamrc/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace adamrc;
using nlohmann::json;

namespace {

// Missing inputs or prerequisites: exit code 2.
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config_path;
  std::string out;
  std::vector<std::string> sets;
  std::optional<int> ks, kt;
  std::optional<double> lambda_gamma, lr, dropout;
  std::optional<std::uint64_t> seed;
  std::string log_level = "info";
};

struct Paths {
  fs::path root;
  fs::path data() const { return root / "data"; }
  fs::path passages() const { return data() / "passages.jsonl"; }
  fs::path target_unlabeled() const { return data() / "target_passages.jsonl"; }
  fs::path split(const std::string& name) const { return data() / (name + ".jsonl"); }
  fs::path fingerprint() const { return data() / "fingerprint.txt"; }
  fs::path vocab() const { return root / "vocab.json"; }
  fs::path qgen() const { return root / "qgen.ckpt"; }
  fs::path tgen() const { return data() / "tgen.jsonl"; }
  fs::path theta_s() const { return root / "theta_s.ckpt"; }
  fs::path theta_star() const { return root / "theta_star.ckpt"; }
};

config::RunConfig resolve(const Flags& f) {
  config::RunConfig cfg;
  if (const char* env = std::getenv("ADAMRC_SEED"); env && *env) cfg.set("run.seed", env);
  if (!f.config_path.empty()) {
    if (!fs::exists(f.config_path)) throw MissingInput("config file not found: " + f.config_path);
    config::apply_file(cfg, f.config_path);
  }
  for (const std::string& s : f.sets) config::apply_override(cfg, s);
  if (f.ks) cfg.train.k_s = *f.ks;
  if (f.kt) cfg.train.k_t = *f.kt;
  if (f.lambda_gamma) cfg.train.lambda_gamma = *f.lambda_gamma;
  if (f.lr) cfg.train.learning_rate = *f.lr;
  if (f.dropout) cfg.train.dropout = *f.dropout;
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  cfg.validate();
  return cfg;
}

void snapshot_config(const config::RunConfig& cfg, const std::string& command) {
  io::write_file_atomic(fs::path(cfg.out_dir) / "config" / (command + ".cfg"), cfg.to_text());
}

void require(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) throw MissingInput("missing " + p.string() + " (run `adamrc " + producer + "` first)");
}

void write_json(const fs::path& p, const json& j) { io::write_file_atomic(p, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Prepared data

struct Prepared {
  std::vector<corpus::PassagePtr> passages, target_passages;
  std::vector<corpus::QAExample> source_train, source_dev, target_train, target_dev;
  corpus::Vocabulary vocab;
};

Prepared load_prepared(const Paths& p) {
  require(p.fingerprint(), "prepare");
  Prepared d;
  d.passages = corpus::read_passages_jsonl(p.passages());
  d.target_passages = corpus::read_passages_jsonl(p.target_unlabeled());
  // Examples must share passage objects with the unlabeled list.
  std::vector<corpus::PassagePtr> all = d.target_passages;
  std::set<std::string> ids;
  for (const auto& x : all) ids.insert(x->id);
  for (const auto& x : d.passages)
    if (!ids.count(x->id)) all.push_back(x);
  d.passages = all;
  d.source_train = corpus::read_examples_jsonl(p.split("source_train"), all);
  d.source_dev = corpus::read_examples_jsonl(p.split("source_dev"), all);
  d.target_train = corpus::read_examples_jsonl(p.split("target_train"), all);
  d.target_dev = corpus::read_examples_jsonl(p.split("target_dev"), all);
  d.vocab = corpus::read_vocab(p.vocab());
  return d;
}

std::string input_fingerprint(const config::RunConfig& cfg) {
  std::ostringstream s;
  // Data-relevant settings, then input file contents.
  std::istringstream lines(cfg.to_text());
  for (std::string line; std::getline(lines, line);)
    if (line.rfind("data.", 0) == 0 || line.rfind("vocab.", 0) == 0 || line.rfind("run.seed", 0) == 0)
      s << line << '\n';
  for (const std::string* path : {&cfg.source_train, &cfg.source_dev, &cfg.target_train, &cfg.target_dev,
                                  &cfg.embeddings}) {
    if (path->empty()) continue;
    const std::string content = io::read_file(*path);
    s << *path << ' ' << content.size() << ' ' << std::hash<std::string>{}(content) << '\n';
  }
  return s.str();
}

// ---------------------------------------------------------------------------
// Commands

int cmd_prepare(const config::RunConfig& cfg) {
  const Paths p{cfg.out_dir};
  if (cfg.mode == "squad")
    for (const std::string* path : {&cfg.source_train, &cfg.target_train, &cfg.source_dev, &cfg.target_dev})
      if (!path->empty() && !fs::exists(*path)) throw MissingInput("input not found: " + *path);
  if (!cfg.embeddings.empty() && !fs::exists(cfg.embeddings))
    throw MissingInput("embedding file not found: " + cfg.embeddings);
  const std::string fp = input_fingerprint(cfg);
  if (fs::exists(p.fingerprint()) && io::read_file(p.fingerprint()) == fp) {
    std::cout << "prepare: inputs unchanged, reusing cached corpora in " << p.data() << "\n";
    return 0;
  }
  const pipeline::Datasets d = pipeline::load_datasets(cfg);
  const corpus::Vocabulary vocab = pipeline::build_run_vocab(d, cfg);

  std::vector<corpus::PassagePtr> all;
  std::set<const corpus::AnnotatedPassage*> seen;
  std::set<std::string> ids;
  const auto add = [&](const corpus::PassagePtr& x) {
    if (!seen.insert(x.get()).second) return;
    if (!ids.insert(x->id).second) throw std::runtime_error("duplicate passage id '" + x->id + "' across inputs");
    all.push_back(x);
  };
  for (const auto& x : d.source_passages) add(x);
  for (const auto& x : d.target_passages) add(x);
  for (const auto* set : {&d.source_train, &d.source_dev, &d.target_train, &d.target_dev})
    for (const auto& ex : *set) add(ex.passage);
  fs::create_directories(p.data());
  corpus::write_passages_jsonl(p.passages(), all);
  corpus::write_passages_jsonl(p.target_unlabeled(), d.target_passages);
  corpus::write_examples_jsonl(p.split("source_train"), d.source_train);
  corpus::write_examples_jsonl(p.split("source_dev"), d.source_dev);
  corpus::write_examples_jsonl(p.split("target_train"), d.target_train);
  corpus::write_examples_jsonl(p.split("target_dev"), d.target_dev);
  corpus::write_vocab(p.vocab(), vocab);
  io::write_file_atomic(p.fingerprint(), fp);

  std::cout << "prepare (" << cfg.mode << "): " << d.source_passages.size() << " source passages, "
            << d.target_passages.size() << " target passages\n"
            << "  examples: source train " << d.source_train.size() << ", source dev " << d.source_dev.size()
            << ", target train " << d.target_train.size() << ", target dev " << d.target_dev.size() << "\n"
            << "  vocabulary: " << vocab.size() << " types\n";
  if (cfg.mode == "squad")
    for (const auto& [name, st] : {std::pair{"source", d.source_stats}, std::pair{"target", d.target_stats}})
      std::cout << "  " << name << ": paragraphs " << st.paragraphs << ", questions " << st.questions << ", kept "
                << st.kept << ", dropped (alignment " << st.dropped_alignment << ", range " << st.dropped_range
                << ", truncated " << st.dropped_truncated << ", empty question " << st.dropped_question << ")\n";
  return 0;
}

qgen::QGenModel load_qgen(const config::RunConfig& cfg, const corpus::Vocabulary& vocab, const Paths& p) {
  require(p.qgen(), "train-qg");
  qgen::QGenModel m = qgen::QGenModel::create(pipeline::qgen_config(cfg, vocab), cfg.seed + 1);
  ckpt::apply_checkpoint(ckpt::load_checkpoint(p.qgen()), m.params());
  return m;
}

int cmd_train_qg(const config::RunConfig& cfg) {
  const Paths p{cfg.out_dir};
  const Prepared d = load_prepared(p);
  const corpus::EmbeddingTable emb = pipeline::run_embeddings(cfg, d.vocab);
  qgen::QGenModel m = qgen::QGenModel::create(pipeline::qgen_config(cfg, d.vocab), cfg.seed + 1, &emb);
  qgen::TrainOptions opt;
  opt.epochs = cfg.qgen_epochs;
  opt.batch_size = cfg.qgen_batch_size;
  opt.lr = cfg.qgen_lr;
  opt.clip_norm = cfg.train.clip_norm;
  opt.seed = cfg.seed + 2;
  const qgen::TrainLog log = qgen::qgen_train(m, d.vocab, d.source_train, opt);
  std::string lines;
  for (std::size_t e = 0; e < log.epoch_nll.size(); ++e)
    lines += json{{"epoch", e}, {"nll", log.epoch_nll[e]}}.dump() + "\n";
  io::write_file_atomic(p.root / "qgen_log.jsonl", lines);
  ckpt::Manifest man;
  man.kind = "qgen";
  man.config["resolved"] = cfg.to_text();
  man.epoch = static_cast<int>(log.epoch_nll.size()) - 1;
  if (!log.epoch_nll.empty()) man.dev_metrics["train_nll"] = log.epoch_nll.back();
  ckpt::save_checkpoint(p.qgen(), m.params(), man);
  std::cout << "train-qg: " << log.epoch_nll.size() << " epochs, final NLL "
            << (log.epoch_nll.empty() ? 0.0 : log.epoch_nll.back()) << " -> " << p.qgen() << "\n";
  return 0;
}

int cmd_gen_questions(const config::RunConfig& cfg) {
  const Paths p{cfg.out_dir};
  const Prepared d = load_prepared(p);
  qgen::QGenModel m = load_qgen(cfg, d.vocab, p);
  qgen::TgenStats st;
  const auto tgen = qgen::build_tgen(d.target_passages, m, d.vocab, {cfg.max_per_passage, cfg.seed + 3}, &st);
  corpus::write_examples_jsonl(p.tgen(), tgen);
  std::cout << "gen-questions: " << st.passages << " passages, " << st.candidates << " candidates, " << st.generated
            << " questions (" << st.dropped_empty << " empty dropped) -> " << p.tgen() << "\n";
  return 0;
}

ckpt::Manifest reader_manifest(const config::RunConfig& cfg, const train::TrainResult& r, const std::string& kind) {
  ckpt::Manifest man;
  man.kind = kind;
  man.config["resolved"] = cfg.to_text();
  man.epoch = r.best_epoch;
  man.dev_metrics = r.best_dev.to_json();
  return man;
}

mrc::MrcModel load_reader(const config::RunConfig& cfg, const corpus::Vocabulary& vocab, const fs::path& path,
                          const std::string& producer, adversary::DomainClassifier* clf = nullptr) {
  require(path, producer);
  const ckpt::Checkpoint ck = ckpt::load_checkpoint(path);
  mrc::MrcModel m = mrc::MrcModel::create(pipeline::mrc_config(cfg, vocab), cfg.seed + 4);
  ckpt::apply_checkpoint(ck, m.params());
  if (clf) ckpt::apply_checkpoint(ck, clf->params());
  return m;
}

int cmd_train_source(const config::RunConfig& cfg) {
  const Paths p{cfg.out_dir};
  const Prepared d = load_prepared(p);
  const corpus::EmbeddingTable emb = pipeline::run_embeddings(cfg, d.vocab);
  mrc::MrcModel m = mrc::MrcModel::create(pipeline::mrc_config(cfg, d.vocab), cfg.seed + 4, &emb);
  train::TrainConfig tc = cfg.train;
  tc.epochs = cfg.source_epochs;
  tc.seed = cfg.seed + 5;
  const train::TrainResult r =
      train::train_source(m, d.vocab, d.source_train, d.source_dev, tc, {nullptr, p.root / "train_source_log.jsonl"});
  ckpt::save_checkpoint(p.theta_s(), m.params(), reader_manifest(cfg, r, "mrc"));
  std::cout << "train-source: best epoch " << r.best_epoch << ", source dev F1 " << r.best_dev.f1 << " -> "
            << p.theta_s() << "\n";
  return 0;
}

int cmd_adapt(const config::RunConfig& cfg) {
  const Paths p{cfg.out_dir};
  const Prepared d = load_prepared(p);
  require(p.theta_s(), "train-source");
  require(p.tgen(), "gen-questions");
  const auto tgen = corpus::read_examples_jsonl(p.tgen(), d.passages);
  if (tgen.empty()) throw MissingInput("T_gen at " + p.tgen().string() + " is empty (rerun `adamrc gen-questions`)");
  mrc::MrcModel m = load_reader(cfg, d.vocab, p.theta_s(), "train-source");
  adversary::DomainClassifier clf =
      adversary::DomainClassifier::create(2 * cfg.mrc.hidden, cfg.train.classifier_hidden, cfg.seed + 6);
  train::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed + 7;
  const train::TrainHooks hooks{nullptr, p.root / "adapt_log.jsonl"};
  const train::TrainResult r =
      train::adapt_semi_supervised(m, clf, d.vocab, d.source_train, d.target_train, tgen, d.target_dev, tc,
                                   cfg.train.semi_supervised_ratio, hooks);
  nn::ParamRefs all = m.params();
  for (auto* q : clf.params()) all.push_back(q);
  ckpt::save_checkpoint(p.theta_star(), all, reader_manifest(cfg, r, "mrc+classifier"));
  std::cout << "adapt: best epoch " << r.best_epoch << ", target dev EM " << r.best_dev.em << " F1 " << r.best_dev.f1
            << " -> " << p.theta_star() << "\n";
  return 0;
}

int cmd_eval(const config::RunConfig& cfg) {
  const Paths p{cfg.out_dir};
  const Prepared d = load_prepared(p);
  if (d.target_dev.empty()) throw MissingInput("no labeled target dev examples to evaluate");
  json report = json::object();
  bool any = false;
  for (const auto& [name, path] : {std::pair{"source_only", p.theta_s()}, std::pair{"adapted", p.theta_star()}}) {
    if (!fs::exists(path)) continue;
    mrc::MrcModel m = load_reader(cfg, d.vocab, path, "train-source");
    report[name] = metrics::evaluate_model(m, d.vocab, d.target_dev).to_json();
    any = true;
  }
  if (!any) throw MissingInput("no reader checkpoint in " + p.root.string() + " (run `adamrc train-source` first)");
  write_json(p.root / "report.json", report);
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_diagnose(const config::RunConfig& cfg) {
  const Paths p{cfg.out_dir};
  const Prepared d = load_prepared(p);
  require(p.theta_s(), "train-source");
  adversary::DomainClassifier clf =
      adversary::DomainClassifier::create(2 * cfg.mrc.hidden, cfg.train.classifier_hidden, cfg.seed + 6);
  std::optional<mrc::MrcModel> adapted;
  if (fs::exists(p.theta_star())) adapted = load_reader(cfg, d.vocab, p.theta_star(), "adapt", &clf);
  mrc::MrcModel base = load_reader(cfg, d.vocab, p.theta_s(), "train-source");
  json out = json::object();
  const auto run = [&](mrc::MrcModel& m, const std::string& name) {
    const auto samples =
        diag::collect_features(m, clf, d.vocab, d.source_dev, d.target_dev, cfg.diag_samples, cfg.seed + 8);
    diag::export_projection(samples, p.root / ("projection_" + name + ".csv"));
    diag::save_features(p.root / ("features_" + name + ".bin"), samples);
    out[name] = {{"domain_kl", diag::domain_kl(samples)},
                 {"probe_accuracy", diag::probe_accuracy(samples, cfg.seed + 9)},
                 {"samples", samples.size()}};
  };
  run(base, "source_only");
  if (adapted) run(*adapted, "adapted");
  write_json(p.root / "diagnose.json", out);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_experiment(const config::RunConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  json runs = json::array();
  for (std::uint64_t s : seeds) {
    config::RunConfig c = cfg;
    c.seed = s;
    const pipeline::ExperimentOutcome o = pipeline::run_experiment(c);
    runs.push_back({{"seed", s},
                    {"source_only", o.source_only.to_json()},
                    {"adapted", o.adapted.to_json()},
                    {"control_no_adversary", o.control.to_json()},
                    {"probe_before", o.probe_before},
                    {"probe_after", o.probe_after},
                    {"kl_before", o.kl_before},
                    {"kl_after", o.kl_after},
                    {"tgen_size", o.tgen_size},
                    {"qg_bleu1", o.qg_bleu1}});
  }
  write_json(fs::path(cfg.out_dir) / "experiment.json", runs);
  std::cout << runs.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adamrc: unsupervised domain adaptation for extractive reading comprehension"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config_path, "key = value config file");
  app.add_option("--out", f.out, "run directory (run.out_dir)");
  app.add_option("--set", f.sets, "override, e.g. --set train.epochs=5");
  app.add_option("--ks", f.ks, "source items per batch (train.k_s)");
  app.add_option("--kt", f.kt, "target items per batch (train.k_t)");
  app.add_option("--lambda-gamma", f.lambda_gamma, "lambda schedule steepness (train.lambda_gamma)");
  app.add_option("--lr", f.lr, "initial learning rate (train.learning_rate)");
  app.add_option("--dropout", f.dropout, "dropout rate (train.dropout)");
  app.add_option("--seed", f.seed, "seed (run.seed; falls back to ADAMRC_SEED)");
  app.add_option("--log-level", f.log_level, "trace|debug|info|warn|error");

  std::map<std::string, std::function<int(const config::RunConfig&)>> commands = {
      {"prepare", cmd_prepare},           {"train-qg", cmd_train_qg}, {"gen-questions", cmd_gen_questions},
      {"train-source", cmd_train_source}, {"adapt", cmd_adapt},       {"eval", cmd_eval},
      {"diagnose", cmd_diagnose}};
  const std::map<std::string, std::string> help = {
      {"prepare", "annotate corpora and build the vocabulary"},
      {"train-qg", "train the question generator on source data"},
      {"gen-questions", "generate T_gen for unlabeled target passages"},
      {"train-source", "train the source-only reader"},
      {"adapt", "adversarial adaptation from the source-only reader"},
      {"eval", "EM/F1 of the readers on the target dev set"},
      {"diagnose", "feature KL, probe accuracy and PCA projection"}};
  for (const auto& [name, text] : help) app.add_subcommand(name, text);
  std::string seeds_text = "1,2,3";
  app.add_subcommand("experiment", "run every stage in memory for several seeds")
      ->add_option("--seeds", seeds_text, "comma-separated seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  spdlog::set_level(spdlog::level::from_str(f.log_level));

  try {
    const config::RunConfig cfg = resolve(f);
    const std::string name = app.get_subcommands().front()->get_name();
    snapshot_config(cfg, name);
    if (name == "experiment") {
      std::vector<std::uint64_t> seeds;
      std::stringstream ss(seeds_text);
      for (std::string tok; std::getline(ss, tok, ',');) seeds.push_back(std::stoull(tok));
      return cmd_experiment(cfg, seeds);
    }
    return commands.at(name)(cfg);
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nn::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
