#include "cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "conan/config.hpp"
#include "conan/datagen.hpp"
#include "conan/errors.hpp"
#include "conan/eval.hpp"
#include "conan/gradcheck.hpp"
#include "conan/io_format.hpp"
#include "conan/pooling.hpp"
#include "conan/trainer.hpp"
#include "json.hpp"

namespace conan::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using io::Checkpoint;

const char* const kExitTable =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error, or gradcheck found a mismatch\n"
    "  2  usage error: unknown flag or config key, bad value\n"
    "  3  I/O error: missing or unwritable file\n"
    "  4  format error: schema, checksum or version mismatch\n"
    "  5  training diverged: non-finite loss or gradient\n"
    "  6  dataset error: validation failed or split unusable\n"
    "\n"
    "Environment:\n"
    "  CONAN_CONFIG_DIR  directory searched for relative --config paths;\n"
    "                    its default.yaml is used when --config is absent\n";

// Flags shared by every subcommand that reads a run configuration.
struct Common {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool quiet = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "YAML run configuration");
    app->add_option("--set", overrides, "override a config key, e.g. --set train.lr_main=0.005")
        ->allow_extra_args(false);
    app->add_option("--seed", seed, "seed for data, initialisation and training");
    app->add_option("--threads", threads, "worker threads (default 1; results do not depend on it)");
    app->add_flag("-q,--quiet", quiet, "no progress output on stderr");
  }

  RunConfig load() const {
    RunConfig c = load_run_config(config, overrides);
    if (seed) apply_seed(c, *seed);
    if (threads) c.threads = *threads;
    c.train.threads = c.threads;
    try {
      check(c);
    } catch (const ParameterError& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

Dataset load_valid(const std::string& path) {
  Dataset ds = io::load_dataset(path);
  const ValidationReport v = validate(ds);
  if (!v.ok()) {
    std::string msg = "dataset '" + path + "' fails validation:";
    for (std::size_t i = 0; i < std::min<std::size_t>(v.violations.size(), 10); ++i) msg += "\n  " + v.violations[i];
    if (v.violations.size() > 10) msg += fmt::format("\n  ... {} more", v.violations.size() - 10);
    throw DatasetError(msg);
  }
  return ds;
}

const Template& find_template(const Dataset& ds, const std::string& id) {
  for (const Template& t : ds.templates)
    if (t.id == id) return t;
  throw UsageError("no template '" + id + "' in the dataset");
}

Checkpoint load_checkpoint_for(const std::string& path, const Dataset& ds) {
  Checkpoint c = io::read_checkpoint(path);
  if (c.model.config.d != ds.d)
    throw SchemaError(fmt::format("checkpoint has d = {} but the dataset has d = {}", c.model.config.d, ds.d));
  return c;
}

std::string provenance_with(const RunConfig& c, const std::string& command) {
  return "command: " + command + "\n" + to_yaml(c);
}

// --- gen-synth ---------------------------------------------------------------

struct GenSynth {
  Common common;
  std::string out_path;
  int float_width = 8;
};

int gen_synth(const GenSynth& g, std::ostream& out, std::ostream&) {
  if (g.float_width != 4 && g.float_width != 8) throw UsageError("--float-width must be 4 or 8");
  const RunConfig c = g.common.load();
  const Dataset ds = generate(c.synth);
  io::save_dataset(g.out_path, ds, static_cast<std::uint8_t>(g.float_width), provenance_with(c, "gen-synth"));
  const ValidationReport v = validate(ds);
  for (Split s : {Split::train, Split::val, Split::test}) {
    const SplitCounts& n = v.of(s);
    out << fmt::format("{:<5} subjects {:>4}  templates {:>5}  embeddings {:>6}\n", to_string(s), n.subjects,
                       n.templates, n.embeddings);
  }
  out << "wrote " << g.out_path << "\n";
  return kOk;
}

// --- train -------------------------------------------------------------------

struct Train {
  Common common;
  std::string dataset;
  std::string checkpoint;
  std::optional<std::string> log;
  std::optional<std::string> resume;
};

int train(const Train& t, std::ostream& out, std::ostream& err) {
  const RunConfig c = t.common.load();
  const Dataset ds = load_valid(t.dataset);
  ModelConfig mc = c.model;
  mc.d = ds.d;

  TrainerState state;
  if (t.resume) {
    Checkpoint ck = io::read_checkpoint(*t.resume, mc);
    if (!ck.trainer) throw SchemaError("checkpoint '" + *t.resume + "' holds no trainer state");
    state = std::move(*ck.trainer);
  } else {
    state = start_training(init_model(mc, c.model_init_seed), c.train);
  }

  std::ofstream log;
  if (t.log) {
    log.open(*t.log, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write '" + *t.log + "'");
    std::istringstream cfg(to_yaml(c));
    for (std::string line; std::getline(cfg, line);) log << "# " << line << "\n";
    log << metrics_log_header(c.train);
    for (const EpochMetrics& m : state.history) log << metrics_log_line(m, c.train);
    log.flush();
  }

  FitHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m, const TrainerState&) {
    if (log.is_open()) {
      log << metrics_log_line(m, c.train);
      log.flush();
    }
    if (!t.common.quiet)
      err << fmt::format("epoch {:>3}  loss {:.6f}  val rank-1 {:.4f}\n", m.epoch, m.loss, m.val_rank1);
  };
  FitResult r;
  try {
    r = fit(ds, c.train, state, hooks);
  } catch (const TrainingError& e) {
    if (!e.diagnostic().empty()) err << e.diagnostic() << "\n";
    throw;
  }
  for (const auto& w : r.warnings) err << "warning: " << w << "\n";
  io::write_checkpoint(t.checkpoint, Checkpoint{r.best, c.train.tau, state, provenance_with(c, "train")});
  out << fmt::format("best epoch {} of {}, val rank-1 {:.4f}{}\n", r.best_epoch, r.history.size(), r.best_val_rank1,
                     r.stopped_early ? " (stopped early)" : "");
  out << "wrote " << t.checkpoint << "\n";
  return kOk;
}

// --- aggregate -----------------------------------------------------------------

struct Aggregate {
  std::string checkpoint, dataset;
  std::vector<std::string> template_ids;
  bool all = false;
  std::optional<std::string> out_path;
  std::optional<double> temperature;
};

ojson result_json(const Template& t, const AggregationResult& r) {
  ojson j;
  j["template_id"] = t.id;
  j["subject_id"] = t.subject_id;
  j["distribution"] = to_string(t.distribution);
  j["split"] = to_string(t.split);
  j["temperature"] = r.temperature;
  ojson media = ojson::array();
  for (const auto& e : t.embeddings) media.push_back(e.media_id);
  j["media"] = media;
  j["weights"] = r.weights;
  j["similarities"] = r.similarities;
  j["pooled"] = std::vector<double>(r.pooled.values().begin(), r.pooled.values().end());
  return j;
}

int aggregate(const Aggregate& a, std::ostream& out, std::ostream&) {
  if (a.all == !a.template_ids.empty()) throw UsageError("give either --template-id or --all");
  const Dataset ds = io::load_dataset(a.dataset);
  const Checkpoint ck = load_checkpoint_for(a.checkpoint, ds);
  std::vector<const Template*> picked;
  if (a.all)
    for (const Template& t : ds.templates) picked.push_back(&t);
  else
    for (const auto& id : a.template_ids) picked.push_back(&find_template(ds, id));

  std::string text = ojson{{"config", ck.provenance}}.dump() + "\n";
  for (const Template* t : picked) text += result_json(*t, aggregate_template(*t, ck.model, a.temperature)).dump() + "\n";
  if (a.out_path) {
    io::write_text(*a.out_path, text);
    out << fmt::format("wrote {} aggregates to {}\n", picked.size(), *a.out_path);
  } else {
    out << text;
  }
  return kOk;
}

// --- eval ------------------------------------------------------------------------

struct Eval {
  std::optional<std::string> checkpoint;
  std::string dataset;
  std::vector<std::string> baselines;
  std::vector<std::string> extra;  // NAME=CHECKPOINT
  std::string split = "test";
  std::optional<std::string> report;
  unsigned threads = 1;
};

int eval(const Eval& e, std::ostream& out, std::ostream& err) {
  if (!e.checkpoint && e.baselines.empty() && e.extra.empty())
    throw UsageError("nothing to evaluate: give --checkpoint, --baselines or --model");
  if (e.threads == 0) throw UsageError("--threads must be at least 1");
  const Dataset ds = load_valid(e.dataset);
  const Split split = parse_split(e.split);

  EvalReport report;
  std::string provenance;
  try {
    for (const auto& b : e.baselines) {
      if (b != "gap") throw UsageError("unknown baseline '" + b + "' (known: gap)");
      report.rows.push_back(evaluate("GAP", ds, split, gap_aggregator(), e.threads));
    }
    std::vector<std::pair<std::string, std::string>> models;
    if (e.checkpoint) models.emplace_back("CoNAN", *e.checkpoint);
    for (const auto& x : e.extra) {
      const auto eq = x.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--model expects NAME=CHECKPOINT, got '" + x + "'");
      models.emplace_back(x.substr(0, eq), x.substr(eq + 1));
    }
    for (const auto& [name, path] : models) {
      const Checkpoint ck = load_checkpoint_for(path, ds);
      if (provenance.empty()) provenance = ck.provenance;
      report.rows.push_back(evaluate(name, ds, split, ck.model, e.threads));
    }
  } catch (const EvaluationError& x) {
    throw DatasetError(x.what());
  }
  report.config = fmt::format("split: {}\ndataset: {}\n{}", e.split, e.dataset, provenance);
  if (e.report) io::write_text(*e.report, report.to_json_lines());
  out << report.to_table();
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  return kOk;
}

// --- inspect -----------------------------------------------------------------------

struct Inspect {
  std::string checkpoint, dataset, template_id;
  std::optional<double> temperature;
};

int inspect(const Inspect& in, std::ostream& out, std::ostream&) {
  const Dataset ds = io::load_dataset(in.dataset);
  const Checkpoint ck = load_checkpoint_for(in.checkpoint, ds);
  const Template& t = find_template(ds, in.template_id);
  const AggregationResult r = aggregate_template(t, ck.model, in.temperature);
  std::vector<WeightDumpRow> rows = weight_dump(t, r);
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.weight > b.weight; });
  std::size_t width = 8;
  for (const auto& row : rows) width = std::max(width, row.media_id.size());
  out << fmt::format("template {} ({}, subject {}), T = {}\n", t.id, to_string(t.distribution), t.subject_id,
                     r.temperature);
  out << fmt::format("{:<{}}  {:>10}  {:>10}\n", "media_id", width, "similarity", "weight");
  double total = 0.0;
  for (const auto& row : rows) {
    out << fmt::format("{:<{}}  {:>10.6f}  {:>10.6f}\n", row.media_id, width, row.similarity, row.weight);
    total += row.weight;
  }
  out << fmt::format("{:<{}}  {:>10}  {:>10.6f}\n", "sum", width, "", total);
  return kOk;
}

// --- gradcheck ---------------------------------------------------------------------

struct Gradcheck {
  std::uint64_t seed = 0;
  std::string sizes = "8x1,8x2,8x5,16x1,16x2,16x5";
  double tolerance = 1e-4;
};

int gradcheck(const Gradcheck& g, std::ostream& out, std::ostream&) {
  bool all = true;
  for (const auto& [d, n] : parse_sizes(g.sizes)) {
    FdOptions o;
    o.tolerance = g.tolerance;
    const FdReport r = gradcheck_full_loss({d, n, g.seed}, o);
    std::string worst;
    double e = -1.0;
    for (const auto& p : r.params)
      if (p.max_rel_error > e) {
        e = p.max_rel_error;
        worst = p.name;
      }
    out << fmt::format("d={:<3} n={:<3} entries {:>6}  max rel error {:.3e} ({})  {}\n", d, n, r.checked,
                       r.max_rel_error, worst, r.passed ? "pass" : "FAIL");
    all = all && r.passed;
  }
  out << (all ? "all passed\n" : "gradient check FAILED\n");
  return all ? kOk : kFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Context-aware template aggregation: synthetic data, training, evaluation.", "conan"};
  app.footer(kExitTable);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  GenSynth gs;
  CLI::App* gen = app.add_subcommand("gen-synth", "generate the synthetic benchmark dataset");
  gs.common.attach(gen);
  gen->add_option("--out", gs.out_path, "manifest path; the .cnan container is written beside it")->required();
  gen->add_option("--float-width", gs.float_width, "bytes per stored value, 4 or 8 (default 8)");

  Train tr;
  CLI::App* trn = app.add_subcommand("train", "train on a dataset's train split, early-stop on val");
  tr.common.attach(trn);
  trn->add_option("--dataset", tr.dataset, "dataset manifest")->required();
  trn->add_option("--out-checkpoint", tr.checkpoint, "checkpoint to write (best model plus trainer state)")->required();
  trn->add_option("--log", tr.log, "metrics log: epoch, loss, val rank-1 (and wall time if enabled)");
  trn->add_option("--resume", tr.resume, "continue from a checkpoint's trainer state");

  Aggregate ag;
  CLI::App* agg = app.add_subcommand("aggregate", "aggregate templates with a trained model");
  agg->add_option("--checkpoint", ag.checkpoint, "model checkpoint")->required();
  agg->add_option("--dataset", ag.dataset, "dataset manifest")->required();
  agg->add_option("--template-id", ag.template_ids, "template to aggregate (repeatable)");
  agg->add_flag("--all", ag.all, "aggregate every template");
  agg->add_option("--out", ag.out_path, "JSON lines output (default stdout)");
  agg->add_option("--temperature", ag.temperature, "softmax temperature (default: the model's)");

  Eval ev;
  CLI::App* evl = app.add_subcommand("eval", "verification and identification metrics");
  evl->add_option("--checkpoint", ev.checkpoint, "model checkpoint, reported as CoNAN");
  evl->add_option("--dataset", ev.dataset, "dataset manifest")->required();
  evl->add_option("--baselines", ev.baselines, "comma-separated baselines (known: gap)")->delimiter(',');
  evl->add_option("--model", ev.extra, "extra row NAME=CHECKPOINT, e.g. an ablation (repeatable)");
  evl->add_option("--split", ev.split, "split to evaluate (default test)");
  evl->add_option("--report", ev.report, "JSON lines report");
  evl->add_option("--threads", ev.threads, "worker threads (default 1)");

  Inspect in;
  CLI::App* ins = app.add_subcommand("inspect", "per-embedding weights of one template, highest first");
  ins->add_option("--checkpoint", in.checkpoint, "model checkpoint")->required();
  ins->add_option("--dataset", in.dataset, "dataset manifest")->required();
  ins->add_option("--template-id", in.template_id, "template to inspect")->required();
  ins->add_option("--temperature", in.temperature, "softmax temperature (default: the model's)");

  Gradcheck gc;
  CLI::App* grd = app.add_subcommand("gradcheck", "finite-difference check of the full training loss");
  grd->add_option("--seed", gc.seed, "instance seed (default 0)");
  grd->add_option("--sizes", gc.sizes, "comma-separated DxN sizes (default 8x1,8x2,8x5,16x1,16x2,16x5)");
  grd->add_option("--tolerance", gc.tolerance, "relative error bound (default 1e-4)");

  for (CLI::App* sub : app.get_subcommands({})) sub->footer(kExitTable);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return gen_synth(gs, out, err);
    if (*trn) return train(tr, out, err);
    if (*agg) return aggregate(ag, out, err);
    if (*evl) return eval(ev, out, err);
    if (*ins) return inspect(in, out, err);
    if (*grd) return gradcheck(gc, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << "\n";
    return kFormat;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << "\n";
    return kFormat;
  } catch (const VersionError& e) {
    err << "version error: " << e.what() << "\n";
    return kFormat;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << "\n";
    return kTraining;
  } catch (const DatasetError& e) {
    err << "dataset error: " << e.what() << "\n";
    return kDataset;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace conan::cli
