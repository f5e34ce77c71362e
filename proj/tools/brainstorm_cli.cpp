// Command-line pipeline: synth, mine, train, generate, evaluate, sweep.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "brainstorm/dataset.hpp"
#include "brainstorm/decoding.hpp"
#include "brainstorm/errors.hpp"
#include "brainstorm/eval.hpp"
#include "brainstorm/manifest.hpp"
#include "brainstorm/miner.hpp"
#include "brainstorm/model.hpp"
#include "brainstorm/objectives.hpp"
#include "brainstorm/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace brainstorm;

namespace {

struct CommonArgs {
  std::uint64_t seed = 0;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--seed", args.seed, "Root seed; all randomness flows from it")->required();
  cmd->add_option("--out", args.out, "Output directory")->required();
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw data_error("cannot create output directory " + out + ": " + ec.message());
}

void fail_if(bool cond, std::vector<std::string>& errs, const std::string& msg) {
  if (cond) errs.push_back(msg);
}

void throw_if_errors(const std::vector<std::string>& errs) {
  if (errs.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& e : errs) msg += "\n  - " + e;
  throw config_error(msg);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
  CommonArgs common;
  std::size_t n_families = 8;
  std::size_t templates_per_family = 8;
  double theta_hi = 0.15;
  double theta_lo = 0.01;
  std::size_t n_train = 240;
  std::size_t n_val = 60;
  std::size_t n_test = 100;
};

int run_synth(const SynthArgs& a) {
  std::vector<std::string> errs;
  fail_if(a.n_families < 2, errs, "n-families: must be >= 2");
  fail_if(a.templates_per_family < 4, errs, "templates-per-family: must be >= 4");
  fail_if(!(a.theta_lo > 0.0 && a.theta_lo < a.theta_hi && a.theta_hi < 1.0), errs,
          "theta-lo/theta-hi: need 0 < theta_lo < theta_hi < 1");
  fail_if(a.n_train < 1 || a.n_val < 1 || a.n_test < 1, errs, "split sizes: must be >= 1");
  throw_if_errors(errs);
  ensure_out_dir(a.common.out);

  const synth::World world = synth::build_world(a.common.seed, a.n_families,
                                                a.templates_per_family, a.theta_hi, a.theta_lo);
  const std::string world_path = a.common.out + "/world.json";
  synth::save_world(world, world_path);
  synth::EmitPaths paths{a.common.out + "/train.jsonl", a.common.out + "/val.jsonl",
                         a.common.out + "/test.jsonl"};
  synth::emit_dataset(world, a.n_train, a.n_val, a.n_test, paths);

  Manifest m;
  m.command = "synth";
  m.config = {{"seed", std::to_string(a.common.seed)},
              {"n_families", std::to_string(a.n_families)},
              {"templates_per_family", std::to_string(a.templates_per_family)},
              {"theta_hi", fmt_double(a.theta_hi)},
              {"theta_lo", fmt_double(a.theta_lo)},
              {"n_train", std::to_string(a.n_train)},
              {"n_val", std::to_string(a.n_val)},
              {"n_test", std::to_string(a.n_test)}};
  m.write(a.common.out + "/manifest.json");
  std::cout << "synth: wrote world and " << a.n_train << "/" << a.n_val << "/" << a.n_test
            << " examples to " << a.common.out << "\n";
  return 0;
}

// ----------------------------------------------------------------- mine ----

struct MineArgs {
  CommonArgs common;
  std::string reports_dir;
  std::string lexicon_path;
  std::size_t window = 6;
};

int run_mine(const MineArgs& a) {
  std::vector<std::string> errs;
  fail_if(!fs::is_directory(a.reports_dir), errs, "reports: not a directory: " + a.reports_dir);
  fail_if(!fs::is_regular_file(a.lexicon_path), errs, "lexicon: no such file: " + a.lexicon_path);
  fail_if(a.window < 1, errs, "window: must be >= 1");
  throw_if_errors(errs);
  ensure_out_dir(a.common.out);

  const miner::IndicatorLexicon lexicon = miner::IndicatorLexicon::load(a.lexicon_path);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(a.reports_dir))
    if (entry.is_regular_file()) paths.push_back(entry.path().string());

  const std::string out_path = a.common.out + "/mined.jsonl";
  const miner::MineStats stats = miner::mine_corpus(paths, lexicon, out_path, a.window);

  Manifest m;
  m.command = "mine";
  m.config = {{"seed", std::to_string(a.common.seed)},
              {"window", std::to_string(a.window)},
              {"lexicon", a.lexicon_path},
              {"reports", a.reports_dir}};
  m.inputs["lexicon"] = hash_file(a.lexicon_path);
  for (const auto& p : paths) m.inputs[p] = hash_file(p);
  m.write(a.common.out + "/manifest.json");

  json stats_json;
  stats_json["n_likely"] = stats.n_likely;
  stats_json["n_less_likely"] = stats.n_less_likely;
  stats_json["n_rejected"] = stats.n_rejected;
  stats_json["file_errors"] = stats.file_errors;
  stats_json["manifest_hash"] = m.hash();
  std::ofstream stats_out(a.common.out + "/mine_stats.json");
  stats_out << stats_json.dump(2) << '\n';

  if (paths.empty())
    std::cerr << "warning: no report files found in " << a.reports_dir << "\n";
  for (const auto& e : stats.file_errors) std::cerr << "warning: " << e << "\n";
  std::cout << "mine: " << stats.n_likely << " likely, " << stats.n_less_likely
            << " less-likely examples, " << stats.n_rejected << " rejected\n";
  return 0;
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
  CommonArgs common;
  std::string data_path;
  std::string mode = "mle";
  std::string view_filter = "none";
  std::size_t epochs = 12;
  double lr = 0.05;
  std::size_t batch_size = 8;
  LossWeights weights;
  std::size_t embed_dim = 48;
  std::size_t hidden_dim = 64;
  std::size_t max_src_len = 16;
  std::size_t max_tgt_len = 16;
};

ViewFilter parse_view_filter(const std::string& s) {
  if (s == "none") return ViewFilter::none;
  if (s == "likely") return ViewFilter::likely;
  if (s == "less_likely") return ViewFilter::less_likely;
  throw config_error("view-filter: expected none | likely | less_likely, got '" + s + "'");
}

int run_train(const TrainArgs& a) {
  std::vector<std::string> errs;
  fail_if(!fs::is_regular_file(a.data_path), errs, "data: no such file: " + a.data_path);
  fail_if(a.lr <= 0.0 && a.lr != 0.0, errs, "lr: must be >= 0");
  fail_if(a.epochs < 1, errs, "epochs: must be >= 1");
  fail_if(a.batch_size < 1, errs, "batch-size: must be >= 1");
  fail_if(a.weights.tau <= 0.0, errs, "tau: must be > 0");
  fail_if(a.weights.w_s < 0.0 || a.weights.w_m < 0.0, errs, "w-s/w-m: must be >= 0");
  fail_if(a.weights.margin < 0.0, errs, "margin: must be >= 0");
  fail_if(a.weights.hard_negative_weight < 1.0, errs, "hard-negative-weight: must be >= 1");
  TrainMode mode{};
  ViewFilter filter{};
  try {
    mode = parse_train_mode(a.mode);
  } catch (const config_error& e) {
    errs.push_back(e.what());
  }
  try {
    filter = parse_view_filter(a.view_filter);
  } catch (const config_error& e) {
    errs.push_back(e.what());
  }
  throw_if_errors(errs);
  ensure_out_dir(a.common.out);

  const std::vector<Example> examples = load_jsonl(a.data_path);
  if (examples.empty()) throw data_error("train: dataset is empty: " + a.data_path);
  const Vocab vocab = build_vocab(examples);

  std::size_t filtered = 0;
  const std::vector<TrainRow> rows =
      materialize_rows(examples, vocab, mode, filter, a.common.seed, &filtered);

  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.embed_dim = a.embed_dim;
  cfg.hidden_dim = a.hidden_dim;
  cfg.max_src_len = a.max_src_len;
  cfg.max_tgt_len = a.max_tgt_len;
  cfg.seed = a.common.seed;
  Seq2SeqModel model(cfg, vocab);

  TrainOptions opts;
  opts.epochs = a.epochs;
  opts.lr = a.lr;
  opts.batch_size = a.batch_size;
  opts.seed = a.common.seed;
  const TrainResult result = train(model, rows, a.weights, mode, opts);

  Manifest m;
  m.command = "train";
  m.config = {{"seed", std::to_string(a.common.seed)},
              {"mode", a.mode},
              {"view_filter", a.view_filter},
              {"epochs", std::to_string(a.epochs)},
              {"lr", fmt_double(a.lr)},
              {"batch_size", std::to_string(a.batch_size)},
              {"w_s", fmt_double(a.weights.w_s)},
              {"w_m", fmt_double(a.weights.w_m)},
              {"margin", fmt_double(a.weights.margin)},
              {"tau", fmt_double(a.weights.tau)},
              {"hard_negative_weight", fmt_double(a.weights.hard_negative_weight)},
              {"embed_dim", std::to_string(a.embed_dim)},
              {"hidden_dim", std::to_string(a.hidden_dim)},
              {"max_src_len", std::to_string(a.max_src_len)},
              {"max_tgt_len", std::to_string(a.max_tgt_len)},
              {"rows_used", std::to_string(rows.size())},
              {"rows_filtered_out", std::to_string(filtered)}};
  m.inputs[a.data_path] = hash_file(a.data_path);
  m.write(a.common.out + "/manifest.json");

  model.save_checkpoint(a.common.out + "/model.bstm");
  write_loss_log_csv(a.common.out + "/loss_log.csv", result.log, m.hash());

  if (result.aborted) {
    std::cerr << "error: training aborted: " << result.abort_reason << "\n";
    return 4;
  }
  std::cout << "train: " << rows.size() << " rows (" << filtered << " filtered out), "
            << result.log.size() << " epochs, final total loss "
            << (result.log.empty() ? 0.0 : result.log.back().total) << "\n";
  return 0;
}

// ------------------------------------------------------------- generate ----

struct GenerateArgs {
  CommonArgs common;
  std::string contexts_path;
  std::string model_expert, model_neutral, model_plus, model_amateur;
  std::string strategy = "diverse_beam";
  std::string indicator = "~";
  DecodeConfig decode;
  std::size_t n_best = 1;
};

struct LoadedModels {
  std::vector<std::unique_ptr<Seq2SeqModel>> storage;
  ModelSet set;
};

LoadedModels load_models(const GenerateArgs& a) {
  LoadedModels out;
  const std::pair<const char*, const std::string*> roles[] = {
      {"expert", &a.model_expert},
      {"neutral", &a.model_neutral},
      {"plus", &a.model_plus},
      {"amateur", &a.model_amateur}};
  for (const auto& [role, path] : roles) {
    if (path->empty()) continue;
    out.storage.push_back(
        std::make_unique<Seq2SeqModel>(Seq2SeqModel::load_checkpoint(*path)));
    out.set[role] = out.storage.back().get();
  }
  return out;
}

void write_generation_records(const std::string& path,
                              const std::vector<eval::GenerationRecord>& records,
                              const json& params, const std::string& manifest_hash) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write generations: " + path);
  for (const auto& r : records) {
    json j;
    j["context"] = r.context;
    j["indicator"] = polarity_str(r.indicator);
    j["output"] = r.output;
    j["logprob"] = r.logprob;
    j["strategy"] = r.strategy;
    j["params"] = params;
    j["manifest_hash"] = manifest_hash;
    out << j.dump() << '\n';
  }
  if (!out) throw data_error("write failed: " + path);
}

json decode_params_json(const DecodeConfig& d) {
  json p;
  p["max_len"] = d.max_len;
  p["beam_size"] = d.beam_size;
  p["num_groups"] = d.groups();
  p["diversity_penalty"] = d.diversity_penalty;
  p["top_k"] = d.top_k;
  p["alpha"] = d.alpha;
  p["dexperts_top_k"] = d.dexperts_top_k;
  p["tau_cd"] = d.tau_cd;
  p["plausibility_alpha"] = d.plausibility_alpha;
  p["seed"] = d.seed;
  return p;
}

std::vector<eval::GenerationRecord> generate_for_contexts(
    const ModelSet& models, const std::vector<Example>& contexts, Polarity indicator,
    const DecodeConfig& cfg, std::size_t n_best) {
  const Seq2SeqModel& expert = *models.at("expert");
  std::vector<eval::GenerationRecord> records;
  for (const auto& ex : contexts) {
    const std::vector<int> ctx_ids = expert.vocab().encode(ex.context);
    const GenerationResult result = generate(models, ctx_ids, indicator, cfg);
    const std::size_t take = std::min<std::size_t>(n_best, result.sequences.size());
    for (std::size_t i = 0; i < take; ++i) {
      eval::GenerationRecord r;
      r.context = ex.context;
      r.indicator = indicator;
      r.output = expert.vocab().decode(result.sequences[i]);
      r.logprob = result.log_probs[i];
      r.strategy = strategy_str(result.strategy);
      records.push_back(std::move(r));
    }
  }
  return records;
}

int run_generate(const GenerateArgs& a) {
  std::vector<std::string> errs;
  fail_if(!fs::is_regular_file(a.contexts_path), errs,
          "contexts: no such file: " + a.contexts_path);
  fail_if(a.model_expert.empty(), errs, "model-expert: required");
  fail_if(a.n_best < 1, errs, "n-best: must be >= 1");
  Strategy strategy{};
  Polarity indicator{};
  try {
    strategy = parse_strategy(a.strategy);
  } catch (const config_error& e) {
    errs.push_back(e.what());
  }
  try {
    indicator = parse_polarity(a.indicator);
  } catch (const std::exception& e) {
    errs.push_back(e.what());
  }
  throw_if_errors(errs);
  DecodeConfig cfg = a.decode;
  cfg.strategy = strategy;
  cfg.seed = a.common.seed;
  cfg.validate();
  ensure_out_dir(a.common.out);

  const std::vector<Example> contexts = load_jsonl(a.contexts_path);
  LoadedModels models = load_models(a);
  const std::vector<eval::GenerationRecord> records =
      generate_for_contexts(models.set, contexts, indicator, cfg, a.n_best);

  Manifest m;
  m.command = "generate";
  m.config = {{"seed", std::to_string(a.common.seed)},
              {"strategy", a.strategy},
              {"indicator", a.indicator},
              {"n_best", std::to_string(a.n_best)},
              {"max_len", std::to_string(cfg.max_len)},
              {"beam_size", std::to_string(cfg.beam_size)},
              {"num_groups", std::to_string(cfg.groups())},
              {"diversity_penalty", fmt_double(cfg.diversity_penalty)},
              {"top_k", std::to_string(cfg.top_k)},
              {"alpha", fmt_double(cfg.alpha)},
              {"dexperts_top_k", std::to_string(cfg.dexperts_top_k)},
              {"tau_cd", fmt_double(cfg.tau_cd)},
              {"plausibility_alpha", fmt_double(cfg.plausibility_alpha)}};
  m.inputs[a.contexts_path] = hash_file(a.contexts_path);
  for (const auto& [role, model] : models.set) {
    (void)model;
  }
  for (const auto& path :
       {a.model_expert, a.model_neutral, a.model_plus, a.model_amateur})
    if (!path.empty()) m.inputs[path] = hash_file(path);
  m.write(a.common.out + "/manifest.json");

  write_generation_records(a.common.out + "/generations.jsonl", records,
                           decode_params_json(cfg), m.hash());
  std::cout << "generate: " << records.size() << " outputs for " << contexts.size()
            << " contexts\n";
  return 0;
}

// ------------------------------------------------------------- evaluate ----

struct EvaluateArgs {
  CommonArgs common;
  std::string generations_path;
  std::string world_path;
  std::string judge_path;
  std::string baseline_path;
  std::string classifier_data_path;
  std::size_t resamples = 2000;
};

int run_evaluate(const EvaluateArgs& a) {
  std::vector<std::string> errs;
  fail_if(!fs::is_regular_file(a.generations_path), errs,
          "generations: no such file: " + a.generations_path);
  fail_if(!fs::is_regular_file(a.world_path), errs, "world: no such file: " + a.world_path);
  fail_if(!fs::is_regular_file(a.judge_path), errs, "judge: no such file: " + a.judge_path);
  fail_if(!a.baseline_path.empty() && !fs::is_regular_file(a.baseline_path), errs,
          "baseline: no such file: " + a.baseline_path);
  fail_if(!a.classifier_data_path.empty() && !fs::is_regular_file(a.classifier_data_path), errs,
          "classifier-data: no such file: " + a.classifier_data_path);
  fail_if(a.resamples < 1000, errs, "resamples: must be >= 1000");
  throw_if_errors(errs);
  ensure_out_dir(a.common.out);

  const synth::World world = synth::load_world(a.world_path);
  const eval::Labeler labeler = eval::oracle_labeler(world);
  const std::vector<eval::GenerationRecord> generations =
      eval::load_generations(a.generations_path);
  const Seq2SeqModel judge = Seq2SeqModel::load_checkpoint(a.judge_path);

  json report;
  std::vector<std::string> labels;
  std::vector<int> binary;
  for (const auto& g : generations) {
    const synth::OracleLabel l = labeler(g.context, g.output);
    labels.push_back(synth::oracle_label_str(l));
    binary.push_back(l == synth::OracleLabel::less_likely ? 1 : 0);
  }
  report["fraction_less_likely"] = eval::fraction_metric(generations, labeler);
  report["perplexity"] = eval::perplexity(generations, judge);
  report["n"] = generations.size();
  report["labels"] = labels;

  if (!a.baseline_path.empty()) {
    const std::vector<eval::GenerationRecord> baseline =
        eval::load_generations(a.baseline_path);
    std::vector<int> base_binary;
    for (const auto& g : baseline)
      base_binary.push_back(labeler(g.context, g.output) == synth::OracleLabel::less_likely ? 1
                                                                                            : 0);
    report["p_value"] =
        eval::paired_bootstrap(binary, base_binary, a.resamples, a.common.seed);
    report["baseline_fraction"] = eval::fraction_metric(baseline, labeler);
  }

  if (!a.classifier_data_path.empty()) {
    const std::vector<Example> labeled = load_jsonl(a.classifier_data_path);
    std::vector<eval::LabeledPair> pairs;
    for (const auto& ex : labeled) {
      pairs.push_back({ex.context, ex.target, true});
      if (ex.pair_target) pairs.push_back({ex.context, *ex.pair_target, false});
    }
    const eval::Classifier clf = eval::Classifier::train(pairs, a.common.seed);
    std::size_t clf_less = 0;
    for (const auto& g : generations)
      if (clf.predict_less_likely(g.context, g.output)) ++clf_less;
    report["classifier_accuracy"] = clf.held_out_accuracy();
    report["classifier_fraction"] =
        static_cast<double>(clf_less) / static_cast<double>(generations.size());
  }

  Manifest m;
  m.command = "evaluate";
  m.config = {{"seed", std::to_string(a.common.seed)},
              {"resamples", std::to_string(a.resamples)}};
  m.inputs[a.generations_path] = hash_file(a.generations_path);
  m.inputs[a.world_path] = hash_file(a.world_path);
  m.inputs[a.judge_path] = hash_file(a.judge_path);
  if (!a.baseline_path.empty()) m.inputs[a.baseline_path] = hash_file(a.baseline_path);
  if (!a.classifier_data_path.empty())
    m.inputs[a.classifier_data_path] = hash_file(a.classifier_data_path);
  m.write(a.common.out + "/manifest.json");
  report["manifest_hash"] = m.hash();

  std::ofstream out(a.common.out + "/eval_report.json");
  if (!out) throw data_error("cannot write eval report");
  out << report.dump(2) << '\n';
  std::cout << "evaluate: fraction " << report["fraction_less_likely"] << ", perplexity "
            << report["perplexity"] << " over " << generations.size() << " generations\n";
  return 0;
}

// ---------------------------------------------------------------- sweep ----

struct SweepArgs {
  GenerateArgs gen;
  std::string param = "alpha";
  std::string grid;  // comma separated; default depends on param
  std::string world_path;
  std::string judge_path;
};

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw config_error("grid: cannot parse value '" + item + "'");
    }
  }
  return out;
}

int run_sweep(const SweepArgs& a) {
  std::vector<std::string> errs;
  fail_if(!fs::is_regular_file(a.gen.contexts_path), errs,
          "contexts: no such file: " + a.gen.contexts_path);
  fail_if(!fs::is_regular_file(a.world_path), errs, "world: no such file: " + a.world_path);
  fail_if(!fs::is_regular_file(a.judge_path), errs, "judge: no such file: " + a.judge_path);
  fail_if(a.gen.model_expert.empty(), errs, "model-expert: required");
  fail_if(a.param != "alpha" && a.param != "tau_cd", errs,
          "param: expected alpha | tau_cd, got '" + a.param + "'");
  throw_if_errors(errs);
  ensure_out_dir(a.gen.common.out);

  // Paper-range default grids.
  std::vector<double> grid;
  if (!a.grid.empty()) grid = parse_grid(a.grid);
  else if (a.param == "alpha") grid = {1e-3, 1e-2, 1e-1, 0.5, 1.0};
  else grid = {0.2, 2.0, 20.0, 200.0, 1000.0};
  if (grid.empty()) throw config_error("grid: empty");

  DecodeConfig cfg = a.gen.decode;
  cfg.strategy = a.param == "alpha" ? Strategy::dexperts : Strategy::cd;
  cfg.seed = a.gen.common.seed;
  cfg.validate();
  Polarity indicator = parse_polarity(a.gen.indicator);

  const std::vector<Example> contexts = load_jsonl(a.gen.contexts_path);
  LoadedModels models = load_models(a.gen);
  const synth::World world = synth::load_world(a.world_path);
  const Seq2SeqModel judge = Seq2SeqModel::load_checkpoint(a.judge_path);

  const eval::SystemFn system = [&](double param) {
    DecodeConfig point_cfg = cfg;
    if (a.param == "alpha") point_cfg.alpha = param;
    else point_cfg.tau_cd = param;
    return generate_for_contexts(models.set, contexts, indicator, point_cfg, 1);
  };
  const std::vector<eval::SweepPoint> points =
      eval::sweep_tradeoff(system, grid, eval::oracle_labeler(world), judge);

  Manifest m;
  m.command = "sweep";
  std::string grid_str;
  for (double v : grid) grid_str += (grid_str.empty() ? "" : ",") + fmt_double(v);
  m.config = {{"seed", std::to_string(a.gen.common.seed)},
              {"param", a.param},
              {"grid", grid_str},
              {"strategy", strategy_str(cfg.strategy)},
              {"indicator", a.gen.indicator}};
  m.inputs[a.gen.contexts_path] = hash_file(a.gen.contexts_path);
  m.inputs[a.world_path] = hash_file(a.world_path);
  m.inputs[a.judge_path] = hash_file(a.judge_path);
  for (const auto& path : {a.gen.model_expert, a.gen.model_neutral, a.gen.model_plus,
                           a.gen.model_amateur})
    if (!path.empty()) m.inputs[path] = hash_file(path);
  m.write(a.gen.common.out + "/manifest.json");

  eval::write_sweep_csv(a.gen.common.out + "/sweep.csv", points, m.hash());
  std::size_t failed = 0;
  for (const auto& p : points)
    if (p.failed) ++failed;
  std::cout << "sweep: " << points.size() << " points (" << failed << " failed)\n";
  return 0;
}

void add_decode_options(CLI::App* cmd, GenerateArgs& a) {
  cmd->add_option("--contexts", a.contexts_path, "Dataset JSONL providing contexts")->required();
  cmd->add_option("--model-expert", a.model_expert, "Primary model checkpoint");
  cmd->add_option("--model-neutral", a.model_neutral, "Indicator-conditioned model (dexperts)");
  cmd->add_option("--model-plus", a.model_plus, "Likely-only model (dexperts)");
  cmd->add_option("--model-amateur", a.model_amateur, "Likely-only model (cd)");
  cmd->add_option("--indicator", a.indicator, "Generation indicator, default ~");
  cmd->add_option("--max-len", a.decode.max_len, "Maximum generated length");
  cmd->add_option("--beam-size", a.decode.beam_size, "Beam size");
  cmd->add_option("--num-groups", a.decode.num_groups, "Diverse beam groups (0 = beam_size)");
  cmd->add_option("--diversity-penalty", a.decode.diversity_penalty, "Diverse beam penalty");
  cmd->add_option("--top-k", a.decode.top_k, "Top-k for sampling");
  cmd->add_option("--alpha", a.decode.alpha, "DExperts fusion strength");
  cmd->add_option("--dexperts-top-k", a.decode.dexperts_top_k,
                  "Optional top-k pre-mask on the base logits (0 = off)");
  cmd->add_option("--tau-cd", a.decode.tau_cd, "CD amateur temperature");
  cmd->add_option("--plausibility-alpha", a.decode.plausibility_alpha,
                  "CD candidate threshold in (0, 1]");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Less-likely text generation toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file: key = value with [subcommand] sections");
  app.allow_config_extras(CLI::config_extras_mode::error);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Build a synthetic world and emit datasets");
  add_common(synth_cmd, synth_args.common);
  synth_cmd->add_option("--n-families", synth_args.n_families, "Scenario families (>= 2)");
  synth_cmd->add_option("--templates-per-family", synth_args.templates_per_family,
                        "Continuation templates per family (>= 4)");
  synth_cmd->add_option("--theta-hi", synth_args.theta_hi, "Likely threshold");
  synth_cmd->add_option("--theta-lo", synth_args.theta_lo, "Irrelevant threshold");
  synth_cmd->add_option("--n-train", synth_args.n_train, "Training examples");
  synth_cmd->add_option("--n-val", synth_args.n_val, "Validation examples");
  synth_cmd->add_option("--n-test", synth_args.n_test, "Test examples");

  MineArgs mine_args;
  auto* mine_cmd = app.add_subcommand("mine", "Mine indicator examples from report text");
  add_common(mine_cmd, mine_args.common);
  mine_cmd->add_option("--reports", mine_args.reports_dir, "Directory of report .txt files")
      ->required();
  mine_cmd->add_option("--lexicon", mine_args.lexicon_path, "Indicator lexicon file")->required();
  mine_cmd->add_option("--window", mine_args.window, "Prior-sentence window (default 6)");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd, train_args.common);
  train_cmd->add_option("--data", train_args.data_path, "Training dataset JSONL")->required();
  train_cmd->add_option("--mode", train_args.mode, "mle | mle_ll | brainstorm | brainstorm_prime");
  train_cmd->add_option("--view-filter", train_args.view_filter,
                        "Restrict materialized views: none | likely | less_likely");
  train_cmd->add_option("--epochs", train_args.epochs, "Training epochs");
  train_cmd->add_option("--lr", train_args.lr, "Learning rate");
  train_cmd->add_option("--batch-size", train_args.batch_size, "Batch size");
  train_cmd->add_option("--w-s", train_args.weights.w_s, "Similarity loss weight");
  train_cmd->add_option("--w-m", train_args.weights.w_m, "Margin loss weight");
  train_cmd->add_option("--margin", train_args.weights.margin, "Margin (log space)");
  train_cmd->add_option("--tau", train_args.weights.tau, "Similarity temperature");
  train_cmd->add_option("--hard-negative-weight", train_args.weights.hard_negative_weight,
                        "Hard negative weight");
  train_cmd->add_option("--embed-dim", train_args.embed_dim, "Embedding dimension");
  train_cmd->add_option("--hidden-dim", train_args.hidden_dim, "Hidden dimension");
  train_cmd->add_option("--max-src-len", train_args.max_src_len, "Maximum source length");
  train_cmd->add_option("--max-tgt-len", train_args.max_tgt_len, "Maximum target length");

  GenerateArgs gen_args;
  auto* gen_cmd = app.add_subcommand("generate", "Generate outputs for dataset contexts");
  add_common(gen_cmd, gen_args.common);
  add_decode_options(gen_cmd, gen_args);
  gen_cmd->add_option("--strategy", gen_args.strategy,
                      "greedy | top_k | diverse_beam | dexperts | cd");
  gen_cmd->add_option("--n-best", gen_args.n_best, "Outputs kept per context");

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score generations");
  add_common(eval_cmd, eval_args.common);
  eval_cmd->add_option("--generations", eval_args.generations_path, "Generations JSONL")
      ->required();
  eval_cmd->add_option("--world", eval_args.world_path, "World JSON (oracle labeler)")
      ->required();
  eval_cmd->add_option("--judge", eval_args.judge_path, "Judge checkpoint for perplexity")
      ->required();
  eval_cmd->add_option("--baseline", eval_args.baseline_path,
                       "Baseline generations for the paired bootstrap");
  eval_cmd->add_option("--classifier-data", eval_args.classifier_data_path,
                       "Labeled pairs to train the classifier on");
  eval_cmd->add_option("--resamples", eval_args.resamples, "Bootstrap resamples (>= 1000)");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Fraction-perplexity trade-off curve");
  add_common(sweep_cmd, sweep_args.gen.common);
  add_decode_options(sweep_cmd, sweep_args.gen);
  sweep_cmd->add_option("--param", sweep_args.param, "alpha (dexperts) | tau_cd (cd)");
  sweep_cmd->add_option("--grid", sweep_args.grid, "Comma-separated parameter values");
  sweep_cmd->add_option("--world", sweep_args.world_path, "World JSON")->required();
  sweep_cmd->add_option("--judge", sweep_args.judge_path, "Judge checkpoint")->required();

  try {
    app.parse(argc, argv);
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (mine_cmd->parsed()) return run_mine(mine_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (gen_cmd->parsed()) return run_generate(gen_args);
    if (eval_cmd->parsed()) return run_evaluate(eval_args);
    if (sweep_cmd->parsed()) return run_sweep(sweep_args);
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
