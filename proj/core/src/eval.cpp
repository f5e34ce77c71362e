#include "brainstorm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "brainstorm/errors.hpp"
#include "brainstorm/rng.hpp"

namespace brainstorm::eval {

using nlohmann::json;

std::vector<GenerationRecord> load_generations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open generations: " + path);
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      GenerationRecord r;
      r.context = j.at("context").get<std::string>();
      r.indicator = parse_polarity(j.at("indicator").get<std::string>());
      r.output = j.at("output").get<std::string>();
      r.logprob = j.at("logprob").get<double>();
      r.strategy = j.value("strategy", "");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw data_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Labeler oracle_labeler(const synth::World& world) {
  return [&world](const std::string& context, const std::string& output) {
    return synth::oracle_label(world, context, output);
  };
}

double fraction_metric(std::span<const GenerationRecord> generations, const Labeler& labeler) {
  if (generations.empty()) throw data_error("fraction_metric: empty generation set");
  std::size_t n_less = 0;
  for (const auto& g : generations)
    if (labeler(g.context, g.output) == synth::OracleLabel::less_likely) ++n_less;
  return static_cast<double>(n_less) / static_cast<double>(generations.size());
}

double perplexity(std::span<const GenerationRecord> generations, const Seq2SeqModel& scorer) {
  if (generations.empty()) throw data_error("perplexity: empty generation set");
  double nll = 0.0;
  std::size_t n_tokens = 0;
  for (const auto& g : generations) {
    std::vector<int> target = scorer.vocab().encode(g.output);
    target.push_back(Vocab::kEos);
    const std::vector<int> context = scorer.vocab().encode(g.context);
    const std::vector<double> lps = scorer.per_token_log_probs(context, g.indicator, target);
    for (double lp : lps) nll -= lp;
    n_tokens += lps.size();
  }
  return std::exp(nll / static_cast<double>(n_tokens));
}

namespace {

void add_avg_embedding(std::vector<double>& feat, std::size_t offset, const std::string& text,
                       std::uint64_t emb_seed) {
  const auto words = Vocab::split_words(text);
  if (words.empty()) return;
  for (const auto& w : words) {
    Rng rng(emb_seed ^ fnv1a64(w));
    for (std::size_t d = 0; d < Classifier::kEmbedDim; ++d)
      feat[offset + d] += rng.normal();
  }
  for (std::size_t d = 0; d < Classifier::kEmbedDim; ++d)
    feat[offset + d] /= static_cast<double>(words.size());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<double> Classifier::feature(const std::string& context,
                                        const std::string& output) const {
  std::vector<double> f(2 * kEmbedDim, 0.0);
  add_avg_embedding(f, 0, context, emb_seed_);
  add_avg_embedding(f, kEmbedDim, output, emb_seed_);
  return f;
}

Classifier Classifier::train(std::span<const LabeledPair> data, std::uint64_t seed) {
  bool has_pos = false, has_neg = false;
  for (const auto& d : data) (d.less_likely ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw data_error("train_classifier: both classes must be present");

  Classifier clf;
  clf.emb_seed_ = seed ^ fnv1a64("classifier-emb");
  const std::size_t dim = 2 * kEmbedDim;
  clf.weights_.assign(dim, 0.0);
  clf.bias_ = 0.0;

  // Deterministic 80/20 split for held-out accuracy.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = substream(seed, "classifier-split");
  split_rng.shuffle(order);
  const std::size_t n_train = std::max<std::size_t>(1, data.size() * 4 / 5);

  std::vector<std::vector<double>> feats(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    feats[i] = clf.feature(data[i].context, data[i].output);

  const double lr = 1.0;
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<double> gw(dim, 0.0);
    double gb = 0.0;
    for (std::size_t k = 0; k < n_train; ++k) {
      const std::size_t i = order[k];
      double z = clf.bias_;
      for (std::size_t d = 0; d < dim; ++d) z += clf.weights_[d] * feats[i][d];
      const double err = sigmoid(z) - (data[i].less_likely ? 1.0 : 0.0);
      for (std::size_t d = 0; d < dim; ++d) gw[d] += err * feats[i][d];
      gb += err;
    }
    const double inv = 1.0 / static_cast<double>(n_train);
    for (std::size_t d = 0; d < dim; ++d) clf.weights_[d] -= lr * gw[d] * inv;
    clf.bias_ -= lr * gb * inv;
  }

  std::size_t correct = 0, held = 0;
  for (std::size_t k = n_train; k < data.size(); ++k) {
    const std::size_t i = order[k];
    double z = clf.bias_;
    for (std::size_t d = 0; d < dim; ++d) z += clf.weights_[d] * feats[i][d];
    if ((sigmoid(z) > 0.5) == data[i].less_likely) ++correct;
    ++held;
  }
  clf.held_out_accuracy_ = held == 0 ? 1.0 : static_cast<double>(correct) / held;
  return clf;
}

bool Classifier::predict_less_likely(const std::string& context,
                                     const std::string& output) const {
  const std::vector<double> f = feature(context, output);
  double z = bias_;
  for (std::size_t d = 0; d < f.size(); ++d) z += weights_[d] * f[d];
  return sigmoid(z) > 0.5;
}

std::vector<SweepPoint> sweep_tradeoff(const SystemFn& system, std::span<const double> grid,
                                       const Labeler& labeler, const Seq2SeqModel& judge) {
  if (grid.empty()) throw config_error("sweep: empty parameter grid");
  std::vector<SweepPoint> out;
  for (double param : grid) {
    SweepPoint p;
    p.param = param;
    try {
      const std::vector<GenerationRecord> records = system(param);
      p.fraction = fraction_metric(records, labeler);
      p.perplexity = perplexity(records, judge);
    } catch (const std::exception& e) {
      p.failed = true;
      p.error = e.what();
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_sweep_csv(const std::string& path, std::span<const SweepPoint> points,
                     const std::string& manifest_hash) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write sweep csv: " + path);
  if (!manifest_hash.empty()) out << "# manifest_hash=" << manifest_hash << "\n";
  out << "param,fraction,perplexity,failed\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%d\n", p.param,
                  p.failed ? 0.0 : p.fraction, p.failed ? 0.0 : p.perplexity,
                  p.failed ? 1 : 0);
    out << buf;
  }
  if (!out) throw data_error("write failed: " + path);
}

double paired_bootstrap(std::span<const int> labels_a, std::span<const int> labels_b,
                        std::size_t resamples, std::uint64_t seed) {
  if (labels_a.size() != labels_b.size())
    throw data_error("paired_bootstrap: label lists differ in length");
  if (labels_a.empty()) throw data_error("paired_bootstrap: empty label lists");
  if (resamples < 1000) throw config_error("paired_bootstrap: resamples must be >= 1000");

  const std::size_t n = labels_a.size();
  double delta = 0.0;
  for (std::size_t i = 0; i < n; ++i) delta += labels_a[i] - labels_b[i];
  delta /= static_cast<double>(n);

  Rng rng = substream(seed, "bootstrap");
  std::size_t extreme = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    long diff_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = rng.index(n);
      diff_sum += labels_a[k] - labels_b[k];
    }
    const double centered = static_cast<double>(diff_sum) / static_cast<double>(n) - delta;
    if (std::abs(centered) >= std::abs(delta)) ++extreme;
  }
  return static_cast<double>(extreme + 1) / static_cast<double>(resamples + 1);
}

}  // namespace brainstorm::eval
