#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "brainstorm/model.hpp"
#include "brainstorm/synth.hpp"

namespace brainstorm::eval {

// One generated output as stored in the generations JSONL.
struct GenerationRecord {
  std::string context;
  Polarity indicator = Polarity::less_likely;
  std::string output;
  double logprob = 0.0;
  std::string strategy;
};

std::vector<GenerationRecord> load_generations(const std::string& path);

using Labeler = std::function<synth::OracleLabel(const std::string& context,
                                                 const std::string& output)>;

Labeler oracle_labeler(const synth::World& world);

// Share of generations labeled less_likely. Empty input is an error.
double fraction_metric(std::span<const GenerationRecord> generations, const Labeler& labeler);

// exp(mean over all generated tokens, eos included, of NLL under the scorer),
// each output scored against its own (context, indicator).
double perplexity(std::span<const GenerationRecord> generations, const Seq2SeqModel& scorer);

struct LabeledPair {
  std::string context;
  std::string output;
  bool less_likely = false;
};

// Averaged-random-embedding logistic scorer over (x, y) pairs.
class Classifier {
 public:
  static Classifier train(std::span<const LabeledPair> data, std::uint64_t seed);

  bool predict_less_likely(const std::string& context, const std::string& output) const;
  double held_out_accuracy() const { return held_out_accuracy_; }

  static constexpr std::size_t kEmbedDim = 32;  // per text side

 private:
  std::vector<double> feature(const std::string& context, const std::string& output) const;

  std::vector<double> weights_;
  double bias_ = 0.0;
  std::uint64_t emb_seed_ = 0;
  double held_out_accuracy_ = 0.0;
};

struct SweepPoint {
  double param = 0.0;
  double fraction = 0.0;
  double perplexity = 0.0;
  bool failed = false;
  std::string error;
};

using SystemFn = std::function<std::vector<GenerationRecord>(double param)>;

// One (fraction, perplexity) point per grid value; failures are recorded as
// failed rows and the sweep continues.
std::vector<SweepPoint> sweep_tradeoff(const SystemFn& system, std::span<const double> grid,
                                       const Labeler& labeler, const Seq2SeqModel& judge);

void write_sweep_csv(const std::string& path, std::span<const SweepPoint> points,
                     const std::string& manifest_hash);

// Two-sided p-value for the difference in less-likely fraction between two
// systems evaluated on the same examples (1 = less_likely), via paired
// resampling with replacement. Deterministic given the seed.
double paired_bootstrap(std::span<const int> labels_a, std::span<const int> labels_b,
                        std::size_t resamples, std::uint64_t seed);

}  // namespace brainstorm::eval
