#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "brainstorm/dataset.hpp"
#include "brainstorm/model.hpp"

namespace brainstorm {

struct LossWeights {
  double w_s = 1.0;
  double w_m = 10.0;
  double margin = 0.005;  // log space
  double tau = 1.0;
  double hard_negative_weight = 10.0;

  void validate() const;
};

enum class TrainMode { mle, mle_ll, brainstorm, brainstorm_prime };

TrainMode parse_train_mode(const std::string& s);
const char* train_mode_str(TrainMode m);

// Restricts which (context, indicator, target) views are materialized.
enum class ViewFilter { none, likely, less_likely };

// Turns examples into training rows for a mode. Paired examples contribute
// both views for mle, the matching view for filters, and one indicator drawn
// per example (substream "indicator") for the brainstorm modes.
std::vector<TrainRow> materialize_rows(std::span<const Example> examples, const Vocab& vocab,
                                       TrainMode mode, ViewFilter filter, std::uint64_t seed,
                                       std::size_t* n_filtered_out = nullptr);

// Hinge on the indicator-flipped sequence log-prob gap:
// max(0, logP(y|x,~i) - logP(y|x,i) + m). Gradients flow through both scores.
ad::Var margin_loss(Seq2SeqModel::Graph& g, const Seq2SeqModel& model, const TrainRow& row,
                    double margin);

// In-batch contrastive similarity over encoder/decoder representations; the
// anchor's opposite-polarity target is the hard negative, weighted inside the
// denominator, which also contains the positive itself.
ad::Var sim_loss_paired(Seq2SeqModel::Graph& g, const Seq2SeqModel& model,
                        std::span<const TrainRow> batch, const LossWeights& weights);

// Mean cosine similarity between the two indicator-conditioned encodings of
// the same context.
ad::Var sim_loss_unpaired(Seq2SeqModel::Graph& g, const Seq2SeqModel& model,
                          std::span<const TrainRow> batch);

struct LossBreakdown {
  ad::Var total;
  double ce = 0.0;
  double sim = 0.0;
  double margin = 0.0;
};

// L_CE + w_s * L_sim + w_m * L_margin for the brainstorm modes; plain L_CE
// for mle / mle_ll. Terms with zero weight are skipped entirely, so the
// zero-weight loss is bit-compatible with mle.
LossBreakdown total_loss(Seq2SeqModel::Graph& g, const Seq2SeqModel& model,
                         std::span<const TrainRow> batch, const LossWeights& weights,
                         TrainMode mode);

struct EpochLog {
  std::size_t epoch = 0;
  double ce = 0.0;
  double sim = 0.0;
  double margin = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  bool aborted = false;
  std::string abort_reason;
};

struct TrainOptions {
  std::size_t epochs = 10;
  double lr = 0.05;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

// Plain gradient descent. Deterministic given the seed; on a non-finite loss
// the weights are rolled back to the end of the previous epoch and training
// stops.
TrainResult train(Seq2SeqModel& model, std::span<const TrainRow> rows,
                  const LossWeights& weights, TrainMode mode, const TrainOptions& opts);

void write_loss_log_csv(const std::string& path, std::span<const EpochLog> log,
                        const std::string& manifest_hash);

}  // namespace brainstorm
