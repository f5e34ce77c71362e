#include "brainstorm/objectives.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "brainstorm/errors.hpp"
#include "brainstorm/rng.hpp"

namespace brainstorm {

void LossWeights::validate() const {
  if (w_s < 0.0 || w_m < 0.0) throw config_error("loss weights w_s, w_m must be >= 0");
  if (tau <= 0.0) throw config_error("similarity temperature tau must be > 0");
  if (margin < 0.0) throw config_error("margin must be >= 0");
  if (hard_negative_weight < 1.0) throw config_error("hard_negative_weight must be >= 1");
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "mle") return TrainMode::mle;
  if (s == "mle_ll") return TrainMode::mle_ll;
  if (s == "brainstorm") return TrainMode::brainstorm;
  if (s == "brainstorm_prime") return TrainMode::brainstorm_prime;
  throw config_error("unknown training mode: '" + s +
                     "' (expected mle | mle_ll | brainstorm | brainstorm_prime)");
}

const char* train_mode_str(TrainMode m) {
  switch (m) {
    case TrainMode::mle: return "mle";
    case TrainMode::mle_ll: return "mle_ll";
    case TrainMode::brainstorm: return "brainstorm";
    case TrainMode::brainstorm_prime: return "brainstorm_prime";
  }
  return "?";
}

std::vector<TrainRow> materialize_rows(std::span<const Example> examples, const Vocab& vocab,
                                       TrainMode mode, ViewFilter filter, std::uint64_t seed,
                                       std::size_t* n_filtered_out) {
  std::vector<TrainRow> rows;
  std::size_t filtered = 0;

  if (mode == TrainMode::mle_ll && filter == ViewFilter::likely)
    throw config_error("mle_ll admits only less-likely targets");
  if (mode == TrainMode::mle_ll) filter = ViewFilter::less_likely;

  const auto admit = [&](Polarity p) {
    switch (filter) {
      case ViewFilter::none: return true;
      case ViewFilter::likely: return p == Polarity::likely;
      case ViewFilter::less_likely: return p == Polarity::less_likely;
    }
    return true;
  };

  switch (mode) {
    case TrainMode::mle:
    case TrainMode::mle_ll: {
      for (const auto& ex : examples) {
        if (admit(ex.indicator)) rows.push_back(make_row(ex, vocab, false));
        else ++filtered;
        if (ex.pair_target) {
          if (admit(flip(ex.indicator))) rows.push_back(make_row(ex, vocab, true));
          else ++filtered;
        }
      }
      if (rows.empty())
        throw data_error(std::string("no training rows after filtering (mode ") +
                         train_mode_str(mode) + ")");
      break;
    }
    case TrainMode::brainstorm:
    case TrainMode::brainstorm_prime: {
      if (mode == TrainMode::brainstorm) {
        for (const auto& ex : examples)
          if (!ex.pair_target)
            throw data_error(
                "brainstorm requires paired examples (both a likely and a less-likely "
                "target per context); found an example without pair_target");
      }
      Rng rng = substream(seed, "indicator");
      for (const auto& ex : examples) {
        if (!ex.pair_target) {
          rows.push_back(make_row(ex, vocab, false));
          continue;
        }
        const Polarity drawn = rng.uniform() < 0.5 ? Polarity::likely : Polarity::less_likely;
        rows.push_back(make_row(ex, vocab, drawn != ex.indicator));
      }
      if (rows.empty()) throw data_error("empty dataset");
      break;
    }
  }
  if (n_filtered_out) *n_filtered_out = filtered;
  return rows;
}

namespace {

// Sum of the per-step log-probs of the target under already-computed rows.
ad::Var sum_picks(ad::Tape& t, ad::Var rows, std::span<const int> target, std::size_t eff) {
  std::vector<ad::Var> picks(eff);
  for (std::size_t i = 0; i < eff; ++i)
    picks[i] = t.pick(t.row(rows, i), static_cast<std::size_t>(target[i]));
  return t.sum(t.concat(picks));
}

std::size_t effective_len(std::span<const int> target) {
  std::size_t eff = 0;
  while (eff < target.size() && target[eff] != Vocab::kPad) ++eff;
  return eff;
}

void check_target_ends_with_eos(std::span<const int> target) {
  const std::size_t eff = effective_len(target);
  if (eff == 0 || target[eff - 1] != Vocab::kEos)
    throw data_error("target must end with eos");
}

// Shared per-row forward state used by the loss terms.
struct RowForward {
  Seq2SeqModel::EncodedInput enc;
  ad::Var log_prob_rows;   // teacher-forced (steps x vocab)
  ad::Var target_repr;     // pooled decoder states of the target
  std::size_t eff = 0;
};

RowForward forward_row(Seq2SeqModel::Graph& g, const Seq2SeqModel& model, const TrainRow& row) {
  check_target_ends_with_eos(row.target);
  RowForward f;
  f.enc = model.encode(g, row.context, row.indicator);
  f.log_prob_rows = model.target_log_prob_rows(g, f.enc, row.target);
  f.target_repr = model.decoder_repr(g, f.enc, row.target);
  f.eff = effective_len(row.target);
  return f;
}

ad::Var margin_term(Seq2SeqModel::Graph& g, const Seq2SeqModel& model, const TrainRow& row,
                    double margin, const RowForward& fwd) {
  ad::Tape& t = *g.tape;
  ad::Var lp_true = sum_picks(t, fwd.log_prob_rows, row.target, fwd.eff);
  Seq2SeqModel::EncodedInput enc_flip = model.encode(g, row.context, flip(row.indicator));
  ad::Var rows_flip = model.target_log_prob_rows(g, enc_flip, row.target);
  ad::Var lp_flip = sum_picks(t, rows_flip, row.target, fwd.eff);
  return t.hinge(t.add_const(t.sub(lp_flip, lp_true), margin));
}

ad::Var mean_of(ad::Tape& t, std::vector<ad::Var>& terms) {
  return t.mean(t.concat(terms));
}

// Eq.-style contrastive term for one anchor: -log softmax over
// [pos, hard, others...] of sim/tau with log-weight on the hard negative.
ad::Var anchor_sim_term(ad::Tape& t, ad::Var anchor, ad::Var positive, ad::Var hard,
                        std::span<const ad::Var> others, const LossWeights& w) {
  std::vector<ad::Var> sims;
  sims.reserve(2 + others.size());
  sims.push_back(t.scale(t.cosine_similarity(anchor, positive), 1.0 / w.tau));
  sims.push_back(t.add_const(t.scale(t.cosine_similarity(anchor, hard), 1.0 / w.tau),
                             std::log(w.hard_negative_weight)));
  for (ad::Var o : others) sims.push_back(t.scale(t.cosine_similarity(anchor, o), 1.0 / w.tau));
  ad::Var logits = t.concat(sims);
  return t.scale(t.pick(t.log_softmax(logits, 0), 0), -1.0);
}

}  // namespace

ad::Var margin_loss(Seq2SeqModel::Graph& g, const Seq2SeqModel& model, const TrainRow& row,
                    double margin) {
  RowForward fwd = forward_row(g, model, row);
  return margin_term(g, model, row, margin, fwd);
}

ad::Var sim_loss_paired(Seq2SeqModel::Graph& g, const Seq2SeqModel& model,
                        std::span<const TrainRow> batch, const LossWeights& weights) {
  if (batch.empty()) throw data_error("sim_loss_paired: empty batch");
  for (const auto& row : batch)
    if (!row.pair)
      throw data_error(
          "sim_loss_paired: batch is not paired; use sim_loss_unpaired for unpaired data");
  ad::Tape& t = *g.tape;

  std::vector<RowForward> fwd;
  std::vector<ad::Var> hard;
  fwd.reserve(batch.size());
  for (const auto& row : batch) {
    fwd.push_back(forward_row(g, model, row));
    hard.push_back(model.decoder_repr(g, fwd.back().enc, *row.pair));
  }
  std::vector<ad::Var> terms;
  terms.reserve(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    std::vector<ad::Var> others;
    others.reserve(batch.size() - 1);
    for (std::size_t j = 0; j < batch.size(); ++j)
      if (j != k) others.push_back(fwd[j].target_repr);
    terms.push_back(
        anchor_sim_term(t, fwd[k].enc.pooled, fwd[k].target_repr, hard[k], others, weights));
  }
  return mean_of(t, terms);
}

ad::Var sim_loss_unpaired(Seq2SeqModel::Graph& g, const Seq2SeqModel& model,
                          std::span<const TrainRow> batch) {
  if (batch.empty()) throw data_error("sim_loss_unpaired: empty batch");
  ad::Tape& t = *g.tape;
  std::vector<ad::Var> terms;
  terms.reserve(batch.size());
  for (const auto& row : batch) {
    Seq2SeqModel::EncodedInput enc = model.encode(g, row.context, row.indicator);
    Seq2SeqModel::EncodedInput enc_flip = model.encode(g, row.context, flip(row.indicator));
    terms.push_back(t.cosine_similarity(enc.pooled, enc_flip.pooled));
  }
  return mean_of(t, terms);
}

LossBreakdown total_loss(Seq2SeqModel::Graph& g, const Seq2SeqModel& model,
                         std::span<const TrainRow> batch, const LossWeights& weights,
                         TrainMode mode) {
  if (batch.empty()) throw data_error("total_loss: empty batch");
  weights.validate();
  ad::Tape& t = *g.tape;

  if (mode == TrainMode::mle_ll) {
    for (const auto& row : batch)
      if (row.indicator != Polarity::less_likely)
        throw data_error("mle_ll: batch contains a likely-target row");
  }
  if (mode == TrainMode::brainstorm) {
    for (const auto& row : batch)
      if (!row.pair) throw data_error("brainstorm: batch is not paired");
  }

  const bool with_aux = mode == TrainMode::brainstorm || mode == TrainMode::brainstorm_prime;
  const bool want_sim = with_aux && weights.w_s != 0.0;
  const bool want_margin = with_aux && weights.w_m != 0.0;

  std::vector<RowForward> fwd;
  fwd.reserve(batch.size());
  for (const auto& row : batch) fwd.push_back(forward_row(g, model, row));

  std::vector<ad::Var> ce_terms;
  ce_terms.reserve(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    std::span<const int> tgt(batch[k].target.data(), fwd[k].eff);
    ce_terms.push_back(t.cross_entropy(fwd[k].log_prob_rows, tgt, Vocab::kPad));
  }
  ad::Var ce = mean_of(t, ce_terms);

  LossBreakdown out;
  out.ce = t.value(ce).item();
  ad::Var total = ce;

  if (want_margin) {
    std::vector<ad::Var> terms;
    terms.reserve(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k)
      terms.push_back(margin_term(g, model, batch[k], weights.margin, fwd[k]));
    ad::Var m = mean_of(t, terms);
    out.margin = t.value(m).item();
    total = t.add(total, t.scale(m, weights.w_m));
  }

  if (want_sim) {
    ad::Var s{};
    if (mode == TrainMode::brainstorm) {
      std::vector<ad::Var> hard;
      hard.reserve(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k)
        hard.push_back(model.decoder_repr(g, fwd[k].enc, *batch[k].pair));
      std::vector<ad::Var> terms;
      terms.reserve(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k) {
        std::vector<ad::Var> others;
        others.reserve(batch.size() - 1);
        for (std::size_t j = 0; j < batch.size(); ++j)
          if (j != k) others.push_back(fwd[j].target_repr);
        terms.push_back(
            anchor_sim_term(t, fwd[k].enc.pooled, fwd[k].target_repr, hard[k], others, weights));
      }
      s = mean_of(t, terms);
    } else {
      std::vector<ad::Var> terms;
      terms.reserve(batch.size());
      for (const auto& row : batch) {
        Seq2SeqModel::EncodedInput enc_flip = model.encode(g, row.context, flip(row.indicator));
        terms.push_back(t.cosine_similarity(fwd[&row - batch.data()].enc.pooled, enc_flip.pooled));
      }
      s = mean_of(t, terms);
    }
    out.sim = t.value(s).item();
    total = t.add(total, t.scale(s, weights.w_s));
  }

  out.total = total;
  return out;
}

TrainResult train(Seq2SeqModel& model, std::span<const TrainRow> rows,
                  const LossWeights& weights, TrainMode mode, const TrainOptions& opts) {
  if (opts.lr < 0.0) throw config_error("learning rate must be >= 0");
  if (opts.epochs < 1) throw config_error("epochs must be >= 1");
  if (opts.batch_size < 1) throw config_error("batch size must be >= 1");
  if (rows.empty()) throw data_error("train: empty dataset");
  weights.validate();

  TrainResult result;
  Rng shuffle_rng = substream(opts.seed, "train");
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    // Snapshot for rollback on divergence.
    const std::vector<ad::Tensor> snapshot = model.params();
    shuffle_rng.shuffle(order);

    EpochLog log;
    log.epoch = epoch + 1;
    std::size_t n_rows = 0;
    bool diverged = false;

    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::vector<TrainRow> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(rows[order[i]]);

      ad::Tape tape;
      Seq2SeqModel::Graph g = model.graph(tape, true);
      LossBreakdown loss = total_loss(g, model, batch, weights, mode);
      const double total_value = tape.value(loss.total).item();
      if (!std::isfinite(total_value)) {
        diverged = true;
        break;
      }
      tape.backward(loss.total);

      const std::size_t bs = batch.size();
      log.ce += loss.ce * static_cast<double>(bs);
      log.sim += loss.sim * static_cast<double>(bs);
      log.margin += loss.margin * static_cast<double>(bs);
      log.total += total_value * static_cast<double>(bs);
      n_rows += bs;

      auto& params = model.params();
      for (std::size_t p = 0; p < params.size(); ++p) {
        const auto& grad = tape.grad(g.params[p]);
        for (std::size_t i = 0; i < grad.size(); ++i)
          params[p].data[i] -= opts.lr * grad[i];
      }
    }

    if (diverged) {
      model.params() = snapshot;
      result.aborted = true;
      result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch + 1) +
                            "; weights rolled back to the previous epoch";
      break;
    }

    const double n = static_cast<double>(n_rows);
    log.ce /= n;
    log.sim /= n;
    log.margin /= n;
    log.total /= n;
    result.log.push_back(log);
  }
  return result;
}

void write_loss_log_csv(const std::string& path, std::span<const EpochLog> log,
                        const std::string& manifest_hash) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write loss log: " + path);
  if (!manifest_hash.empty()) out << "# manifest_hash=" << manifest_hash << "\n";
  out << "epoch,l_ce,l_sim,l_margin,total\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.ce, e.sim,
                  e.margin, e.total);
    out << buf;
  }
  if (!out) throw data_error("write failed: " + path);
}

}  // namespace brainstorm
