#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "brainstorm/model.hpp"

namespace brainstorm {

enum class Strategy { greedy, top_k, diverse_beam, dexperts, cd };

Strategy parse_strategy(const std::string& s);
const char* strategy_str(Strategy s);

struct DecodeConfig {
  Strategy strategy = Strategy::greedy;
  std::size_t max_len = 16;
  std::size_t beam_size = 4;
  std::size_t num_groups = 0;  // 0 means one group per beam
  double diversity_penalty = 1.0;
  std::size_t top_k = 5;
  double alpha = 0.0;               // dexperts fusion strength
  std::size_t dexperts_top_k = 0;   // optional pre-mask on the base logits; 0 = off
  double tau_cd = 1.0;              // amateur temperature
  double plausibility_alpha = 0.1;  // cd candidate threshold
  std::uint64_t seed = 0;

  std::size_t groups() const { return num_groups == 0 ? beam_size : num_groups; }
  void validate() const;
};

struct GenerationResult {
  // Sequences of generated token ids (no bos); each ends with eos or at max_len.
  std::vector<std::vector<int>> sequences;
  // Per-sequence log-prob under the strategy's reference model: the model
  // itself for greedy/top_k/diverse_beam, the fused distribution for
  // dexperts, and the expert model for cd.
  std::vector<double> log_probs;
  Strategy strategy = Strategy::greedy;
};

// Next-token scores in log domain (possibly -inf for masked tokens) given the
// generated prefix. Pure: same prefix, same scores.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> scores(std::span<const int> prefix) = 0;
};

// Softmax of fused logits base + alpha * (neutral - plus). A nonzero
// top_k_premask first restricts the base logits to their top-k entries.
std::vector<double> dexperts_next_distribution(std::span<const double> base_logits,
                                               std::span<const double> neutral_logits,
                                               std::span<const double> plus_logits, double alpha,
                                               std::size_t top_k_premask = 0);

struct CdStepScores {
  std::vector<double> scores;    // log p_expert - log p_amateur_tau; -inf outside candidates
  std::vector<char> candidate;   // plausibility mask; always contains the expert argmax
};

CdStepScores cd_step_scores(std::span<const double> expert_logits,
                            std::span<const double> amateur_logits, double tau_cd,
                            double plausibility_alpha);

// Beam search over an arbitrary step scorer. With groups() > 1, groups are
// decoded sequentially per step and a later group's candidate scores are
// penalized by diversity_penalty times the count of that token already chosen
// at this step by earlier groups. Ties break toward lower token ids.
GenerationResult beam_search_scored(StepScorer& scorer, int eos_id, const DecodeConfig& cfg);

GenerationResult greedy_scored(StepScorer& scorer, int eos_id, std::size_t max_len);

// Model roles for generate(): "expert" is the primary model for every
// strategy; dexperts additionally needs "neutral" and "plus", cd needs
// "amateur". Every model is queried with the same (context, indicator).
using ModelSet = std::map<std::string, const Seq2SeqModel*>;

GenerationResult generate(const ModelSet& models, std::span<const int> context,
                          Polarity indicator, const DecodeConfig& cfg);

GenerationResult greedy(const Seq2SeqModel& model, std::span<const int> context,
                        Polarity indicator, std::size_t max_len);

GenerationResult diverse_beam_search(const Seq2SeqModel& model, std::span<const int> context,
                                     Polarity indicator, const DecodeConfig& cfg);

}  // namespace brainstorm
