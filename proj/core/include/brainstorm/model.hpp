#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "brainstorm/autodiff.hpp"
#include "brainstorm/vocab.hpp"

namespace brainstorm {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 48;
  std::size_t hidden_dim = 64;
  std::size_t encoder_layers = 1;
  std::size_t decoder_layers = 1;
  std::size_t max_src_len = 16;
  std::size_t max_tgt_len = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

// Single-layer bidirectional recurrent encoder + recurrent decoder with
// additive attention. All forward passes are recorded on an ad::Tape, so the
// same code path serves training, scoring and generation.
class Seq2SeqModel {
 public:
  Seq2SeqModel(ModelConfig cfg, Vocab vocab);

  const ModelConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }

  std::size_t num_params() const;
  std::vector<ad::Tensor>& params() { return params_; }
  const std::vector<ad::Tensor>& params() const { return params_; }

  // Parameter leaves registered on a tape; one Graph per forward batch.
  struct Graph {
    ad::Tape* tape = nullptr;
    std::vector<ad::Var> params;
  };
  Graph graph(ad::Tape& tape, bool requires_grad) const;

  // Encoder output: per-token states (src_len x hidden), attention keys and
  // the pooled representation over non-pad positions.
  struct EncodedInput {
    ad::Var states;
    ad::Var keys;
    ad::Var pooled;
    std::vector<int> src;
    std::vector<double> attn_mask;  // 0 for usable positions, -1e30 for pads
  };

  EncodedInput encode(Graph& g, std::span<const int> context, Polarity indicator) const;

  struct DecoderCursor {
    ad::Var state;
  };
  DecoderCursor decoder_start(Graph& g, const EncodedInput& enc) const;
  // Consumes one token, returns the logits for the following position.
  ad::Var decoder_step(Graph& g, const EncodedInput& enc, DecoderCursor& cur, int token) const;

  // prefix must start with bos and fit max_tgt_len.
  ad::Var next_token_logits(Graph& g, const EncodedInput& enc, std::span<const int> prefix) const;

  // Sum of token log-probs. target must end with eos; no length normalization.
  ad::Var sequence_log_prob(Graph& g, std::span<const int> context, Polarity indicator,
                            std::span<const int> target) const;
  double sequence_log_prob(std::span<const int> context, Polarity indicator,
                           std::span<const int> target) const;
  std::vector<double> per_token_log_probs(std::span<const int> context, Polarity indicator,
                                          std::span<const int> target) const;

  // Teacher-forced per-step log-prob rows (steps x vocab) for target.
  ad::Var target_log_prob_rows(Graph& g, const EncodedInput& enc,
                               std::span<const int> target) const;

  // Mean-pooled decoder states over non-pad target positions.
  ad::Var decoder_repr(Graph& g, const EncodedInput& enc, std::span<const int> target) const;

  void save_checkpoint(const std::string& path) const;
  static Seq2SeqModel load_checkpoint(const std::string& path);

 private:
  std::size_t effective_target_len(std::span<const int> target) const;

  ModelConfig cfg_;
  Vocab vocab_;
  std::vector<ad::Tensor> params_;  // declaration order; see model.cpp
};

}  // namespace brainstorm
