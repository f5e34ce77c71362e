#include "brainstorm/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "brainstorm/errors.hpp"
#include "brainstorm/rng.hpp"

namespace brainstorm {

namespace {

// Parameter declaration order; the checkpoint writes raw arrays in this order.
enum ParamId : std::size_t {
  kEmbed = 0,
  kEncFwdX, kEncFwdH, kEncFwdB,
  kEncBwdX, kEncBwdH, kEncBwdB,
  kEncProjW, kEncProjB,
  kAttnQueryW, kAttnQueryB, kAttnKeyW, kAttnV,
  kDecInitW, kDecInitB,
  kDecInW, kDecRecW, kDecCtxW, kDecB,
  kOutW, kOutB,
  kNumParams
};

constexpr char kMagic[4] = {'B', 'S', 'T', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

ad::Tensor glorot(Rng& rng, std::size_t rows, std::size_t cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = rng.uniform(-limit, limit);
  return ad::Tensor{{rows, cols}, std::move(data), false, std::nullopt};
}

ad::Tensor glorot_vec(Rng& rng, std::size_t n) {
  const double limit = std::sqrt(6.0 / static_cast<double>(n + 1));
  std::vector<double> data(n);
  for (auto& v : data) v = rng.uniform(-limit, limit);
  return ad::Tensor{{n}, std::move(data), false, std::nullopt};
}

ad::Tensor zeros_vec(std::size_t n) {
  return ad::Tensor{{n}, std::vector<double>(n, 0.0), false, std::nullopt};
}

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const char* what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw data_error(std::string("corrupt checkpoint (truncated at ") + what + ")");
  return v;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 1 || embed_dim < 1 || hidden_dim < 1 || encoder_layers < 1 ||
      decoder_layers < 1)
    throw config_error("model config: all dimensions must be >= 1");
  if (max_src_len < 2 || max_tgt_len < 2)
    throw config_error("model config: max lengths must be >= 2");
  if (encoder_layers != 1 || decoder_layers != 1)
    throw config_error("model config: only single-layer encoder/decoder is supported");
}

Seq2SeqModel::Seq2SeqModel(ModelConfig cfg, Vocab vocab)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  if (cfg_.vocab_size == 0) cfg_.vocab_size = vocab_.size();
  if (cfg_.vocab_size != vocab_.size())
    throw config_error("model config: vocab_size does not match vocabulary");
  cfg_.validate();

  const std::size_t V = cfg_.vocab_size, E = cfg_.embed_dim, H = cfg_.hidden_dim;
  Rng rng = substream(cfg_.seed, "init");
  params_.resize(kNumParams);
  params_[kEmbed] = glorot(rng, V, E);
  params_[kEncFwdX] = glorot(rng, E, H);
  params_[kEncFwdH] = glorot(rng, H, H);
  params_[kEncFwdB] = zeros_vec(H);
  params_[kEncBwdX] = glorot(rng, E, H);
  params_[kEncBwdH] = glorot(rng, H, H);
  params_[kEncBwdB] = zeros_vec(H);
  params_[kEncProjW] = glorot(rng, 2 * H, H);
  params_[kEncProjB] = zeros_vec(H);
  params_[kAttnQueryW] = glorot(rng, H, H);
  params_[kAttnQueryB] = zeros_vec(H);
  params_[kAttnKeyW] = glorot(rng, H, H);
  params_[kAttnV] = glorot_vec(rng, H);
  params_[kDecInitW] = glorot(rng, H, H);
  params_[kDecInitB] = zeros_vec(H);
  params_[kDecInW] = glorot(rng, E, H);
  params_[kDecRecW] = glorot(rng, H, H);
  params_[kDecCtxW] = glorot(rng, H, H);
  params_[kDecB] = zeros_vec(H);
  params_[kOutW] = glorot(rng, H, V);
  params_[kOutB] = zeros_vec(V);
}

std::size_t Seq2SeqModel::num_params() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.data.size();
  return n;
}

Seq2SeqModel::Graph Seq2SeqModel::graph(ad::Tape& tape, bool requires_grad) const {
  Graph g;
  g.tape = &tape;
  g.params.reserve(params_.size());
  for (const auto& p : params_) {
    ad::Tensor t = p;
    t.requires_grad = requires_grad;
    t.grad.reset();
    g.params.push_back(tape.leaf(std::move(t)));
  }
  return g;
}

Seq2SeqModel::EncodedInput Seq2SeqModel::encode(Graph& g, std::span<const int> context,
                                                Polarity indicator) const {
  ad::Tape& t = *g.tape;
  const std::size_t H = cfg_.hidden_dim;

  std::vector<int> src;
  src.reserve(context.size() + 1);
  src.push_back(vocab_.indicator_id(indicator));
  src.insert(src.end(), context.begin(), context.end());
  if (src.size() > cfg_.max_src_len)
    throw data_error("encode: source length " + std::to_string(src.size()) +
                     " exceeds max_src_len " + std::to_string(cfg_.max_src_len));

  const std::size_t L = src.size();
  ad::Var X = t.embedding(g.params[kEmbed], src);

  std::vector<ad::Var> fwd(L), bwd(L);
  ad::Var zero = t.constant_vector(std::vector<double>(H, 0.0));
  ad::Var prev = zero;
  for (std::size_t i = 0; i < L; ++i) {
    ad::Var pre = t.add(t.add(t.matmul(t.row(X, i), g.params[kEncFwdX]),
                              t.matmul(prev, g.params[kEncFwdH])),
                        g.params[kEncFwdB]);
    fwd[i] = t.tanh(pre);
    prev = fwd[i];
  }
  prev = zero;
  for (std::size_t i = L; i-- > 0;) {
    ad::Var pre = t.add(t.add(t.matmul(t.row(X, i), g.params[kEncBwdX]),
                              t.matmul(prev, g.params[kEncBwdH])),
                        g.params[kEncBwdB]);
    bwd[i] = t.tanh(pre);
    prev = bwd[i];
  }

  std::vector<ad::Var> states(L);
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<ad::Var> fb{fwd[i], bwd[i]};
    states[i] = t.tanh(t.add(t.matmul(t.concat(fb), g.params[kEncProjW]), g.params[kEncProjB]));
  }

  EncodedInput enc;
  enc.states = t.stack_rows(states);
  enc.keys = t.matmul(enc.states, g.params[kAttnKeyW]);
  enc.src = std::move(src);

  // Mean over non-pad positions; pads are also masked out of attention.
  std::vector<double> pool(L, 0.0);
  enc.attn_mask.assign(L, 0.0);
  std::size_t n_live = 0;
  for (std::size_t i = 0; i < L; ++i) {
    if (enc.src[i] == Vocab::kPad) enc.attn_mask[i] = -1e30;
    else ++n_live;
  }
  if (n_live == 0) throw data_error("encode: source has no non-pad positions");
  for (std::size_t i = 0; i < L; ++i)
    if (enc.src[i] != Vocab::kPad) pool[i] = 1.0 / static_cast<double>(n_live);
  enc.pooled = t.matmul(t.constant_vector(std::move(pool)), enc.states);
  return enc;
}

Seq2SeqModel::DecoderCursor Seq2SeqModel::decoder_start(Graph& g,
                                                        const EncodedInput& enc) const {
  ad::Tape& t = *g.tape;
  return DecoderCursor{
      t.tanh(t.add(t.matmul(enc.pooled, g.params[kDecInitW]), g.params[kDecInitB]))};
}

ad::Var Seq2SeqModel::decoder_step(Graph& g, const EncodedInput& enc, DecoderCursor& cur,
                                   int token) const {
  ad::Tape& t = *g.tape;
  const int ids[1] = {token};
  ad::Var e = t.row(t.embedding(g.params[kEmbed], ids), 0);

  ad::Var query = t.add(t.matmul(cur.state, g.params[kAttnQueryW]), g.params[kAttnQueryB]);
  ad::Var scores = t.matmul(t.tanh(t.add(enc.keys, query)), g.params[kAttnV]);
  bool any_masked = false;
  for (double m : enc.attn_mask)
    if (m != 0.0) any_masked = true;
  if (any_masked) scores = t.add(scores, t.constant_vector(enc.attn_mask));
  ad::Var alpha = t.softmax(scores, 0);
  ad::Var ctx = t.matmul(alpha, enc.states);

  ad::Var pre = t.add(t.add(t.matmul(e, g.params[kDecInW]), t.matmul(cur.state, g.params[kDecRecW])),
                      t.add(t.matmul(ctx, g.params[kDecCtxW]), g.params[kDecB]));
  cur.state = t.tanh(pre);
  return t.add(t.matmul(cur.state, g.params[kOutW]), g.params[kOutB]);
}

ad::Var Seq2SeqModel::next_token_logits(Graph& g, const EncodedInput& enc,
                                        std::span<const int> prefix) const {
  if (prefix.empty() || prefix.front() != Vocab::kBos)
    throw data_error("next_token_logits: prefix must start with bos");
  if (prefix.size() > cfg_.max_tgt_len)
    throw data_error("next_token_logits: prefix exceeds max_tgt_len");
  DecoderCursor cur = decoder_start(g, enc);
  ad::Var logits{};
  for (int tok : prefix) logits = decoder_step(g, enc, cur, tok);
  return logits;
}

std::size_t Seq2SeqModel::effective_target_len(std::span<const int> target) const {
  std::size_t eff = 0;
  while (eff < target.size() && target[eff] != Vocab::kPad) ++eff;
  return eff;
}

ad::Var Seq2SeqModel::target_log_prob_rows(Graph& g, const EncodedInput& enc,
                                           std::span<const int> target) const {
  ad::Tape& t = *g.tape;
  const std::size_t eff = effective_target_len(target);
  if (eff == 0) throw data_error("target is empty");
  if (eff > cfg_.max_tgt_len) throw data_error("target exceeds max_tgt_len");
  DecoderCursor cur = decoder_start(g, enc);
  std::vector<ad::Var> rows(eff);
  for (std::size_t i = 0; i < eff; ++i) {
    const int in_tok = i == 0 ? Vocab::kBos : target[i - 1];
    rows[i] = t.log_softmax(decoder_step(g, enc, cur, in_tok), 0);
  }
  return t.stack_rows(rows);
}

ad::Var Seq2SeqModel::sequence_log_prob(Graph& g, std::span<const int> context,
                                        Polarity indicator,
                                        std::span<const int> target) const {
  const std::size_t eff = effective_target_len(target);
  if (eff == 0 || target[eff - 1] != Vocab::kEos)
    throw data_error("sequence_log_prob: target must end with eos");
  EncodedInput enc = encode(g, context, indicator);
  ad::Tape& t = *g.tape;
  ad::Var rows = target_log_prob_rows(g, enc, target);
  std::vector<ad::Var> picks(eff);
  for (std::size_t i = 0; i < eff; ++i)
    picks[i] = t.pick(t.row(rows, i), static_cast<std::size_t>(target[i]));
  return t.sum(t.concat(picks));
}

double Seq2SeqModel::sequence_log_prob(std::span<const int> context, Polarity indicator,
                                       std::span<const int> target) const {
  ad::Tape tape;
  Graph g = graph(tape, false);
  return tape.value(sequence_log_prob(g, context, indicator, target)).item();
}

std::vector<double> Seq2SeqModel::per_token_log_probs(std::span<const int> context,
                                                      Polarity indicator,
                                                      std::span<const int> target) const {
  const std::size_t eff = effective_target_len(target);
  if (eff == 0 || target[eff - 1] != Vocab::kEos)
    throw data_error("per_token_log_probs: target must end with eos");
  ad::Tape tape;
  Graph g = graph(tape, false);
  EncodedInput enc = encode(g, context, indicator);
  ad::Var rows = target_log_prob_rows(g, enc, target);
  std::vector<double> out(eff);
  const auto& data = tape.value(rows).data;
  const std::size_t V = cfg_.vocab_size;
  for (std::size_t i = 0; i < eff; ++i) out[i] = data[i * V + static_cast<std::size_t>(target[i])];
  return out;
}

ad::Var Seq2SeqModel::decoder_repr(Graph& g, const EncodedInput& enc,
                                   std::span<const int> target) const {
  ad::Tape& t = *g.tape;
  const std::size_t eff = effective_target_len(target);
  if (eff == 0) throw data_error("decoder_repr: target is empty");
  if (eff > cfg_.max_tgt_len) throw data_error("decoder_repr: target exceeds max_tgt_len");
  DecoderCursor cur = decoder_start(g, enc);
  std::vector<ad::Var> states(eff);
  for (std::size_t i = 0; i < eff; ++i) {
    const int in_tok = i == 0 ? Vocab::kBos : target[i - 1];
    decoder_step(g, enc, cur, in_tok);
    states[i] = cur.state;
  }
  ad::Var stacked = t.stack_rows(states);
  std::vector<double> pool(eff, 1.0 / static_cast<double>(eff));
  return t.matmul(t.constant_vector(std::move(pool)), stacked);
}

void Seq2SeqModel::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_pod(out, kFormatVersion);
  for (std::size_t v : {cfg_.vocab_size, cfg_.embed_dim, cfg_.hidden_dim, cfg_.encoder_layers,
                        cfg_.decoder_layers, cfg_.max_src_len, cfg_.max_tgt_len})
    write_pod(out, static_cast<std::uint32_t>(v));
  write_pod(out, cfg_.seed);
  write_pod(out, static_cast<std::uint32_t>(vocab_.size()));
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    const std::string& tok = vocab_.token(static_cast<int>(i));
    write_pod(out, static_cast<std::uint32_t>(tok.size()));
    out.write(tok.data(), static_cast<std::streamsize>(tok.size()));
  }
  for (const auto& p : params_)
    out.write(reinterpret_cast<const char*>(p.data.data()),
              static_cast<std::streamsize>(p.data.size() * sizeof(double)));
  if (!out) throw data_error("write failed: " + path);
}

Seq2SeqModel Seq2SeqModel::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error(std::string("checkpoint magic mismatch: expected BSTM, found '") +
                     std::string(magic, in ? 4 : 0) + "'");
  const auto version = read_pod<std::uint32_t>(in, "version");
  if (version != kFormatVersion)
    throw data_error("checkpoint version mismatch: expected " +
                     std::to_string(kFormatVersion) + ", found " + std::to_string(version));
  ModelConfig cfg;
  cfg.vocab_size = read_pod<std::uint32_t>(in, "vocab_size");
  cfg.embed_dim = read_pod<std::uint32_t>(in, "embed_dim");
  cfg.hidden_dim = read_pod<std::uint32_t>(in, "hidden_dim");
  cfg.encoder_layers = read_pod<std::uint32_t>(in, "encoder_layers");
  cfg.decoder_layers = read_pod<std::uint32_t>(in, "decoder_layers");
  cfg.max_src_len = read_pod<std::uint32_t>(in, "max_src_len");
  cfg.max_tgt_len = read_pod<std::uint32_t>(in, "max_tgt_len");
  cfg.seed = read_pod<std::uint64_t>(in, "seed");

  const auto vocab_count = read_pod<std::uint32_t>(in, "vocab_count");
  Vocab vocab;
  for (std::uint32_t i = 0; i < vocab_count; ++i) {
    const auto len = read_pod<std::uint32_t>(in, "token length");
    std::string tok(len, '\0');
    in.read(tok.data(), len);
    if (!in) throw data_error("corrupt checkpoint (truncated in vocab)");
    if (i < 6) {
      if (vocab.token(static_cast<int>(i)) != tok)
        throw data_error("corrupt checkpoint: reserved token mismatch at id " +
                         std::to_string(i));
      continue;
    }
    vocab.add(tok);
  }
  if (vocab.size() != cfg.vocab_size)
    throw data_error("corrupt checkpoint: vocab count does not match config");

  Seq2SeqModel model(cfg, std::move(vocab));
  for (auto& p : model.params_) {
    in.read(reinterpret_cast<char*>(p.data.data()),
            static_cast<std::streamsize>(p.data.size() * sizeof(double)));
    if (!in) throw data_error("corrupt checkpoint (truncated in weights)");
  }
  char extra;
  if (in.read(&extra, 1)) throw data_error("corrupt checkpoint (trailing bytes)");
  return model;
}

}  // namespace brainstorm
