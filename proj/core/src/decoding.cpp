#include "brainstorm/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "brainstorm/errors.hpp"
#include "brainstorm/rng.hpp"

namespace brainstorm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> stable_softmax(std::span<const double> logits) {
  double mx = kNegInf;
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

// (score desc, shorter first, lexicographically smaller first)
bool sequence_order(const std::pair<double, std::vector<int>>& a,
                    const std::pair<double, std::vector<int>>& b) {
  if (a.first != b.first) return a.first > b.first;
  if (a.second.size() != b.second.size()) return a.second.size() < b.second.size();
  return a.second < b.second;
}

}  // namespace

Strategy parse_strategy(const std::string& s) {
  if (s == "greedy") return Strategy::greedy;
  if (s == "top_k") return Strategy::top_k;
  if (s == "diverse_beam") return Strategy::diverse_beam;
  if (s == "dexperts") return Strategy::dexperts;
  if (s == "cd") return Strategy::cd;
  throw config_error("unknown decoding strategy: '" + s +
                     "' (expected greedy | top_k | diverse_beam | dexperts | cd)");
}

const char* strategy_str(Strategy s) {
  switch (s) {
    case Strategy::greedy: return "greedy";
    case Strategy::top_k: return "top_k";
    case Strategy::diverse_beam: return "diverse_beam";
    case Strategy::dexperts: return "dexperts";
    case Strategy::cd: return "cd";
  }
  return "?";
}

void DecodeConfig::validate() const {
  std::vector<std::string> errs;
  if (max_len < 1) errs.push_back("max_len must be >= 1");
  if (beam_size < 1) errs.push_back("beam_size must be >= 1");
  const std::size_t g = groups();
  if (g < 1 || beam_size < g) errs.push_back("beam_size >= num_groups >= 1 required");
  else if (beam_size % g != 0) errs.push_back("beam_size must be divisible by num_groups");
  if (diversity_penalty < 0.0) errs.push_back("diversity_penalty must be >= 0");
  if (top_k < 1) errs.push_back("top_k must be >= 1");
  if (alpha < 0.0) errs.push_back("alpha must be >= 0");
  if (tau_cd <= 0.0) errs.push_back("tau_cd must be > 0");
  if (!(plausibility_alpha > 0.0 && plausibility_alpha <= 1.0))
    errs.push_back("plausibility_alpha must be in (0, 1]");
  if (!errs.empty()) {
    std::string msg = "decode config:";
    for (const auto& e : errs) msg += " " + e + ";";
    msg.pop_back();
    throw config_error(msg);
  }
}

std::vector<double> dexperts_next_distribution(std::span<const double> base_logits,
                                               std::span<const double> neutral_logits,
                                               std::span<const double> plus_logits, double alpha,
                                               std::size_t top_k_premask) {
  if (base_logits.size() != neutral_logits.size() || base_logits.size() != plus_logits.size())
    throw config_error("dexperts: logit vectors differ in length");
  if (alpha < 0.0) throw config_error("dexperts: alpha must be >= 0");
  std::vector<double> fused(base_logits.size());
  for (std::size_t i = 0; i < fused.size(); ++i)
    fused[i] = base_logits[i] + alpha * (neutral_logits[i] - plus_logits[i]);

  if (top_k_premask > 0 && top_k_premask < base_logits.size()) {
    // Keep only the top-k base tokens (ties toward lower ids).
    std::vector<std::size_t> idx(base_logits.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return base_logits[a] > base_logits[b]; });
    std::vector<char> keep(base_logits.size(), 0);
    for (std::size_t i = 0; i < top_k_premask; ++i) keep[idx[i]] = 1;
    for (std::size_t i = 0; i < fused.size(); ++i)
      if (!keep[i]) fused[i] = kNegInf;
  }
  return stable_softmax(fused);
}

CdStepScores cd_step_scores(std::span<const double> expert_logits,
                            std::span<const double> amateur_logits, double tau_cd,
                            double plausibility_alpha) {
  if (expert_logits.size() != amateur_logits.size())
    throw config_error("cd: logit vectors differ in length");
  if (tau_cd <= 0.0) throw config_error("cd: tau_cd must be > 0");
  if (!(plausibility_alpha > 0.0 && plausibility_alpha <= 1.0))
    throw config_error("cd: plausibility_alpha must be in (0, 1]");

  const std::vector<double> p_expert = stable_softmax(expert_logits);
  std::vector<double> scaled(amateur_logits.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = amateur_logits[i] / tau_cd;
  const std::vector<double> p_amateur = stable_softmax(scaled);

  double max_p = 0.0;
  for (double p : p_expert) max_p = std::max(max_p, p);
  const double threshold = plausibility_alpha * max_p;

  CdStepScores out;
  out.scores.resize(p_expert.size(), kNegInf);
  out.candidate.resize(p_expert.size(), 0);
  for (std::size_t i = 0; i < p_expert.size(); ++i) {
    if (p_expert[i] >= threshold) {
      out.candidate[i] = 1;
      out.scores[i] = std::log(p_expert[i]) - std::log(p_amateur[i]);
    }
  }
  return out;
}

GenerationResult greedy_scored(StepScorer& scorer, int eos_id, std::size_t max_len) {
  std::vector<int> seq;
  double total = 0.0;
  while (seq.size() < max_len) {
    const std::vector<double> s = scorer.scores(seq);
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] > s[best]) best = i;  // ties keep the lowest id
    total += s[best];
    seq.push_back(static_cast<int>(best));
    if (static_cast<int>(best) == eos_id) break;
  }
  GenerationResult r;
  r.sequences.push_back(std::move(seq));
  r.log_probs.push_back(total);
  r.strategy = Strategy::greedy;
  return r;
}

GenerationResult beam_search_scored(StepScorer& scorer, int eos_id, const DecodeConfig& cfg) {
  cfg.validate();
  const std::size_t n_groups = cfg.groups();
  const std::size_t group_size = cfg.beam_size / n_groups;
  const std::size_t vocab = scorer.vocab_size();

  struct Hyp {
    std::vector<int> seq;
    double score = 0.0;  // cumulative, diversity penalty included
    bool finished = false;
  };
  // Each group starts from the single empty hypothesis.
  std::vector<std::vector<Hyp>> groups(n_groups, std::vector<Hyp>{Hyp{}});

  for (std::size_t step = 0; step < cfg.max_len; ++step) {
    bool all_finished = true;
    for (const auto& grp : groups)
      for (const auto& h : grp)
        if (!h.finished) all_finished = false;
    if (all_finished) break;

    std::vector<std::size_t> step_counts(vocab, 0);  // tokens chosen by earlier groups
    for (std::size_t gi = 0; gi < n_groups; ++gi) {
      auto& grp = groups[gi];
      struct Cand {
        double score;
        std::size_t hyp;
        int token;  // -1 for carried-over finished hypotheses
      };
      std::vector<Cand> cands;
      for (std::size_t hi = 0; hi < grp.size(); ++hi) {
        if (grp[hi].finished) {
          cands.push_back({grp[hi].score, hi, -1});
          continue;
        }
        const std::vector<double> s = scorer.scores(grp[hi].seq);
        for (std::size_t v = 0; v < vocab; ++v) {
          if (s[v] == kNegInf) continue;
          const double penalty =
              cfg.diversity_penalty * static_cast<double>(step_counts[v]);
          cands.push_back({grp[hi].score + s[v] - penalty, hi, static_cast<int>(v)});
        }
      }
      std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.hyp != b.hyp) return a.hyp < b.hyp;
        return a.token < b.token;
      });

      std::vector<Hyp> next;
      for (const auto& c : cands) {
        if (next.size() == group_size) break;
        if (c.token < 0) {
          next.push_back(grp[c.hyp]);
          continue;
        }
        Hyp h = grp[c.hyp];
        h.seq.push_back(c.token);
        h.score = c.score;
        h.finished = c.token == eos_id;
        if (!h.finished && h.seq.size() >= cfg.max_len) h.finished = true;
        next.push_back(std::move(h));
        ++step_counts[static_cast<std::size_t>(c.token)];
      }
      grp = std::move(next);
    }
  }

  // Rescore final sequences with raw (unpenalized) step scores.
  std::vector<std::pair<double, std::vector<int>>> pool;
  for (const auto& grp : groups) {
    for (const auto& h : grp) {
      double raw = 0.0;
      for (std::size_t i = 0; i < h.seq.size(); ++i) {
        const std::vector<double> s =
            scorer.scores(std::span<const int>(h.seq.data(), i));
        raw += s[static_cast<std::size_t>(h.seq[i])];
      }
      pool.emplace_back(raw, h.seq);
    }
  }
  std::sort(pool.begin(), pool.end(), sequence_order);

  GenerationResult r;
  r.strategy = Strategy::diverse_beam;
  for (auto& [score, seq] : pool) {
    r.log_probs.push_back(score);
    r.sequences.push_back(std::move(seq));
  }
  return r;
}

namespace {

// Step scorer backed by one model; scores are next-token log-probs.
class ModelScorer : public StepScorer {
 public:
  ModelScorer(const Seq2SeqModel& model, std::span<const int> context, Polarity indicator)
      : model_(model), graph_(model.graph(tape_, false)) {
    enc_ = model.encode(graph_, context, indicator);
  }

  std::size_t vocab_size() const override { return model_.config().vocab_size; }

  std::vector<double> logits(std::span<const int> prefix) {
    std::vector<int> full(prefix.size() + 1);
    full[0] = Vocab::kBos;
    std::copy(prefix.begin(), prefix.end(), full.begin() + 1);
    ad::Var v = model_.next_token_logits(graph_, enc_, full);
    return tape_.value(v).data;
  }

  std::vector<double> scores(std::span<const int> prefix) override {
    std::vector<double> l = logits(prefix);
    const std::vector<double> p = stable_softmax(l);
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = std::log(p[i]);
    return out;
  }

 private:
  const Seq2SeqModel& model_;
  ad::Tape tape_;
  Seq2SeqModel::Graph graph_;
  Seq2SeqModel::EncodedInput enc_;
};

class DexpertsScorer : public StepScorer {
 public:
  DexpertsScorer(ModelScorer& base, ModelScorer& neutral, ModelScorer& plus,
                 const DecodeConfig& cfg)
      : base_(base), neutral_(neutral), plus_(plus), cfg_(cfg) {}

  std::size_t vocab_size() const override { return base_.vocab_size(); }

  std::vector<double> scores(std::span<const int> prefix) override {
    const std::vector<double> dist =
        dexperts_next_distribution(base_.logits(prefix), neutral_.logits(prefix),
                                   plus_.logits(prefix), cfg_.alpha, cfg_.dexperts_top_k);
    std::vector<double> out(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i)
      out[i] = dist[i] > 0.0 ? std::log(dist[i]) : kNegInf;
    return out;
  }

 private:
  ModelScorer& base_;
  ModelScorer& neutral_;
  ModelScorer& plus_;
  DecodeConfig cfg_;
};

class CdScorer : public StepScorer {
 public:
  CdScorer(ModelScorer& expert, ModelScorer& amateur, const DecodeConfig& cfg)
      : expert_(expert), amateur_(amateur), cfg_(cfg) {}

  std::size_t vocab_size() const override { return expert_.vocab_size(); }

  std::vector<double> scores(std::span<const int> prefix) override {
    return cd_step_scores(expert_.logits(prefix), amateur_.logits(prefix), cfg_.tau_cd,
                          cfg_.plausibility_alpha)
        .scores;
  }

 private:
  ModelScorer& expert_;
  ModelScorer& amateur_;
  DecodeConfig cfg_;
};

const Seq2SeqModel& require_role(const ModelSet& models, const char* role, Strategy s) {
  auto it = models.find(role);
  if (it == models.end() || it->second == nullptr)
    throw config_error(std::string("strategy ") + strategy_str(s) +
                       " requires model role '" + role + "'");
  return *it->second;
}

GenerationResult top_k_sample(ModelScorer& scorer, int eos_id, const DecodeConfig& cfg) {
  Rng rng = substream(cfg.seed, "sample");
  std::vector<int> seq;
  double total = 0.0;
  while (seq.size() < cfg.max_len) {
    const std::vector<double> s = scorer.scores(seq);
    const std::size_t k = std::min<std::size_t>(cfg.top_k, s.size());
    std::vector<std::size_t> idx(s.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    idx.resize(k);
    double z = 0.0;
    std::vector<double> p(k);
    for (std::size_t i = 0; i < k; ++i) {
      p[i] = std::exp(s[idx[i]]);
      z += p[i];
    }
    double u = rng.uniform() * z;
    std::size_t chosen = k - 1;
    for (std::size_t i = 0; i < k; ++i) {
      if (u < p[i]) {
        chosen = i;
        break;
      }
      u -= p[i];
    }
    total += s[idx[chosen]];
    seq.push_back(static_cast<int>(idx[chosen]));
    if (seq.back() == eos_id) break;
  }
  GenerationResult r;
  r.sequences.push_back(std::move(seq));
  r.log_probs.push_back(total);
  r.strategy = Strategy::top_k;
  return r;
}

}  // namespace

GenerationResult greedy(const Seq2SeqModel& model, std::span<const int> context,
                        Polarity indicator, std::size_t max_len) {
  ModelScorer scorer(model, context, indicator);
  return greedy_scored(scorer, Vocab::kEos, max_len);
}

GenerationResult diverse_beam_search(const Seq2SeqModel& model, std::span<const int> context,
                                     Polarity indicator, const DecodeConfig& cfg) {
  ModelScorer scorer(model, context, indicator);
  return beam_search_scored(scorer, Vocab::kEos, cfg);
}

GenerationResult generate(const ModelSet& models, std::span<const int> context,
                          Polarity indicator, const DecodeConfig& cfg) {
  cfg.validate();
  const Seq2SeqModel& expert = require_role(models, "expert", cfg.strategy);
  if (cfg.max_len + 1 > expert.config().max_tgt_len)
    throw config_error("max_len exceeds the model's max_tgt_len");

  switch (cfg.strategy) {
    case Strategy::greedy:
      return greedy(expert, context, indicator, cfg.max_len);
    case Strategy::top_k: {
      ModelScorer scorer(expert, context, indicator);
      return top_k_sample(scorer, Vocab::kEos, cfg);
    }
    case Strategy::diverse_beam:
      return diverse_beam_search(expert, context, indicator, cfg);
    case Strategy::dexperts: {
      const Seq2SeqModel& neutral = require_role(models, "neutral", cfg.strategy);
      const Seq2SeqModel& plus = require_role(models, "plus", cfg.strategy);
      if (neutral.config().vocab_size != expert.config().vocab_size ||
          plus.config().vocab_size != expert.config().vocab_size)
        throw config_error("dexperts: models have different vocab sizes");
      ModelScorer base(expert, context, indicator);
      ModelScorer neu(neutral, context, indicator);
      ModelScorer pl(plus, context, indicator);
      DexpertsScorer scorer(base, neu, pl, cfg);
      GenerationResult r = beam_search_scored(scorer, Vocab::kEos, cfg);
      r.strategy = Strategy::dexperts;
      return r;
    }
    case Strategy::cd: {
      const Seq2SeqModel& amateur = require_role(models, "amateur", cfg.strategy);
      if (amateur.config().vocab_size != expert.config().vocab_size)
        throw config_error("cd: models have different vocab sizes");
      ModelScorer exp_scorer(expert, context, indicator);
      ModelScorer ama(amateur, context, indicator);
      CdScorer scorer(exp_scorer, ama, cfg);
      GenerationResult r = beam_search_scored(scorer, Vocab::kEos, cfg);
      // Report expert-model log-probs for the selected sequences.
      for (std::size_t i = 0; i < r.sequences.size(); ++i) {
        double lp = 0.0;
        const auto& seq = r.sequences[i];
        for (std::size_t j = 0; j < seq.size(); ++j) {
          const std::vector<double> s =
              exp_scorer.scores(std::span<const int>(seq.data(), j));
          lp += s[static_cast<std::size_t>(seq[j])];
        }
        r.log_probs[i] = lp;
      }
      r.strategy = Strategy::cd;
      return r;
    }
  }
  throw config_error("unknown strategy");
}

}  // namespace brainstorm
