#include "brainstorm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "brainstorm/errors.hpp"

namespace brainstorm::synth {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

// Index of the family owning the context's first token, or -1.
int family_of_context(const World& world, const std::string& context) {
  const auto words = Vocab::split_words(context);
  if (words.empty()) return -1;
  for (std::size_t f = 0; f < world.families.size(); ++f) {
    const auto& pool = world.families[f].context_tokens;
    if (std::find(pool.begin(), pool.end(), words.front()) != pool.end())
      return static_cast<int>(f);
  }
  return -1;
}

std::size_t draw_weighted(Rng& rng, const std::vector<std::size_t>& ids,
                          const std::vector<Template>& templates) {
  double total = 0.0;
  for (auto i : ids) total += templates[i].prob;
  double u = rng.uniform() * total;
  for (auto i : ids) {
    if (u < templates[i].prob) return i;
    u -= templates[i].prob;
  }
  return ids.back();
}

}  // namespace

const char* oracle_label_str(OracleLabel l) {
  switch (l) {
    case OracleLabel::likely: return "likely";
    case OracleLabel::less_likely: return "less_likely";
    case OracleLabel::irrelevant: return "irrelevant";
  }
  return "?";
}

World build_world(std::uint64_t seed, std::size_t n_families, std::size_t templates_per_family,
                  double theta_hi, double theta_lo) {
  std::vector<std::string> errs;
  if (n_families < 2) errs.push_back("n_families must be >= 2");
  if (templates_per_family < 4) errs.push_back("templates_per_family must be >= 4");
  if (!(theta_lo > 0.0 && theta_lo < theta_hi && theta_hi < 1.0))
    errs.push_back("thresholds must satisfy 0 < theta_lo < theta_hi < 1");
  if (!errs.empty()) {
    std::string msg = "build_world:";
    for (const auto& e : errs) msg += " " + e + ";";
    msg.pop_back();
    throw config_error(msg);
  }

  World world;
  world.seed = seed;
  world.theta_hi = theta_hi;
  world.theta_lo = theta_lo;
  Rng rng = substream(seed, "world");

  constexpr std::size_t kContextPool = 3;
  constexpr std::size_t kContPool = 10;

  for (std::size_t f = 0; f < n_families; ++f) {
    Family fam;
    for (std::size_t i = 0; i < kContextPool; ++i)
      fam.context_tokens.push_back("s" + std::to_string(f) + "c" + std::to_string(i));
    std::vector<std::string> cont;
    for (std::size_t i = 0; i < kContPool; ++i)
      cont.push_back("w" + std::to_string(f) + "t" + std::to_string(i));

    const std::size_t n_hi = 1 + rng.index(2);
    const std::size_t n_mid = templates_per_family - n_hi;
    const double mid_lo = 1.5 * theta_lo;
    const double mid_hi = std::min(0.8 * theta_hi,
                                   (1.0 - 1.2 * static_cast<double>(n_hi) * theta_hi) /
                                       static_cast<double>(n_mid));
    if (mid_hi <= mid_lo)
      throw config_error("build_world: infeasible parameters (no valid mid-band probabilities "
                         "for templates_per_family=" +
                         std::to_string(templates_per_family) + ")");

    std::vector<double> probs;
    double mid_mass = 0.0;
    for (std::size_t i = 0; i < n_mid; ++i) {
      probs.push_back(rng.uniform(mid_lo, mid_hi));
      mid_mass += probs.back();
    }
    const double rest = 1.0 - mid_mass;
    if (n_hi == 1) {
      probs.push_back(rest);
    } else {
      const double t = rng.uniform(0.45, 0.55);
      const double p1 = rest * t;
      probs.push_back(p1);
      probs.push_back(rest - p1);
    }

    // Distinct fixed token sequences, lengths 3-8.
    std::set<std::string> seen;
    for (std::size_t i = 0; i < templates_per_family; ++i) {
      Template tpl;
      tpl.prob = probs[i];
      int attempts = 0;
      for (;;) {
        if (++attempts > 200)
          throw config_error("build_world: could not draw distinct templates");
        tpl.tokens.clear();
        const std::size_t len = 3 + rng.index(6);
        for (std::size_t j = 0; j < len; ++j) tpl.tokens.push_back(cont[rng.index(kContPool)]);
        if (seen.insert(join(tpl.tokens)).second) break;
      }
      fam.templates.push_back(std::move(tpl));
    }

    double sum = 0.0;
    bool has_hi = false, has_mid = false;
    for (const auto& t : fam.templates) {
      sum += t.prob;
      if (t.prob >= theta_hi) has_hi = true;
      if (t.prob > theta_lo && t.prob < theta_hi) has_mid = true;
    }
    if (std::abs(sum - 1.0) > 1e-12 || !has_hi || !has_mid)
      throw config_error("build_world: internal probability construction failed");
    world.families.push_back(std::move(fam));
  }
  return world;
}

Example sample_example(const World& world, Rng& rng) {
  const std::size_t f = rng.index(world.families.size());
  const Family& fam = world.families[f];

  std::vector<std::string> ctx;
  const std::size_t ctx_len = 2 + rng.index(3);
  for (std::size_t i = 0; i < ctx_len; ++i)
    ctx.push_back(fam.context_tokens[rng.index(fam.context_tokens.size())]);

  std::vector<std::size_t> hi_ids, mid_ids;
  for (std::size_t i = 0; i < fam.templates.size(); ++i) {
    const double p = fam.templates[i].prob;
    if (p >= world.theta_hi) hi_ids.push_back(i);
    else if (p > world.theta_lo && p < world.theta_hi) mid_ids.push_back(i);
  }
  const std::size_t hi = draw_weighted(rng, hi_ids, fam.templates);
  const std::size_t mid = draw_weighted(rng, mid_ids, fam.templates);

  Example ex;
  ex.context = join(ctx);
  ex.indicator = Polarity::less_likely;
  ex.target = join(fam.templates[mid].tokens);
  ex.pair_target = join(fam.templates[hi].tokens);
  ex.label = "less_likely";
  return ex;
}

OracleLabel oracle_label(const World& world, const std::string& context,
                         const std::string& output) {
  const int f = family_of_context(world, context);
  if (f < 0) return OracleLabel::irrelevant;
  const Family& fam = world.families[static_cast<std::size_t>(f)];
  const std::string normalized = join(Vocab::split_words(output));
  for (const auto& tpl : fam.templates) {
    if (join(tpl.tokens) != normalized) continue;
    if (tpl.prob >= world.theta_hi) return OracleLabel::likely;
    if (tpl.prob > world.theta_lo) return OracleLabel::less_likely;
    return OracleLabel::irrelevant;
  }
  return OracleLabel::irrelevant;
}

void save_world(const World& world, const std::string& path) {
  json j;
  j["seed"] = world.seed;
  j["theta_hi"] = world.theta_hi;
  j["theta_lo"] = world.theta_lo;
  j["families"] = json::array();
  for (const auto& fam : world.families) {
    json jf;
    jf["context_tokens"] = fam.context_tokens;
    jf["templates"] = json::array();
    for (const auto& t : fam.templates)
      jf["templates"].push_back(json{{"tokens", t.tokens}, {"prob", t.prob}});
    j["families"].push_back(std::move(jf));
  }
  std::ofstream out(path);
  if (!out) throw data_error("cannot write world: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw data_error("write failed: " + path);
}

World load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open world: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error("bad world file " + path + ": " + e.what());
  }
  World world;
  try {
    world.seed = j.at("seed").get<std::uint64_t>();
    world.theta_hi = j.at("theta_hi").get<double>();
    world.theta_lo = j.at("theta_lo").get<double>();
    for (const auto& jf : j.at("families")) {
      Family fam;
      fam.context_tokens = jf.at("context_tokens").get<std::vector<std::string>>();
      for (const auto& jt : jf.at("templates")) {
        Template t;
        t.tokens = jt.at("tokens").get<std::vector<std::string>>();
        t.prob = jt.at("prob").get<double>();
        fam.templates.push_back(std::move(t));
      }
      world.families.push_back(std::move(fam));
    }
  } catch (const json::exception& e) {
    throw data_error("bad world file " + path + ": " + e.what());
  }
  return world;
}

void emit_dataset(const World& world, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                  const EmitPaths& paths) {
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw config_error("emit_dataset: split sizes must be >= 1");
  const std::pair<std::string, std::size_t> splits[] = {
      {paths.train, n_train}, {paths.val, n_val}, {paths.test, n_test}};
  const char* stream_names[] = {"emit-train", "emit-val", "emit-test"};
  for (int s = 0; s < 3; ++s) {
    Rng rng = substream(world.seed, stream_names[s]);
    std::vector<Example> examples;
    examples.reserve(splits[s].second);
    for (std::size_t i = 0; i < splits[s].second; ++i)
      examples.push_back(sample_example(world, rng));
    save_jsonl(splits[s].first, examples);
  }
}

}  // namespace brainstorm::synth
