#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "brainstorm/dataset.hpp"
#include "brainstorm/rng.hpp"

namespace brainstorm::synth {

enum class OracleLabel { likely, less_likely, irrelevant };

const char* oracle_label_str(OracleLabel l);

struct Template {
  std::vector<std::string> tokens;  // fixed sequence, length 3-8
  double prob = 0.0;                // true conditional probability given the family
};

struct Family {
  std::vector<std::string> context_tokens;  // disjoint across families
  std::vector<Template> templates;          // probs sum to 1
};

// Generative world with exactly known conditional probabilities.
struct World {
  std::uint64_t seed = 0;
  double theta_hi = 0.15;
  double theta_lo = 0.01;
  std::vector<Family> families;
};

// Deterministic in seed. Every family gets >= 1 template with prob >= theta_hi
// and >= 1 in (theta_lo, theta_hi); per-family probs sum to 1.
World build_world(std::uint64_t seed, std::size_t n_families, std::size_t templates_per_family,
                  double theta_hi = 0.15, double theta_lo = 0.01);

// One (context, y~, y+) record: target drawn from the mid band, pair from the
// high band, labels exact by construction.
Example sample_example(const World& world, Rng& rng);

// Exact lookup of the output's true conditional probability given the
// context's family; thresholds decide the label, non-template outputs are
// irrelevant.
OracleLabel oracle_label(const World& world, const std::string& context,
                         const std::string& output);

void save_world(const World& world, const std::string& path);
World load_world(const std::string& path);

struct EmitPaths {
  std::string train, val, test;
};

// JSONL splits drawn from disjoint named substreams of the world seed.
void emit_dataset(const World& world, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                  const EmitPaths& paths);

}  // namespace brainstorm::synth
