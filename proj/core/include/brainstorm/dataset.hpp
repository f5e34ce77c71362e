#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "brainstorm/vocab.hpp"

namespace brainstorm {

// One training/eval record. pair_target, when present, is the opposite-polarity
// reference for the same context.
struct Example {
  std::string context;
  Polarity indicator = Polarity::less_likely;
  std::string target;
  std::optional<std::string> pair_target;
  std::optional<std::string> label;  // likely | less_likely | irrelevant
};

std::vector<Example> load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, std::span<const Example> examples);

// Reserved tokens plus the sorted unique words of all text fields.
Vocab build_vocab(std::span<const Example> examples);

// Token-level view of one (context, indicator, target) triple.
struct TrainRow {
  std::vector<int> context;              // no indicator token, no bos/eos
  Polarity indicator = Polarity::less_likely;
  std::vector<int> target;               // ends with eos
  std::optional<std::vector<int>> pair;  // opposite-polarity target, ends with eos
};

TrainRow make_row(const Example& ex, const Vocab& vocab, bool use_pair_view);

}  // namespace brainstorm
