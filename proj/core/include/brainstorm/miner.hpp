#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "brainstorm/vocab.hpp"

namespace brainstorm::miner {

enum class Direction { follows, precedes };

struct LexiconEntry {
  std::string raw;        // lowercase surface phrase
  Polarity polarity = Polarity::likely;
  Direction direction = Direction::follows;
  std::string canonical;  // unified form
  std::string flip;       // canonical of the opposite polarity
};

// Uncertainty-phrase table. The flip mapping over canonicals is a
// polarity-reversing involution; load() validates that.
class IndicatorLexicon {
 public:
  static IndicatorLexicon load(const std::string& path);
  static IndicatorLexicon from_entries(std::vector<LexiconEntry> entries);

  std::span<const LexiconEntry> entries() const { return entries_; }
  std::vector<std::string> canonicals() const;

  // Canonical form of a raw phrase; unknown phrase is an error.
  const LexiconEntry& unify(const std::string& raw_phrase) const;
  // Opposite-polarity canonical; unknown canonical is an error.
  const std::string& flip_canonical(const std::string& canonical) const;
  Polarity polarity_of(const std::string& canonical) const;

  struct Match {
    std::size_t begin = 0;
    std::size_t end = 0;
    const LexiconEntry* entry = nullptr;
  };
  // Longest match at the earliest position, word-boundary aware; at most one
  // match per sentence.
  std::optional<Match> detect(const std::string& sentence) const;

 private:
  void validate() const;
  std::vector<LexiconEntry> entries_;  // sorted by raw length descending
};

// Deterministic split on sentence terminators with abbreviation protection
// (single-letter initials and a fixed list such as "vs.", "e.g.").
std::vector<std::string> segment_sentences(const std::string& report_text);

struct MinedExample {
  std::string findings;
  std::string canonical;
  Polarity polarity = Polarity::likely;
  std::string interpretation;
  std::string report_id;
  std::size_t sentence_index = 0;
};

// Findings window: up to `window` prior sentences plus the sub-sentence before
// the indicator. Returns nullopt with a reason if the example is rejected.
std::optional<MinedExample> extract_example(std::span<const std::string> sentences,
                                            std::size_t idx, const IndicatorLexicon::Match& match,
                                            std::size_t window, std::string* reject_reason);

struct MineStats {
  std::size_t n_likely = 0;
  std::size_t n_less_likely = 0;
  std::size_t n_rejected = 0;
  std::vector<std::string> file_errors;
};

// Mines every report into JSONL at out_path (shared dataset schema plus
// canonical/report_id/sentence_index), ordered by (report id, sentence index).
MineStats mine_corpus(std::vector<std::string> report_paths, const IndicatorLexicon& lexicon,
                      const std::string& out_path, std::size_t window = 6);

}  // namespace brainstorm::miner
