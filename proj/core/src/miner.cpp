#include "brainstorm/miner.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "brainstorm/errors.hpp"

namespace brainstorm::miner {

using nlohmann::json;

namespace {

std::string to_lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string normalize_ws(const std::string& s) {
  std::string out;
  bool in_space = true;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space) out += ' ';
      in_space = true;
    } else {
      out += c;
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

std::string strip_terminal_punct(std::string s) {
  s = trim(s);
  while (!s.empty()) {
    const char c = s.back();
    if (c == '.' || c == '!' || c == '?' || c == ',' || c == ';' || c == ':') s.pop_back();
    else break;
  }
  return trim(s);
}

const std::vector<std::string>& protected_abbreviations() {
  static const std::vector<std::string> abbr = {
      "dr",  "mr",  "mrs", "ms", "vs", "e.g", "i.e", "etc", "fig",
      "cf",  "no",  "cm",  "mm", "approx", "ca", "st"};
  return abbr;
}

// The word ending at position `dot` (exclusive) counts as protected when it
// is a single capital initial or a known abbreviation.
bool protected_before(const std::string& text, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && !std::isspace(static_cast<unsigned char>(text[b - 1]))) --b;
  std::string word = text.substr(b, dot - b);
  if (word.size() == 1 && std::isupper(static_cast<unsigned char>(word[0]))) return true;
  const std::string lower = to_lower(word);
  const auto& abbr = protected_abbreviations();
  return std::find(abbr.begin(), abbr.end(), lower) != abbr.end();
}

}  // namespace

IndicatorLexicon IndicatorLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open lexicon: " + path);
  std::vector<LexiconEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream row(stripped);
    while (std::getline(row, field, '|')) fields.push_back(trim(field));
    if (fields.size() != 5)
      throw data_error(path + ":" + std::to_string(lineno) +
                       ": expected 'raw | polarity | direction | canonical | flip'");
    LexiconEntry e;
    e.raw = to_lower(fields[0]);
    e.polarity = parse_polarity(fields[1]);
    if (fields[2] == "follows") e.direction = Direction::follows;
    else if (fields[2] == "precedes") e.direction = Direction::precedes;
    else
      throw data_error(path + ":" + std::to_string(lineno) +
                       ": direction must be 'follows' or 'precedes'");
    e.canonical = fields[3];
    e.flip = fields[4];
    entries.push_back(std::move(e));
  }
  return from_entries(std::move(entries));
}

IndicatorLexicon IndicatorLexicon::from_entries(std::vector<LexiconEntry> entries) {
  IndicatorLexicon lex;
  lex.entries_ = std::move(entries);
  std::stable_sort(lex.entries_.begin(), lex.entries_.end(),
                   [](const LexiconEntry& a, const LexiconEntry& b) {
                     return a.raw.size() > b.raw.size();
                   });
  lex.validate();
  return lex;
}

void IndicatorLexicon::validate() const {
  if (entries_.empty()) throw data_error("lexicon is empty");
  std::map<std::string, std::pair<Polarity, std::string>> canon;  // canonical -> (pol, flip)
  std::map<std::string, std::string> raw_seen;
  for (const auto& e : entries_) {
    if (e.raw.empty() || e.canonical.empty() || e.flip.empty())
      throw data_error("lexicon: empty field in entry '" + e.raw + "'");
    auto [it, inserted] = raw_seen.emplace(e.raw, e.canonical);
    if (!inserted) throw data_error("lexicon: duplicate raw phrase '" + e.raw + "'");
    auto found = canon.find(e.canonical);
    if (found == canon.end()) {
      canon.emplace(e.canonical, std::make_pair(e.polarity, e.flip));
    } else if (found->second.first != e.polarity || found->second.second != e.flip) {
      throw data_error("lexicon: canonical '" + e.canonical +
                       "' has inconsistent polarity or flip target");
    }
  }
  for (const auto& [c, pf] : canon) {
    auto target = canon.find(pf.second);
    if (target == canon.end())
      throw data_error("lexicon: flip target '" + pf.second + "' of '" + c +
                       "' is not a canonical form");
    if (target->second.first == pf.first)
      throw data_error("lexicon: flip of '" + c + "' does not reverse polarity");
    if (target->second.second != c)
      throw data_error("lexicon: flip mapping is not an involution at '" + c + "'");
  }
}

std::vector<std::string> IndicatorLexicon::canonicals() const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (std::find(out.begin(), out.end(), e.canonical) == out.end())
      out.push_back(e.canonical);
  std::sort(out.begin(), out.end());
  return out;
}

const LexiconEntry& IndicatorLexicon::unify(const std::string& raw_phrase) const {
  const std::string lower = to_lower(trim(raw_phrase));
  for (const auto& e : entries_)
    if (e.raw == lower) return e;
  throw data_error("lexicon: unknown phrase '" + raw_phrase + "'");
}

const std::string& IndicatorLexicon::flip_canonical(const std::string& canonical) const {
  for (const auto& e : entries_)
    if (e.canonical == canonical) return e.flip;
  throw data_error("lexicon: unknown canonical form '" + canonical + "'");
}

Polarity IndicatorLexicon::polarity_of(const std::string& canonical) const {
  for (const auto& e : entries_)
    if (e.canonical == canonical) return e.polarity;
  throw data_error("lexicon: unknown canonical form '" + canonical + "'");
}

std::optional<IndicatorLexicon::Match> IndicatorLexicon::detect(
    const std::string& sentence) const {
  const std::string lower = to_lower(sentence);
  for (std::size_t pos = 0; pos < lower.size(); ++pos) {
    if (pos > 0 && is_word_char(lower[pos - 1])) continue;  // must start at a word boundary
    for (const auto& e : entries_) {  // sorted longest-first
      if (pos + e.raw.size() > lower.size()) continue;
      if (lower.compare(pos, e.raw.size(), e.raw) != 0) continue;
      const std::size_t end = pos + e.raw.size();
      if (end < lower.size() && is_word_char(lower[end])) continue;
      return Match{pos, end, &e};
    }
  }
  return std::nullopt;
}

std::vector<std::string> segment_sentences(const std::string& report_text) {
  const std::string text = normalize_ws(report_text);
  std::vector<std::string> sentences;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    const bool at_end = i + 1 == text.size();
    if (!at_end && text[i + 1] != ' ') continue;  // decimals, abbreviated tokens
    if (c == '.' && protected_before(text, i)) continue;
    const std::string sentence = trim(text.substr(start, i + 1 - start));
    if (!sentence.empty()) sentences.push_back(sentence);
    start = i + 1;
  }
  const std::string tail = trim(text.substr(start));
  if (!tail.empty()) sentences.push_back(tail);
  return sentences;
}

std::optional<MinedExample> extract_example(std::span<const std::string> sentences,
                                            std::size_t idx,
                                            const IndicatorLexicon::Match& match,
                                            std::size_t window, std::string* reject_reason) {
  if (idx >= sentences.size()) throw data_error("extract_example: sentence index out of range");
  const std::string& sentence = sentences[idx];
  const std::string pre = trim(sentence.substr(0, match.begin));
  const std::string post = trim(sentence.substr(match.end));

  std::string findings_sub, interpretation;
  if (match.entry->direction == Direction::follows) {
    findings_sub = pre;
    interpretation = strip_terminal_punct(post);
  } else {
    // Interpretation is the clause just before the indicator.
    const std::size_t boundary = pre.find_last_of(",;");
    if (boundary == std::string::npos) {
      interpretation = strip_terminal_punct(pre);
      findings_sub.clear();
    } else {
      interpretation = strip_terminal_punct(trim(pre.substr(boundary + 1)));
      findings_sub = trim(pre.substr(0, boundary));
    }
  }

  if (interpretation.empty()) {
    if (reject_reason) *reject_reason = "empty interpretation";
    return std::nullopt;
  }

  std::string findings;
  const std::size_t first = idx >= window ? idx - window : 0;
  for (std::size_t i = first; i < idx; ++i) {
    if (!findings.empty()) findings += ' ';
    findings += sentences[i];
  }
  if (!findings_sub.empty()) {
    if (!findings.empty()) findings += ' ';
    findings += findings_sub;
  }
  if (findings.empty()) {
    if (reject_reason) *reject_reason = "empty findings";
    return std::nullopt;
  }

  MinedExample ex;
  ex.findings = findings;
  ex.canonical = match.entry->canonical;
  ex.polarity = match.entry->polarity;
  ex.interpretation = interpretation;
  ex.sentence_index = idx;
  return ex;
}

namespace {

std::string report_id_of(const std::string& path) {
  std::size_t slash = path.find_last_of("/\\");
  std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
  std::size_t dot = name.find_last_of('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

}  // namespace

MineStats mine_corpus(std::vector<std::string> report_paths, const IndicatorLexicon& lexicon,
                      const std::string& out_path, std::size_t window) {
  std::sort(report_paths.begin(), report_paths.end(),
            [](const std::string& a, const std::string& b) {
              return report_id_of(a) < report_id_of(b);
            });

  MineStats stats;
  std::ofstream out(out_path);
  if (!out) throw data_error("cannot write mined dataset: " + out_path);

  for (const auto& path : report_paths) {
    std::ifstream in(path);
    if (!in) {
      stats.file_errors.push_back(path + ": cannot open");
      continue;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    if (trim(text).empty()) continue;

    const std::string report_id = report_id_of(path);
    const std::vector<std::string> sentences = segment_sentences(text);
    for (std::size_t idx = 0; idx < sentences.size(); ++idx) {
      const auto match = lexicon.detect(sentences[idx]);
      if (!match) continue;
      std::string reason;
      auto mined = extract_example(sentences, idx, *match, window, &reason);
      if (!mined) {
        ++stats.n_rejected;
        continue;
      }
      mined->report_id = report_id;
      if (mined->polarity == Polarity::likely) ++stats.n_likely;
      else ++stats.n_less_likely;

      json j;
      j["context"] = mined->findings;
      j["indicator"] = polarity_str(mined->polarity);
      j["target"] = mined->interpretation;
      j["pair_target"] = nullptr;
      j["label"] = nullptr;
      j["canonical"] = mined->canonical;
      j["report_id"] = mined->report_id;
      j["sentence_index"] = mined->sentence_index;
      out << j.dump() << '\n';
    }
  }
  if (!out) throw data_error("write failed: " + out_path);
  return stats;
}

}  // namespace brainstorm::miner
