#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace brainstorm {

// Control signal steering generation toward likely (+) or less-likely (~) outputs.
enum class Polarity { likely, less_likely };

Polarity flip(Polarity p);
const char* polarity_str(Polarity p);        // "+" or "~"
Polarity parse_polarity(const std::string& s);

// Whitespace-token vocabulary with reserved control ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kIndLikely = 4;
  static constexpr int kIndLessLikely = 5;

  Vocab();

  // Adds a token if absent; returns its id.
  int add(const std::string& token);
  int id_or_unk(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }

  int indicator_id(Polarity p) const { return p == Polarity::likely ? kIndLikely : kIndLessLikely; }

  // Whitespace split; unknown words map to unk.
  std::vector<int> encode(const std::string& text) const;
  // Joins tokens with spaces, skipping pad/bos/eos and indicator ids.
  std::string decode(std::span<const int> ids) const;

  static std::vector<std::string> split_words(const std::string& text);

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

}  // namespace brainstorm
