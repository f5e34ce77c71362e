#include "brainstorm/vocab.hpp"

#include <sstream>

#include "brainstorm/errors.hpp"

namespace brainstorm {

Polarity flip(Polarity p) {
  return p == Polarity::likely ? Polarity::less_likely : Polarity::likely;
}

const char* polarity_str(Polarity p) { return p == Polarity::likely ? "+" : "~"; }

Polarity parse_polarity(const std::string& s) {
  if (s == "+" || s == "likely") return Polarity::likely;
  if (s == "~" || s == "less_likely") return Polarity::less_likely;
  throw data_error("unknown indicator polarity: '" + s + "'");
}

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>", "<+>", "<~>"}) add(t);
}

int Vocab::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

int Vocab::id_or_unk(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw data_error("token id out of range: " + std::to_string(id));
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocab::split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id_or_unk(w));
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos || id == kIndLikely || id == kIndLessLikely)
      continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

}  // namespace brainstorm
