#include "brainstorm/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "brainstorm/errors.hpp"

namespace brainstorm {

using nlohmann::json;

std::vector<Example> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open dataset: " + path);
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw data_error(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    Example ex;
    try {
      ex.context = j.at("context").get<std::string>();
      ex.indicator = parse_polarity(j.at("indicator").get<std::string>());
      ex.target = j.at("target").get<std::string>();
      if (j.contains("pair_target") && !j["pair_target"].is_null())
        ex.pair_target = j["pair_target"].get<std::string>();
      if (j.contains("label") && !j["label"].is_null())
        ex.label = j["label"].get<std::string>();
    } catch (const json::exception& e) {
      throw data_error(path + ":" + std::to_string(lineno) + ": missing field: " + e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void save_jsonl(const std::string& path, std::span<const Example> examples) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write dataset: " + path);
  for (const auto& ex : examples) {
    json j;
    j["context"] = ex.context;
    j["indicator"] = polarity_str(ex.indicator);
    j["target"] = ex.target;
    j["pair_target"] = ex.pair_target ? json(*ex.pair_target) : json(nullptr);
    j["label"] = ex.label ? json(*ex.label) : json(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) throw data_error("write failed: " + path);
}

Vocab build_vocab(std::span<const Example> examples) {
  std::set<std::string> words;
  for (const auto& ex : examples) {
    for (auto& w : Vocab::split_words(ex.context)) words.insert(w);
    for (auto& w : Vocab::split_words(ex.target)) words.insert(w);
    if (ex.pair_target)
      for (auto& w : Vocab::split_words(*ex.pair_target)) words.insert(w);
  }
  Vocab v;
  for (const auto& w : words) v.add(w);
  return v;
}

TrainRow make_row(const Example& ex, const Vocab& vocab, bool use_pair_view) {
  if (use_pair_view && !ex.pair_target)
    throw data_error("example has no pair_target for the requested view");
  TrainRow row;
  row.context = vocab.encode(ex.context);
  row.indicator = use_pair_view ? flip(ex.indicator) : ex.indicator;
  row.target = vocab.encode(use_pair_view ? *ex.pair_target : ex.target);
  row.target.push_back(Vocab::kEos);
  if (ex.pair_target) {
    row.pair = vocab.encode(use_pair_view ? ex.target : *ex.pair_target);
    row.pair->push_back(Vocab::kEos);
  }
  return row;
}

}  // namespace brainstorm
