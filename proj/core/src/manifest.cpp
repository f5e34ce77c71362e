#include "brainstorm/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "brainstorm/errors.hpp"
#include "brainstorm/rng.hpp"

namespace brainstorm {

namespace {

std::string to_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string hash_string(const std::string& data) { return to_hex(fnv1a64(data)); }

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file for hashing: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return hash_string(buffer.str());
}

std::string Manifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config;
  j["inputs"] = inputs;
  return j.dump(2);
}

void Manifest::write(const std::string& path) const {
  nlohmann::json j = nlohmann::json::parse(to_json());
  j["manifest_hash"] = hash();
  std::ofstream out(path);
  if (!out) throw data_error("cannot write manifest: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw data_error("write failed: " + path);
}

}  // namespace brainstorm
