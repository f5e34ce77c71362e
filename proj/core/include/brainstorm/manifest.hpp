#pragma once

#include <map>
#include <string>

namespace brainstorm {

// FNV-1a of the file bytes, as 16 hex digits.
std::string hash_file(const std::string& path);
std::string hash_string(const std::string& data);

// Run provenance: command, resolved configuration and input hashes. The
// manifest hash is embedded in or referenced by every produced artifact.
struct Manifest {
  std::string command;
  std::map<std::string, std::string> config;  // resolved key -> value
  std::map<std::string, std::string> inputs;  // path -> content hash

  std::string to_json() const;
  std::string hash() const { return hash_string(to_json()); }
  void write(const std::string& path) const;
};

}  // namespace brainstorm
