#pragma once

#include <stdexcept>
#include <string>

namespace brainstorm {

// Invalid configuration or parameters supplied by the caller. CLI exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or unreadable data: datasets, checkpoints, lexicons. CLI exit code 3.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace brainstorm
