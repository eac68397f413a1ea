#pragma once

// Per-task JSON configuration. Every task has a fixed set of keys with
// defaults; a user file may override any of them but may not add new ones.

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace diffdvr::cli {

using nlohmann::json;

// Unknown key, wrong type or malformed file. Exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& task_names();

class RunConfig {
 public:
  // Defaults for `task`; throws ConfigError for unknown tasks.
  explicit RunConfig(const std::string& task);

  void merge(const json& user);
  void merge_file(const std::string& path);
  void set(const std::string& key, const json& value) { merge(json{{key, value}}); }

  const std::string& task() const { return task_; }
  const json& resolved() const { return values_; }

  double number(const std::string& key) const;
  int integer(const std::string& key) const;
  std::uint64_t seed() const;
  std::string text(const std::string& key) const;
  bool flag(const std::string& key) const;
  bool is_null(const std::string& key) const { return values_.at(key).is_null(); }
  const json& raw(const std::string& key) const { return values_.at(key); }

 private:
  std::string task_;
  json values_;
};

}  // namespace diffdvr::cli
