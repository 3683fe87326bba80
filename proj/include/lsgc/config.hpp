#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lsgc/datapipe.hpp"
#include "lsgc/trainer.hpp"

namespace lsgc::config {

// Line-oriented `key = value` text with `[section]` headers. Keys are stored
// as "section.key"; '#' and ';' start comment lines.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  // Throws ConfigError for any key outside `known`.
  void check_known(const std::vector<std::string>& known) const;

  // Canonical rendering, sorted by key.
  std::string dump() const;
  // FNV-1a of dump(), hex.
  std::string hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

const std::vector<std::string>& known_keys();

// Paths in the config resolve against this directory (the config's own
// directory, or the working directory for defaults).
std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value);

train::TrainConfig train_config(const Config& cfg, Mode mode, const std::filesystem::path& base = ".");
data::SynthSpec synth_spec(const Config& cfg, stego::CandidatePool pool);
std::vector<stego::CandidatePool> synth_pools(const Config& cfg);
data::FilterRules filter_rules(const Config& cfg);
data::SplitSpec split_spec(const Config& cfg);

}  // namespace lsgc::config
