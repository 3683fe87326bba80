#include "lsgc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lsgc/errors.hpp"

namespace lsgc::config {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw ConfigError(where + ": malformed section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
    cfg.values_[full] = trim(t.substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": '" + key + "' must be an integer, got '" + it->second + "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": '" + key + "' must be a number, got '" + it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(origin_ + ": '" + key + "' must be true or false, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> out;
  std::istringstream in(it->second);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

void Config::check_known(const std::vector<std::string>& known) const {
  for (const auto& [k, v] : values_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError(origin_ + ": unknown key '" + k + "'");
  }
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "model.n_layers", "model.n_heads", "model.d_model", "model.d_ff", "model.max_seq_len", "model.dropout",
      "lora.r", "lora.alpha", "lora.dropout", "lora.targets",
      "train.batch_size", "train.lr", "train.epochs", "train.beta1", "train.beta2", "train.eps",
      "train.weight_decay", "train.grad_clip", "train.seed", "train.eval_batch", "train.repeats",
      "train.validate_each_epoch",
      "prompt.template", "prompt.cls_instruction", "prompt.max_new_tokens",
      "synth.corpus", "synth.order", "synth.smoothing", "synth.covers", "synth.stegos", "synth.length",
      "synth.pools", "synth.seed",
      "data.min_len", "data.max_len", "data.min_printable", "data.ratios", "data.n_per_class", "data.seed",
      "ablate.ranks",
  };
  return keys;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  const std::filesystem::path p(value);
  return p.is_absolute() ? p : base / p;
}

train::TrainConfig train_config(const Config& cfg, Mode mode, const std::filesystem::path& base) {
  train::TrainConfig tc;
  tc.mode = mode;
  tc.model.n_layers = static_cast<int>(cfg.get_int("model.n_layers", tc.model.n_layers));
  tc.model.n_heads = static_cast<int>(cfg.get_int("model.n_heads", tc.model.n_heads));
  tc.model.d_model = static_cast<int>(cfg.get_int("model.d_model", tc.model.d_model));
  tc.model.d_ff = static_cast<int>(cfg.get_int("model.d_ff", tc.model.d_ff));
  tc.model.max_seq_len = static_cast<int>(cfg.get_int("model.max_seq_len", tc.model.max_seq_len));
  tc.model.dropout = cfg.get_double("model.dropout", tc.model.dropout);

  tc.lora = LoraConfig::with_rank(static_cast<int>(cfg.get_int("lora.r", tc.lora.r)));
  tc.lora.lora_alpha = cfg.get_double("lora.alpha", 2.0 * tc.lora.r);
  tc.lora.lora_dropout = cfg.get_double("lora.dropout", tc.lora.lora_dropout);
  if (cfg.has("lora.targets")) {
    tc.lora.targets.clear();
    for (const auto& t : cfg.get_list("lora.targets", {})) tc.lora.targets.push_back(lora_target_from_string(t));
  }

  const auto nonneg = [&](const std::string& key, std::int64_t fallback) {
    const auto v = cfg.get_int(key, fallback);
    if (v < 0) throw ConfigError("'" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  tc.batch_size = nonneg("train.batch_size", static_cast<std::int64_t>(tc.batch_size));
  tc.epochs = nonneg("train.epochs", static_cast<std::int64_t>(tc.epochs));
  tc.adam.lr = cfg.get_double("train.lr", tc.adam.lr);
  tc.adam.beta1 = cfg.get_double("train.beta1", tc.adam.beta1);
  tc.adam.beta2 = cfg.get_double("train.beta2", tc.adam.beta2);
  tc.adam.eps = cfg.get_double("train.eps", tc.adam.eps);
  tc.adam.weight_decay = cfg.get_double("train.weight_decay", tc.adam.weight_decay);
  tc.grad_clip = cfg.get_double("train.grad_clip", tc.grad_clip);
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", static_cast<std::int64_t>(tc.seed)));
  tc.eval_batch = nonneg("train.eval_batch", static_cast<std::int64_t>(tc.eval_batch));
  tc.validate_each_epoch = cfg.get_bool("train.validate_each_epoch", tc.validate_each_epoch);

  if (cfg.has("prompt.template")) tc.prompt = PromptTemplate::load(resolve(base, cfg.get("prompt.template", "")));
  if (cfg.has("prompt.cls_instruction")) {
    std::string s = cfg.get("prompt.cls_instruction", "");
    // "\n" escapes let the instruction end on a newline
    for (std::size_t p; (p = s.find("\\n")) != std::string::npos;) s.replace(p, 2, "\n");
    tc.cls_instruction = s;
  }
  tc.budget.max_new_tokens = static_cast<int>(cfg.get_int("prompt.max_new_tokens", tc.budget.max_new_tokens));
  tc.validate();
  return tc;
}

std::vector<stego::CandidatePool> synth_pools(const Config& cfg) {
  std::vector<stego::CandidatePool> out;
  for (const auto& p : cfg.get_list("synth.pools", {"1"})) out.push_back(stego::CandidatePool::parse(p));
  if (out.empty()) throw ConfigError("synth.pools is empty");
  return out;
}

data::SynthSpec synth_spec(const Config& cfg, stego::CandidatePool pool) {
  data::SynthSpec s;
  const auto covers = cfg.get_int("synth.covers", static_cast<std::int64_t>(s.covers));
  const auto stegos = cfg.get_int("synth.stegos", static_cast<std::int64_t>(s.stegos));
  const auto length = cfg.get_int("synth.length", static_cast<std::int64_t>(s.length));
  if (covers < 0 || stegos < 0) throw ConfigError("synth counts must be non-negative");
  if (length < 4) throw ConfigError("synth.length must be at least 4");
  s.covers = static_cast<std::size_t>(covers);
  s.stegos = static_cast<std::size_t>(stegos);
  s.length = static_cast<std::size_t>(length);
  s.pool = pool;
  s.seed = static_cast<std::uint64_t>(cfg.get_int("synth.seed", 0));
  return s;
}

data::FilterRules filter_rules(const Config& cfg) {
  data::FilterRules r;
  r.min_len = static_cast<std::size_t>(cfg.get_int("data.min_len", static_cast<std::int64_t>(r.min_len)));
  r.max_len = static_cast<std::size_t>(cfg.get_int("data.max_len", static_cast<std::int64_t>(r.max_len)));
  r.min_printable = cfg.get_double("data.min_printable", r.min_printable);
  return r;
}

data::SplitSpec split_spec(const Config& cfg) {
  return data::SplitSpec::parse_ratios(cfg.get("data.ratios", "6:2:2"),
                                       static_cast<std::uint64_t>(cfg.get_int("data.seed", 0)));
}

}  // namespace lsgc::config
