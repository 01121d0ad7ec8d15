#pragma once

// Flat key=value run configuration. Every key has a typed field, unknown
// keys are rejected, and serialization round-trips exactly (doubles are
// written with 17 significant digits).

#include <charconv>
#include <filesystem>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "preflab/evaluation.hpp"
#include "preflab/fpa.hpp"
#include "preflab/pref_data.hpp"
#include "preflab/train.hpp"

namespace preflab {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 42;

  // Model.
  ModelShape model{16, 32, 32};
  double init_std = 0.02;

  // Data.
  std::size_t modulus = 7;
  double overlap = 0.75;
  std::size_t k_samples = 8;
  double temperature = 0.7;
  std::size_t train_instances = 200;
  std::size_t eval_instances = 49;
  std::size_t max_pairs_per_instance = 4;
  double validation_fraction = 0.05;

  // Reference pretraining (supervised on gold completions).
  std::size_t pretrain_steps = 3000;
  double pretrain_lr = 1e-2;
  double pretrain_target = 0.5;
  std::size_t pretrain_eval_every = 50;

  // Objective.
  Objective objective = Objective::Simper;
  HyperParams hyper;
  FpaConfig fpa;

  // Optimization.
  TrainConfig train;

  // Evaluation.
  std::size_t eval_n = 8;
  double eval_temperature = 0.7;
  StdConvention std_convention = StdConvention::Population;

  TaskFormat format() const { return TaskFormat{model.vocab, modulus, overlap}; }
};

namespace detail {

struct ConfigField {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigError("key '" + key + "': '" + s + "' is not a number");
  return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) {
    throw ConfigError("key '" + key + "': '" + s + "' is not a nonnegative integer");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("key '" + key + "': '" + s + "' is not a boolean");
}

#define PREFLAB_REAL(expr)                                                               \
  ConfigField {                                                                          \
    [](const RunConfig& c) { return format_double(c.expr); },                            \
        [](RunConfig& c, const std::string& s) { c.expr = parse_double(#expr, s); }      \
  }
#define PREFLAB_UINT(expr, type)                                                         \
  ConfigField {                                                                          \
    [](const RunConfig& c) { return std::to_string(c.expr); },                           \
        [](RunConfig& c, const std::string& s) { c.expr = static_cast<type>(parse_uint(#expr, s)); } \
  }

inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
  static const std::vector<std::pair<std::string, ConfigField>> fields = {
      {"seed", PREFLAB_UINT(seed, std::uint64_t)},
      {"vocab", PREFLAB_UINT(model.vocab, std::size_t)},
      {"context", PREFLAB_UINT(model.context, std::size_t)},
      {"width", PREFLAB_UINT(model.width, std::size_t)},
      {"init_std", PREFLAB_REAL(init_std)},
      {"modulus", PREFLAB_UINT(modulus, std::size_t)},
      {"overlap", PREFLAB_REAL(overlap)},
      {"k_samples", PREFLAB_UINT(k_samples, std::size_t)},
      {"temperature", PREFLAB_REAL(temperature)},
      {"train_instances", PREFLAB_UINT(train_instances, std::size_t)},
      {"eval_instances", PREFLAB_UINT(eval_instances, std::size_t)},
      {"max_pairs_per_instance", PREFLAB_UINT(max_pairs_per_instance, std::size_t)},
      {"validation_fraction", PREFLAB_REAL(validation_fraction)},
      {"pretrain_steps", PREFLAB_UINT(pretrain_steps, std::size_t)},
      {"pretrain_lr", PREFLAB_REAL(pretrain_lr)},
      {"pretrain_target", PREFLAB_REAL(pretrain_target)},
      {"pretrain_eval_every", PREFLAB_UINT(pretrain_eval_every, std::size_t)},
      {"objective",
       {[](const RunConfig& c) { return std::string(to_string(c.objective)); },
        [](RunConfig& c, const std::string& s) {
          try {
            c.objective = parse_objective(s);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
          }
        }}},
      {"beta", PREFLAB_REAL(hyper.beta)},
      {"alpha", PREFLAB_REAL(hyper.alpha)},
      {"lambda_dpop", PREFLAB_REAL(hyper.lambda_dpop)},
      {"kto_beta", PREFLAB_REAL(hyper.kto_beta)},
      {"kto_lambda_w", PREFLAB_REAL(hyper.kto_lambda_w)},
      {"kto_lambda_l", PREFLAB_REAL(hyper.kto_lambda_l)},
      {"kto_baseline",
       {[](const RunConfig& c) {
          return std::string(c.hyper.kto_baseline == KtoBaseline::Batch ? "batch" : "running-mean");
        },
        [](RunConfig& c, const std::string& s) {
          if (s == "batch") c.hyper.kto_baseline = KtoBaseline::Batch;
          else if (s == "running-mean") c.hyper.kto_baseline = KtoBaseline::RunningMean;
          else throw ConfigError("kto_baseline must be batch or running-mean");
        }}},
      {"lambda", PREFLAB_REAL(fpa.lambda)},
      {"fpa_target",
       {[](const RunConfig& c) { return std::string(to_string(c.fpa.target)); },
        [](RunConfig& c, const std::string& s) {
          if (s == "both") c.fpa.target = FpaTarget::Both;
          else if (s == "preferred-only") c.fpa.target = FpaTarget::PreferredOnly;
          else if (s == "dispreferred-only") c.fpa.target = FpaTarget::DispreferredOnly;
          else throw ConfigError("fpa_target must be both, preferred-only or dispreferred-only");
        }}},
      {"lr", PREFLAB_REAL(train.learning_rate)},
      {"warmup_steps", PREFLAB_UINT(train.warmup_steps, std::size_t)},
      {"weight_decay", PREFLAB_REAL(train.weight_decay)},
      {"adam_beta1", PREFLAB_REAL(train.adam_beta1)},
      {"adam_beta2", PREFLAB_REAL(train.adam_beta2)},
      {"adam_eps", PREFLAB_REAL(train.adam_eps)},
      {"max_grad_norm", PREFLAB_REAL(train.max_grad_norm)},
      {"max_steps", PREFLAB_UINT(train.max_steps, std::size_t)},
      {"batch_size", PREFLAB_UINT(train.batch_size, std::size_t)},
      {"scheduler",
       {[](const RunConfig& c) { return std::string(to_string(c.train.scheduler)); },
        [](RunConfig& c, const std::string& s) {
          try {
            c.train.scheduler = parse_scheduler(s);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
          }
        }}},
      {"final_lr_fraction", PREFLAB_REAL(train.final_lr_fraction)},
      {"eval_every", PREFLAB_UINT(train.eval_every, std::size_t)},
      {"patience", PREFLAB_UINT(train.patience, std::size_t)},
      {"val_samples", PREFLAB_UINT(train.eval_samples, std::size_t)},
      {"val_temperature", PREFLAB_REAL(train.eval_temperature)},
      {"angle_every", PREFLAB_UINT(train.angle_every, std::size_t)},
      {"near_zero_threshold", PREFLAB_REAL(train.near_zero_threshold)},
      {"diagnostics",
       {[](const RunConfig& c) { return std::string(c.train.diagnostics ? "true" : "false"); },
        [](RunConfig& c, const std::string& s) { c.train.diagnostics = parse_bool("diagnostics", s); }}},
      {"eval_n", PREFLAB_UINT(eval_n, std::size_t)},
      {"eval_temperature", PREFLAB_REAL(eval_temperature)},
      {"std_convention",
       {[](const RunConfig& c) {
          return std::string(c.std_convention == StdConvention::Population ? "population" : "sample");
        },
        [](RunConfig& c, const std::string& s) {
          if (s == "population") c.std_convention = StdConvention::Population;
          else if (s == "sample") c.std_convention = StdConvention::Sample;
          else throw ConfigError("std_convention must be population or sample");
        }}},
  };
  return fields;
}

#undef PREFLAB_REAL
#undef PREFLAB_UINT

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : detail::config_fields()) out.push_back(k);
  return out;
}

inline std::string get_config_value(const RunConfig& c, const std::string& key) {
  for (const auto& [k, f] : detail::config_fields())
    if (k == key) return f.get(c);
  throw ConfigError("unknown config key '" + key + "'");
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& [k, f] : detail::config_fields()) {
    if (k == key) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline void validate(const RunConfig& c) {
  validate(c.model);
  validate(c.format());
  validate(c.hyper);
  validate(c.fpa);
  validate(c.train);
  if (c.k_samples < 2) throw ConfigError("k_samples must be at least 2");
  if (!(c.temperature > 0.0) || !(c.eval_temperature > 0.0)) throw ConfigError("temperatures must be positive");
  if (c.eval_n == 0) throw ConfigError("eval_n must be positive");
  if (c.train_instances == 0 || c.eval_instances == 0) throw ConfigError("instance counts must be positive");
  const auto f = c.format();
  if (f.prompt_length() + f.completion_length() + 2 > c.model.context) {
    throw ConfigError("context too short for prompt and completion");
  }
}

/// Serializes every key, one `key=value` line each, in a fixed order.
inline std::string to_config_text(const RunConfig& c) {
  std::string out;
  for (const auto& [k, f] : detail::config_fields()) out += k + "=" + f.get(c) + "\n";
  return out;
}

/// Applies `key=value` lines on top of `base`. Blank lines and lines
/// starting with '#' are ignored.
inline RunConfig parse_config(std::istream& is, RunConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    set_config_value(base, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  return base;
}

inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
  std::istringstream is(text);
  return parse_config(is, std::move(base));
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  return parse_config(is, std::move(base));
}

/// FNV-1a 64-bit hash, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace preflab
