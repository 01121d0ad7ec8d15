#pragma once

// Synthetic modular-arithmetic tasks and preference-pair construction.
//
// Vocabulary layout for vocab size V and modulus m (m <= V - 4):
//   0 .. m-1   digits
//   V-4        operator
//   V-3        equals
//   V-2        filler (shared boilerplate)
//   V-1        end of sequence
//
// Prompt:          a OP b EQ
// Gold completion: FILL x k, (a + b) mod m, EOS
// where k is the shortest boilerplate with k / (k + 2) >= overlap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "preflab/random.hpp"
#include "preflab/tiny_lm.hpp"

namespace preflab {

inline constexpr std::size_t kReservedTokens = 4;
inline constexpr std::size_t kMaxBoilerplate = 16;

struct TaskFormat {
  std::size_t vocab = 16;
  std::size_t modulus = 7;
  double overlap = 0.5;

  std::size_t op_token() const { return vocab - 4; }
  std::size_t eq_token() const { return vocab - 3; }
  std::size_t fill_token() const { return vocab - 2; }
  std::size_t eos_token() const { return vocab - 1; }

  std::size_t boilerplate_length() const {
    std::size_t k = 0;
    while (static_cast<double>(k) / static_cast<double>(k + 2) < overlap) ++k;
    return k;
  }
  std::size_t prompt_length() const { return 4; }
  std::size_t completion_length() const { return boilerplate_length() + 2; }
};

inline void validate(const TaskFormat& f) {
  if (f.vocab < kReservedTokens + 2) throw std::invalid_argument("vocabulary too small for task tokens");
  if (f.modulus < 2) throw std::invalid_argument("modulus must be at least 2");
  if (f.modulus > f.vocab - kReservedTokens) {
    throw std::invalid_argument("vocabulary too small for modulus " + std::to_string(f.modulus) + ": need " +
                                std::to_string(f.modulus + kReservedTokens) + " tokens, have " +
                                std::to_string(f.vocab));
  }
  if (!(f.overlap >= 0.0 && f.overlap < 1.0)) throw std::invalid_argument("overlap must lie in [0, 1)");
  if (f.boilerplate_length() > kMaxBoilerplate) throw std::invalid_argument("overlap needs too long a boilerplate");
}

struct TaskInstance {
  std::size_t id = 0;
  std::size_t lhs = 0;
  std::size_t rhs = 0;
  Tokens prompt;
  std::size_t answer = 0;  // gold answer token
  Tokens gold;             // gold completion

  bool operator==(const TaskInstance&) const = default;
};

inline TaskInstance make_instance(const TaskFormat& f, std::size_t id, std::size_t lhs, std::size_t rhs) {
  TaskInstance inst;
  inst.id = id;
  inst.lhs = lhs;
  inst.rhs = rhs;
  inst.prompt = {lhs, f.op_token(), rhs, f.eq_token()};
  inst.answer = (lhs + rhs) % f.modulus;
  inst.gold.assign(f.boilerplate_length(), f.fill_token());
  inst.gold.push_back(inst.answer);
  inst.gold.push_back(f.eos_token());
  return inst;
}

/// Deterministic in (format, count, seed).
inline std::vector<TaskInstance> generate_instances(const TaskFormat& f, std::size_t count, std::uint64_t seed) {
  validate(f);
  if (count == 0) throw std::invalid_argument("instance count must be at least 1");
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, 0x1257, i));
    const std::size_t a = rng.below(f.modulus);
    const std::size_t b = rng.below(f.modulus);
    out.push_back(make_instance(f, i, a, b));
  }
  return out;
}

/// Answer token of a completion: the token just before the first EOS, or
/// the last token if no EOS was emitted.
inline std::optional<std::size_t> decode_answer(const TaskFormat& f, std::span<const std::size_t> completion) {
  const auto eos = std::find(completion.begin(), completion.end(), f.eos_token());
  if (eos == completion.begin()) return std::nullopt;
  const std::size_t tok = *(eos - 1);
  if (tok >= f.modulus) return std::nullopt;
  return tok;
}

inline bool is_correct(const TaskFormat& f, const TaskInstance& inst, std::span<const std::size_t> completion) {
  const auto ans = decode_answer(f, completion);
  return ans && *ans == inst.answer;
}

struct PreferencePair {
  Tokens prompt;
  Tokens chosen;
  Tokens rejected;
  std::optional<Tensor> ref_logits_chosen;
  std::optional<Tensor> ref_logits_rejected;

  bool has_cache() const { return ref_logits_chosen.has_value() && ref_logits_rejected.has_value(); }
};

inline bool operator==(const PreferencePair& a, const PreferencePair& b) {
  auto same = [](const std::optional<Tensor>& x, const std::optional<Tensor>& y) {
    if (x.has_value() != y.has_value()) return false;
    return !x || (x->shape == y->shape && x->data == y->data);
  };
  return a.prompt == b.prompt && a.chosen == b.chosen && a.rejected == b.rejected &&
         same(a.ref_logits_chosen, b.ref_logits_chosen) && same(a.ref_logits_rejected, b.ref_logits_rejected);
}

struct PairingOptions {
  std::size_t samples_per_instance = 8;
  double temperature = 0.7;
  /// Maximum pairs per instance; 0 keeps every correct x incorrect pair.
  std::size_t max_pairs_per_instance = 0;
  std::uint64_t seed = 42;
};

struct PairingStats {
  std::size_t instances = 0;
  std::size_t kept_instances = 0;
  std::size_t discarded_instances = 0;
  std::size_t pairs = 0;
};

/// Cross pairs of correct and incorrect samples of one instance, correct
/// index major. Empty when the samples are all correct or all incorrect.
inline std::vector<PreferencePair> pairs_from_samples(const TaskFormat& f, const TaskInstance& inst,
                                                      const std::vector<Tokens>& samples, std::size_t cap = 0) {
  std::vector<const Tokens*> good, bad;
  for (const auto& s : samples) (is_correct(f, inst, s) ? good : bad).push_back(&s);
  std::vector<PreferencePair> out;
  for (const Tokens* w : good)
    for (const Tokens* l : bad) {
      if (cap != 0 && out.size() == cap) return out;
      out.push_back(PreferencePair{inst.prompt, *w, *l, std::nullopt, std::nullopt});
    }
  return out;
}

/// Samples K completions per instance from the reference, labels them by
/// exact answer match and keeps instances with mixed outcomes.
inline std::vector<PreferencePair> build_preference_pairs(const FrozenReference& reference, const TaskFormat& f,
                                                          const std::vector<TaskInstance>& instances,
                                                          const PairingOptions& opts,
                                                          PairingStats* stats = nullptr) {
  if (opts.samples_per_instance < 2) throw std::invalid_argument("need at least 2 samples per instance");
  PairingStats st;
  std::vector<PreferencePair> out;
  SamplingOptions sampling;
  sampling.temperature = opts.temperature;
  sampling.max_len = f.completion_length() + 2;
  sampling.stop_token = f.eos_token();
  for (const auto& inst : instances) {
    std::vector<Tokens> samples;
    samples.reserve(opts.samples_per_instance);
    for (std::size_t k = 0; k < opts.samples_per_instance; ++k) {
      sampling.seed = derive_seed(opts.seed, 0x5a3b, inst.id * opts.samples_per_instance + k);
      samples.push_back(sample_completion(reference.model(), inst.prompt, sampling));
    }
    auto pairs = pairs_from_samples(f, inst, samples, opts.max_pairs_per_instance);
    ++st.instances;
    if (pairs.empty()) {
      ++st.discarded_instances;
      continue;
    }
    ++st.kept_instances;
    st.pairs += pairs.size();
    std::move(pairs.begin(), pairs.end(), std::back_inserter(out));
  }
  if (stats) *stats = st;
  return out;
}

struct DatasetSplit {
  std::vector<PreferencePair> train;
  std::vector<PreferencePair> validation;
};

/// Seeded uniform holdout of round(fraction * N) pairs (at least one, and
/// at least one left for training). Both parts keep input order.
inline DatasetSplit split_validation(const std::vector<PreferencePair>& pairs, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("validation fraction must lie in (0, 1)");
  if (pairs.size() < 2) throw std::invalid_argument("need at least 2 pairs to split");
  const std::size_t n = pairs.size();
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x7e1d));
  rng.shuffle(order.begin(), order.end());
  std::vector<bool> held(n, false);
  for (std::size_t i = 0; i < n_val; ++i) held[order[i]] = true;
  DatasetSplit split;
  for (std::size_t i = 0; i < n; ++i) (held[i] ? split.validation : split.train).push_back(pairs[i]);
  return split;
}

/// Longest-common-prefix length over the longer trajectory's length.
inline double token_overlap(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("token_overlap: empty trajectory");
  std::size_t lcp = 0;
  while (lcp < a.size() && lcp < b.size() && a[lcp] == b[lcp]) ++lcp;
  return static_cast<double>(lcp) / static_cast<double>(std::max(a.size(), b.size()));
}

inline double mean_overlap(const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : pairs) s += token_overlap(p.chosen, p.rejected);
  return s / static_cast<double>(pairs.size());
}

/// Reference logit rows [|y| x V] that predict each token of `completion`.
inline Tensor reference_logits(const FrozenReference& reference, std::span<const std::size_t> prompt,
                               std::span<const std::size_t> completion) {
  ad::Graph g;
  return score_trajectory(reference.bind(g), prompt, completion).logits.data();
}

inline void cache_reference_logits(const FrozenReference& reference, std::vector<PreferencePair>& pairs) {
  for (auto& p : pairs) {
    p.ref_logits_chosen = reference_logits(reference, p.prompt, p.chosen);
    p.ref_logits_rejected = reference_logits(reference, p.prompt, p.rejected);
  }
}

// JSONL persistence. One object per line with keys prompt, chosen, rejected
// and, when cached, ref_logits_chosen / ref_logits_rejected.

namespace detail {

inline nlohmann::json rows_to_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = t.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

inline Tensor rows_from_json(const nlohmann::json& j, std::size_t expected_rows, const char* key) {
  if (!j.is_array() || j.size() != expected_rows) {
    throw std::runtime_error(std::string(key) + ": expected " + std::to_string(expected_rows) + " rows");
  }
  const std::size_t cols = j.empty() ? 0 : j[0].size();
  std::vector<double> data;
  data.reserve(expected_rows * cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols) throw std::runtime_error(std::string(key) + ": ragged rows");
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Tensor({expected_rows, cols}, std::move(data));
}

inline Tokens tokens_from_json(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw std::runtime_error(std::string("missing token array ") + key);
  Tokens out;
  for (const auto& v : j[key]) {
    if (!v.is_number_unsigned()) throw std::runtime_error(std::string(key) + ": tokens must be nonnegative integers");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace detail

inline nlohmann::json to_json(const PreferencePair& p) {
  nlohmann::json j;
  j["prompt"] = p.prompt;
  j["chosen"] = p.chosen;
  j["rejected"] = p.rejected;
  if (p.ref_logits_chosen) j["ref_logits_chosen"] = detail::rows_to_json(*p.ref_logits_chosen);
  if (p.ref_logits_rejected) j["ref_logits_rejected"] = detail::rows_to_json(*p.ref_logits_rejected);
  return j;
}

inline PreferencePair pair_from_json(const nlohmann::json& j) {
  PreferencePair p;
  p.prompt = detail::tokens_from_json(j, "prompt");
  p.chosen = detail::tokens_from_json(j, "chosen");
  p.rejected = detail::tokens_from_json(j, "rejected");
  if (p.prompt.empty() || p.chosen.empty() || p.rejected.empty()) throw std::runtime_error("empty token array in pair");
  if (j.contains("ref_logits_chosen"))
    p.ref_logits_chosen = detail::rows_from_json(j["ref_logits_chosen"], p.chosen.size(), "ref_logits_chosen");
  if (j.contains("ref_logits_rejected"))
    p.ref_logits_rejected = detail::rows_from_json(j["ref_logits_rejected"], p.rejected.size(), "ref_logits_rejected");
  return p;
}

inline void write_pairs(std::ostream& os, const std::vector<PreferencePair>& pairs) {
  for (const auto& p : pairs) os << to_json(p).dump() << '\n';
}

inline std::vector<PreferencePair> read_pairs(std::istream& is) {
  std::vector<PreferencePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(pair_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline nlohmann::json to_json(const TaskInstance& inst) {
  return {{"id", inst.id}, {"lhs", inst.lhs}, {"rhs", inst.rhs}, {"prompt", inst.prompt}, {"answer", inst.answer}};
}

inline void write_instances(std::ostream& os, const std::vector<TaskInstance>& instances) {
  for (const auto& inst : instances) os << to_json(inst).dump() << '\n';
}

inline std::vector<TaskInstance> read_instances(std::istream& is, const TaskFormat& f) {
  std::vector<TaskInstance> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    auto inst = make_instance(f, j.at("id").get<std::size_t>(), j.at("lhs").get<std::size_t>(),
                              j.at("rhs").get<std::size_t>());
    if (inst.prompt != detail::tokens_from_json(j, "prompt") || inst.answer != j.at("answer").get<std::size_t>()) {
      throw std::runtime_error("instance " + std::to_string(inst.id) + " does not match the task format");
    }
    out.push_back(std::move(inst));
  }
  return out;
}

/// Held-out questions recovered from validation pairs: one per distinct
/// prompt, gold answer decoded from the chosen completion.
inline std::vector<TaskInstance> instances_from_pairs(const TaskFormat& f, const std::vector<PreferencePair>& pairs) {
  std::vector<TaskInstance> out;
  for (const auto& p : pairs) {
    if (p.prompt.size() != 4) throw std::runtime_error("pair prompt does not match the task format");
    const bool seen = std::any_of(out.begin(), out.end(), [&](const TaskInstance& t) { return t.prompt == p.prompt; });
    if (seen) continue;
    auto inst = make_instance(f, out.size(), p.prompt[0], p.prompt[2]);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace preflab
