#pragma once

// Tiny causal token model used both as the trainable policy and, frozen, as
// the reference policy.
//
// Architecture (per position t, width d):
//   e_t      = tok_emb[x_t] + pos_emb[t]
//   u_t      = tanh(e_t W_mix)
//   c_t      = mean_{s <= t} u_s                  (causal prefix mean)
//   z_t      = e_t + c_t
//   h_t      = tanh(z_t W_hidden) * sigmoid(z_t W_gate)
//   logits_t = h_t W_out
//
// All parameters live in one flat vector in the order listed in
// ParameterLayout, which is also the checkpoint order.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "preflab/grad.hpp"
#include "preflab/random.hpp"

namespace preflab {

using Tokens = std::vector<std::size_t>;

struct ModelShape {
  std::size_t vocab = 16;
  std::size_t context = 32;
  std::size_t width = 32;

  bool operator==(const ModelShape&) const = default;
};

struct ParameterBlock {
  const char* name;
  std::size_t offset;
  Shape shape;
};

/// Offsets of each named tensor inside the flat parameter vector.
struct ParameterLayout {
  ParameterBlock tok_emb, pos_emb, w_mix, w_hidden, w_gate, w_out;
  std::size_t total = 0;

  explicit ParameterLayout(const ModelShape& s) {
    std::size_t at = 0;
    auto next = [&at](const char* name, Shape shape) {
      ParameterBlock b{name, at, shape};
      at += element_count(shape);
      return b;
    };
    tok_emb = next("tok_emb", {s.vocab, s.width});
    pos_emb = next("pos_emb", {s.context, s.width});
    w_mix = next("w_mix", {s.width, s.width});
    w_hidden = next("w_hidden", {s.width, s.width});
    w_gate = next("w_gate", {s.width, s.width});
    w_out = next("w_out", {s.width, s.vocab});
    total = at;
  }

  std::array<const ParameterBlock*, 6> blocks() const {
    return {&tok_emb, &pos_emb, &w_mix, &w_hidden, &w_gate, &w_out};
  }
};

inline void validate(const ModelShape& s) {
  if (s.vocab == 0 || s.vocab > 64) throw std::invalid_argument("vocab size must be in [1, 64]");
  if (s.context == 0 || s.context > 64) throw std::invalid_argument("context length must be in [1, 64]");
  if (s.width == 0) throw std::invalid_argument("width must be positive");
}

/// Lower-triangular averaging matrix: row t holds 1/(t+1) in columns 0..t.
inline Tensor causal_mean_matrix(std::size_t n) {
  Tensor m = Tensor::zeros({n, n});
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t s = 0; s <= t; ++s) m(t, s) = 1.0 / static_cast<double>(t + 1);
  return m;
}

/// A TinyLM's parameters bound into a graph, either as a trainable leaf or
/// as constants.
class BoundModel {
 public:
  BoundModel(ad::Graph& graph, ad::Value flat, const ModelShape& shape)
      : graph_(&graph), shape_(shape), flat_(flat) {
    if (flat.size() != ParameterLayout(shape).total) throw ShapeError("flat parameter size mismatch");
    const ParameterLayout layout(shape);
    tok_emb_ = ad::slice(flat, layout.tok_emb.offset, layout.tok_emb.shape);
    w_mix_ = ad::slice(flat, layout.w_mix.offset, layout.w_mix.shape);
    w_hidden_ = ad::slice(flat, layout.w_hidden.offset, layout.w_hidden.shape);
    w_gate_ = ad::slice(flat, layout.w_gate.offset, layout.w_gate.shape);
    w_out_ = ad::slice(flat, layout.w_out.offset, layout.w_out.shape);
    pos_offset_ = layout.pos_emb.offset;
  }

  const ModelShape& shape() const { return shape_; }
  ad::Graph& graph() const { return *graph_; }
  /// Flat parameter leaf; its grad holds the parameter gradient after backward.
  ad::Value parameters() const { return flat_; }

  /// Next-token logits [T x V]; row t is conditioned on tokens[0..t].
  ad::Value logits(std::span<const std::size_t> tokens) const {
    const std::size_t n = tokens.size();
    if (n == 0) throw std::invalid_argument("forward_logits: empty token sequence");
    if (n > shape_.context) {
      throw std::invalid_argument("forward_logits: sequence length " + std::to_string(n) +
                                  " exceeds context " + std::to_string(shape_.context));
    }
    for (auto tok : tokens) {
      if (tok >= shape_.vocab) {
        throw std::invalid_argument("forward_logits: token " + std::to_string(tok) +
                                    " outside vocabulary of size " + std::to_string(shape_.vocab));
      }
    }
    using namespace ad;
    Value emb = gather_rows(tok_emb_, Tokens(tokens.begin(), tokens.end())) +
                slice(flat_, pos_offset_, {n, shape_.width});
    Value mixed = tanh(matmul(emb, w_mix_));
    Value context = matmul(graph_->constant(causal_mean_matrix(n)), mixed);
    Value z = emb + context;
    Value hidden = tanh(matmul(z, w_hidden_)) * sigmoid(matmul(z, w_gate_));
    return matmul(hidden, w_out_);
  }

 private:
  ad::Graph* graph_;
  ModelShape shape_;
  ad::Value flat_;
  ad::Value tok_emb_, w_mix_, w_hidden_, w_gate_, w_out_;
  std::size_t pos_offset_ = 0;
};

/// Log-probabilities of one completion under a bound model.
struct TrajectoryScore {
  ad::Value logprob;         // scalar: log pi(y | x)
  ad::Value logits;          // [|y| x V]: rows that predict each completion token
  std::size_t length = 0;
};

/// Input tokens for scoring: prompt followed by all but the last completion token.
inline Tokens scoring_input(std::span<const std::size_t> prompt, std::span<const std::size_t> completion) {
  Tokens input(prompt.begin(), prompt.end());
  input.insert(input.end(), completion.begin(), completion.end() - 1);
  return input;
}

inline TrajectoryScore score_trajectory(const BoundModel& model, std::span<const std::size_t> prompt,
                                        std::span<const std::size_t> completion) {
  if (completion.empty()) throw std::invalid_argument("sequence_logprob: empty completion");
  if (prompt.empty()) throw std::invalid_argument("sequence_logprob: empty prompt");
  if (prompt.size() + completion.size() > model.shape().context) {
    throw std::invalid_argument("sequence_logprob: prompt + completion exceeds context");
  }
  const Tokens input = scoring_input(prompt, completion);
  ad::Value all = model.logits(input);
  const std::size_t vocab = model.shape().vocab;
  const std::size_t first = prompt.size() - 1;
  ad::Value rows = ad::slice(all, first * vocab, {completion.size(), vocab});
  ad::Value logp = ad::log_softmax(rows);
  std::vector<std::size_t> picks(completion.size());
  for (std::size_t j = 0; j < completion.size(); ++j) picks[j] = j * vocab + completion[j];
  return {ad::sum(ad::gather(logp, std::move(picks))), rows, completion.size()};
}

class TinyLM {
 public:
  TinyLM() : TinyLM(ModelShape{}) {}
  explicit TinyLM(ModelShape shape) : shape_(shape) {
    validate(shape_);
    params_.assign(ParameterLayout(shape_).total, 0.0);
  }
  TinyLM(ModelShape shape, std::vector<double> params) : shape_(shape), params_(std::move(params)) {
    validate(shape_);
    if (params_.size() != ParameterLayout(shape_).total) throw ShapeError("parameter count mismatch");
  }

  /// Gaussian(0, stddev) initialization from a fixed seed.
  static TinyLM random(ModelShape shape, std::uint64_t seed, double stddev = 0.02) {
    TinyLM m(shape);
    Rng rng(seed);
    for (auto& p : m.params_) p = rng.normal(0.0, stddev);
    return m;
  }

  const ModelShape& shape() const { return shape_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }

  BoundModel bind(ad::Graph& g) const {
    return BoundModel(g, g.variable(Tensor::vector(params_)), shape_);
  }
  BoundModel bind_constant(ad::Graph& g) const {
    return BoundModel(g, g.constant(Tensor::vector(params_)), shape_);
  }

  /// Gradient-free logits, e.g. for sampling.
  Tensor logits(std::span<const std::size_t> tokens) const {
    ad::Graph g;
    return bind_constant(g).logits(tokens).data();
  }

  double sequence_logprob(std::span<const std::size_t> prompt, std::span<const std::size_t> completion) const {
    ad::Graph g;
    return score_trajectory(bind_constant(g), prompt, completion).logprob.item();
  }

  bool operator==(const TinyLM&) const = default;

 private:
  ModelShape shape_;
  std::vector<double> params_;
};

/// Frozen copy of a TinyLM; exposes only read-only scoring.
class FrozenReference {
 public:
  explicit FrozenReference(const TinyLM& model) : model_(model) {}

  const TinyLM& model() const { return model_; }
  const ModelShape& shape() const { return model_.shape(); }
  BoundModel bind(ad::Graph& g) const { return model_.bind_constant(g); }
  Tensor logits(std::span<const std::size_t> tokens) const { return model_.logits(tokens); }
  double sequence_logprob(std::span<const std::size_t> prompt, std::span<const std::size_t> completion) const {
    return model_.sequence_logprob(prompt, completion);
  }

 private:
  TinyLM model_;
};

inline FrozenReference freeze(const TinyLM& model) { return FrozenReference(model); }

struct SamplingOptions {
  double temperature = 0.7;
  std::size_t max_len = 8;
  std::optional<std::size_t> stop_token;
  std::uint64_t seed = 42;
};

/// Temperature below which sampling falls back to argmax.
inline constexpr double kGreedyTemperature = 1e-6;

/// Autoregressive sample from softmax(logits / temperature). The stop
/// token, when emitted, is included in the result.
inline Tokens sample_completion(const TinyLM& model, std::span<const std::size_t> prompt,
                                const SamplingOptions& opts) {
  if (!(opts.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  Rng rng(opts.seed);
  Tokens seq(prompt.begin(), prompt.end());
  Tokens out;
  const std::size_t vocab = model.shape().vocab;
  std::vector<double> weights(vocab);
  if (prompt.empty() || prompt.size() >= model.shape().context) {
    throw std::invalid_argument("sample_completion: prompt must be nonempty and shorter than the context");
  }
  const std::size_t budget = std::min(opts.max_len, model.shape().context - prompt.size());
  while (out.size() < budget) {
    const Tensor logits = model.logits(seq);
    const auto last = logits.row(logits.rows() - 1);
    std::size_t next = 0;
    if (opts.temperature < kGreedyTemperature) {
      next = static_cast<std::size_t>(std::max_element(last.begin(), last.end()) - last.begin());
    } else {
      const double mx = *std::max_element(last.begin(), last.end());
      for (std::size_t v = 0; v < vocab; ++v) weights[v] = std::exp((last[v] - mx) / opts.temperature);
      next = rng.categorical(weights);
    }
    out.push_back(next);
    if (opts.stop_token && next == *opts.stop_token) break;
    seq.push_back(next);
  }
  return out;
}

// Checkpoint format, little-endian throughout:
//   "TLM1" | u32 vocab | u32 context | u32 width | f64 x parameter_count
namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_f64(std::ostream& os, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xffu));
}
inline std::uint64_t get_bytes(std::istream& is, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw std::runtime_error("checkpoint truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline constexpr std::array<char, 4> kCheckpointMagic{'T', 'L', 'M', '1'};

inline void write_checkpoint(std::ostream& os, const TinyLM& model) {
  os.write(kCheckpointMagic.data(), 4);
  detail::put_u32(os, static_cast<std::uint32_t>(model.shape().vocab));
  detail::put_u32(os, static_cast<std::uint32_t>(model.shape().context));
  detail::put_u32(os, static_cast<std::uint32_t>(model.shape().width));
  for (double p : model.parameters()) detail::put_f64(os, p);
}

inline TinyLM read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || magic != kCheckpointMagic) throw std::runtime_error("not a TLM1 checkpoint");
  ModelShape shape;
  shape.vocab = detail::get_bytes(is, 4);
  shape.context = detail::get_bytes(is, 4);
  shape.width = detail::get_bytes(is, 4);
  validate(shape);
  std::vector<double> params(ParameterLayout(shape).total);
  for (auto& p : params) p = std::bit_cast<double>(detail::get_bytes(is, 8));
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes in checkpoint");
  return TinyLM(shape, std::move(params));
}

inline void save_checkpoint(const std::filesystem::path& path, const TinyLM& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, model);
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

inline TinyLM load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace preflab
