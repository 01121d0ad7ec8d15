#pragma once

// Pass@1 with standard error, and question-level gain / loss decomposition.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "preflab/pref_data.hpp"
#include "preflab/tiny_lm.hpp"

namespace preflab {

enum class StdConvention { Population, Sample };

struct EvalOptions {
  std::size_t samples = 8;  // n attempts per question
  double temperature = 0.7;
  std::uint64_t seed = 42;
  StdConvention std_convention = StdConvention::Population;
};

struct EvalResult {
  std::vector<std::size_t> correct;  // c_i
  std::size_t samples = 0;           // n
  double pass_at_1 = 0.0;
  double standard_error = 0.0;
  double temperature = 0.0;

  std::vector<double> accuracies() const {
    std::vector<double> out;
    out.reserve(correct.size());
    for (auto c : correct) out.push_back(static_cast<double>(c) / static_cast<double>(samples));
    return out;
  }
};

/// Mean of per-question accuracies and std / sqrt(N).
inline EvalResult summarize(std::vector<std::size_t> correct, std::size_t n,
                            StdConvention conv = StdConvention::Population) {
  if (n == 0) throw std::invalid_argument("need at least one sample per question");
  if (correct.empty()) throw std::invalid_argument("no questions to summarize");
  EvalResult r;
  r.samples = n;
  r.correct = std::move(correct);
  for (auto c : r.correct)
    if (c > n) throw std::invalid_argument("correct count exceeds samples");
  const auto acc = r.accuracies();
  const double N = static_cast<double>(acc.size());
  double sum = 0.0;
  for (double a : acc) sum += a;
  r.pass_at_1 = sum / N;
  double ss = 0.0;
  for (double a : acc) ss += (a - r.pass_at_1) * (a - r.pass_at_1);
  double var = 0.0;
  if (conv == StdConvention::Population) {
    var = ss / N;
  } else if (acc.size() > 1) {
    var = ss / (N - 1.0);
  }
  r.standard_error = std::sqrt(var) / std::sqrt(N);
  return r;
}

/// Samples n completions per question and grades them by exact answer
/// match. Question i, attempt k uses a seed derived from (seed, i, k), so
/// results do not depend on evaluation order.
inline EvalResult evaluate(const TinyLM& model, const TaskFormat& format, const std::vector<TaskInstance>& questions,
                           const EvalOptions& opts) {
  if (opts.samples == 0) throw std::invalid_argument("need at least one sample per question");
  SamplingOptions sampling;
  sampling.temperature = opts.temperature;
  sampling.max_len = format.completion_length() + 2;
  sampling.stop_token = format.eos_token();
  std::vector<std::size_t> correct;
  correct.reserve(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i) {
    std::size_t c = 0;
    for (std::size_t k = 0; k < opts.samples; ++k) {
      sampling.seed = derive_seed(opts.seed, 0xe7a1, i * opts.samples + k);
      if (is_correct(format, questions[i], sample_completion(model, questions[i].prompt, sampling))) ++c;
    }
    correct.push_back(c);
  }
  auto r = summarize(std::move(correct), opts.samples, opts.std_convention);
  r.temperature = opts.temperature;
  return r;
}

struct GainLossReport {
  double gain = 0.0;
  double loss = 0.0;
  double net = 0.0;
};

/// Gains and losses are each averaged over all N questions, so
/// net = gain - loss = mean(after - before).
inline GainLossReport gain_loss(std::span<const double> before, std::span<const double> after) {
  if (before.size() != after.size()) throw std::invalid_argument("gain_loss: question sets are not aligned");
  if (before.empty()) throw std::invalid_argument("gain_loss: no questions");
  GainLossReport r;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double d = after[i] - before[i];
    if (d > 0.0) r.gain += d;
    if (d < 0.0) r.loss -= d;
  }
  const double n = static_cast<double>(before.size());
  r.gain /= n;
  r.loss /= n;
  r.net = r.gain - r.loss;
  return r;
}

/// One JSON object per question: {"question": id, "correct": c_i, "n": n}.
inline void write_question_records(std::ostream& os, const std::vector<TaskInstance>& questions, const EvalResult& r) {
  for (std::size_t i = 0; i < questions.size(); ++i) {
    nlohmann::json j{{"question", questions[i].id}, {"correct", r.correct[i]}, {"n", r.samples}};
    os << j.dump() << '\n';
  }
}

}  // namespace preflab
