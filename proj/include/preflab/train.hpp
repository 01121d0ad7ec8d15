#pragma once

// AdamW training harness with linear warmup, gradient clipping, periodic
// validation and early stopping.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "preflab/diagnostics.hpp"
#include "preflab/evaluation.hpp"
#include "preflab/fpa.hpp"
#include "preflab/objectives.hpp"
#include "preflab/scoring.hpp"

namespace preflab {

enum class Objective { Sft, Dpo, Dpop, Kto, Rpo, Simper, FpaDpo, FpaRpo, FpaSimper };

inline constexpr std::array<std::pair<Objective, std::string_view>, 9> kObjectiveNames{{
    {Objective::Sft, "sft"},
    {Objective::Dpo, "dpo"},
    {Objective::Dpop, "dpop"},
    {Objective::Kto, "kto"},
    {Objective::Rpo, "rpo"},
    {Objective::Simper, "simper"},
    {Objective::FpaDpo, "fpa-dpo"},
    {Objective::FpaRpo, "fpa-rpo"},
    {Objective::FpaSimper, "fpa-simper"},
}};

inline std::string_view to_string(Objective o) {
  for (const auto& [k, name] : kObjectiveNames)
    if (k == o) return name;
  return "?";
}

inline Objective parse_objective(std::string_view s) {
  for (const auto& [k, name] : kObjectiveNames)
    if (name == s) return k;
  throw std::invalid_argument("unknown objective '" + std::string(s) + "'");
}

inline bool is_fpa(Objective o) {
  return o == Objective::FpaDpo || o == Objective::FpaRpo || o == Objective::FpaSimper;
}

/// Base algorithm whose coefficients describe the objective, if any.
inline std::optional<BaseAlgorithm> coefficient_family(Objective o) {
  switch (o) {
    case Objective::Dpo:
    case Objective::FpaDpo: return BaseAlgorithm::Dpo;
    case Objective::Rpo:
    case Objective::FpaRpo: return BaseAlgorithm::Rpo;
    case Objective::Simper:
    case Objective::FpaSimper: return BaseAlgorithm::Simper;
    default: return std::nullopt;
  }
}

enum class Scheduler { Constant, Cosine, MimicDecay };

inline std::string_view to_string(Scheduler s) {
  switch (s) {
    case Scheduler::Constant: return "constant";
    case Scheduler::Cosine: return "cosine";
    case Scheduler::MimicDecay: return "mimic-decay";
  }
  return "?";
}

inline Scheduler parse_scheduler(std::string_view s) {
  if (s == "constant") return Scheduler::Constant;
  if (s == "cosine") return Scheduler::Cosine;
  if (s == "mimic-decay") return Scheduler::MimicDecay;
  throw std::invalid_argument("unknown scheduler '" + std::string(s) + "'");
}

struct TrainConfig {
  std::uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 15;
  double learning_rate = 5e-5;
  double max_grad_norm = 10.0;
  std::size_t max_steps = 2000;
  std::size_t batch_size = 16;
  Scheduler scheduler = Scheduler::Constant;
  /// Final learning-rate fraction reached at max_steps under mimic-decay.
  double final_lr_fraction = 0.8;
  /// Validation cadence in steps; 0 disables validation.
  std::size_t eval_every = 100;
  /// Evaluations without improvement before stopping; 0 disables.
  std::size_t patience = 0;
  /// Stop once validation pass@1 reaches this value; unset disables.
  std::optional<double> target_pass1;
  std::size_t eval_samples = 8;
  double eval_temperature = 0.7;
  /// Angle/norm probe cadence in steps; 0 disables.
  std::size_t angle_every = 0;
  double near_zero_threshold = 1e-8;
  bool diagnostics = true;
};

inline void validate(const TrainConfig& c) {
  for (double v : {c.learning_rate, c.max_grad_norm, c.adam_eps}) {
    if (!(v > 0.0)) throw std::invalid_argument("rates and norms must be positive");
  }
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0 && c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (c.weight_decay < 0.0) throw std::invalid_argument("weight decay must be >= 0");
  if (c.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(c.final_lr_fraction > 0.0)) throw std::invalid_argument("final lr fraction must be positive");
}

/// Learning rate for the update performed at `step` (0-based).
inline double lr_at_step(const TrainConfig& c, std::size_t step) {
  if (step < c.warmup_steps) {
    return c.learning_rate * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  }
  if (c.scheduler == Scheduler::Constant || c.max_steps <= c.warmup_steps) return c.learning_rate;
  const double span = static_cast<double>(c.max_steps - c.warmup_steps);
  const double progress = std::min(1.0, static_cast<double>(step - c.warmup_steps) / span);
  if (c.scheduler == Scheduler::Cosine) {
    return c.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
  return c.learning_rate * (1.0 + (c.final_lr_fraction - 1.0) * progress);
}

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scales `grads` in place so their global L2 norm is at most `max_norm`;
/// returns the norm before scaling.
inline double clip_gradients(std::span<double> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("max_norm must be positive");
  double ss = 0.0;
  for (double g : grads) {
    if (!std::isfinite(g)) throw TrainingError("non-finite gradient encountered");
    ss += g * g;
  }
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (double& g : grads) g *= k;
  }
  return norm;
}

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t step = 0;
};

/// One AdamW update with bias correction and decoupled weight decay.
inline void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr,
                       const TrainConfig& c) {
  if (params.size() != grads.size()) throw ShapeError("adamw_step: parameter/gradient size mismatch");
  if (state.first_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adamw_step: optimizer state size mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(c.adam_beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = c.adam_beta1 * m + (1.0 - c.adam_beta1) * grads[i];
    v = c.adam_beta2 * v + (1.0 - c.adam_beta2) * grads[i] * grads[i];
    params[i] -= lr * c.weight_decay * params[i];
    params[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + c.adam_eps);
  }
}

/// What to optimize: the objective plus the knobs it reads.
struct ObjectiveSpec {
  Objective objective = Objective::Simper;
  HyperParams hyper;
  FpaConfig fpa;
};

/// One row per optimizer step. Optional fields are empty when the quantity
/// is undefined for the objective or was not measured at that step.
struct RunMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  std::optional<double> drift_chosen;
  std::optional<double> drift_rejected;
  std::optional<double> c_w;
  std::optional<double> c_l;
  std::optional<double> fpa_c_w;
  std::optional<double> fpa_c_l;
  std::optional<double> r_w;
  std::optional<double> r_l;
  std::optional<double> r_w_of_means;
  std::optional<double> r_l_of_means;
  std::optional<std::size_t> near_zero;
  std::optional<std::size_t> near_zero_cumulative;
  std::optional<double> angle;
  std::optional<double> norm_w;
  std::optional<double> norm_l;
  std::optional<double> val_pass1;
  /// Mean drift on the fixed probe pairs, measured with validation.
  std::optional<double> probe_drift_chosen;
  std::optional<double> probe_drift_rejected;
  /// Effective per-pair c_l values of this step, kept for audits.
  std::vector<double> effective_c_l;
};

/// Loss and coefficient bookkeeping of one scored batch.
struct StepResult {
  ad::Value loss;
  std::vector<CoefficientPair> base_coefficients;
  std::vector<CoefficientPair> fpa_coefficients;
};

/// Builds the objective on an already-scored batch.
inline StepResult build_objective(const std::vector<ScoredPair>& scored, const ObjectiveSpec& spec,
                                  std::optional<double> kto_baseline = {}) {
  const BatchScore batch = batch_scores(scored);
  StepResult r;
  const auto family = coefficient_family(spec.objective);
  if (family) r.base_coefficients = coefficients(*family, snapshot(batch), spec.hyper);
  switch (spec.objective) {
    case Objective::Sft: r.loss = sft_loss(batch); break;
    case Objective::Dpo: r.loss = dpo_loss(batch, spec.hyper); break;
    case Objective::Dpop: r.loss = dpop_loss(batch, spec.hyper); break;
    case Objective::Kto: r.loss = kto_loss(batch, spec.hyper, kto_baseline); break;
    case Objective::Rpo: r.loss = rpo_loss(batch, spec.hyper); break;
    case Objective::Simper: r.loss = simper_loss(batch); break;
    case Objective::FpaDpo:
    case Objective::FpaRpo:
    case Objective::FpaSimper: {
      FpaConfig cfg = spec.fpa;
      cfg.base = *family;
      const auto views = future_views(scored, cfg.lambda);
      r.loss = fpa_loss(batch, views, cfg, spec.hyper);
      r.fpa_coefficients = fpa_coefficients(batch, views, cfg, spec.hyper);
      break;
    }
  }
  return r;
}

/// Pre-computes the batch order from the seed: consecutive chunks of
/// per-epoch permutations.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
      : n_(dataset_size), batch_(std::min(batch_size, dataset_size)), seed_(seed) {
    if (n_ == 0) throw std::invalid_argument("empty training set");
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    while (out.size() < batch_) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, 0xba7c, epoch_++));
    rng.shuffle(order_.begin(), order_.end());
    cursor_ = 0;
  }

  std::size_t n_, batch_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
};

struct TrainResult {
  TinyLM final_model;
  TinyLM best_model;
  std::vector<RunMetrics> metrics;
  std::size_t steps = 0;
  std::optional<std::size_t> best_step;  // step of the best validation pass@1
  std::optional<double> best_pass1;
  bool stopped_early = false;
};

/// Called after every step; may be used for progress output.
using StepObserver = std::function<void(const RunMetrics&)>;

struct TrainInputs {
  const FrozenReference* reference = nullptr;
  const std::vector<PreferencePair>* train = nullptr;
  /// Held-out questions for pass@1 early stopping (may be empty).
  std::vector<TaskInstance> validation_questions;
  /// Pairs whose drift is tracked at every validation (may be empty).
  std::vector<PreferencePair> probe;
  TaskFormat format;
};

inline TrainResult train(const TinyLM& initial, const TrainInputs& in, const ObjectiveSpec& spec,
                         const TrainConfig& cfg, const StepObserver& observer = {}) {
  validate(cfg);
  validate(spec.hyper);
  validate(spec.fpa);
  if (!in.train || in.train->empty()) throw std::invalid_argument("training set is empty");
  if (!in.reference) throw std::invalid_argument("training needs a reference model");
  if (in.reference->shape() != initial.shape()) throw std::invalid_argument("policy and reference shapes differ");

  TrainResult result{initial, initial, {}, 0, std::nullopt, std::nullopt, false};
  TinyLM& policy = result.final_model;
  OptimizerState opt;
  BatchSchedule schedule(in.train->size(), cfg.batch_size, cfg.seed);
  const bool validating = cfg.eval_every > 0 && !in.validation_questions.empty();
  EvalOptions eval_opts;
  eval_opts.samples = cfg.eval_samples;
  eval_opts.temperature = cfg.eval_temperature;
  eval_opts.seed = derive_seed(cfg.seed, 0x7a11);
  std::size_t stale_evals = 0;
  std::size_t cumulative_near_zero = 0;
  double kto_sum = 0.0;
  std::size_t kto_count = 0;

  auto validate_now = [&](RunMetrics& row) {
    const double p1 = evaluate(policy, in.format, in.validation_questions, eval_opts).pass_at_1;
    row.val_pass1 = p1;
    if (!in.probe.empty()) {
      const auto d = drift_probe(policy, *in.reference, in.probe);
      row.probe_drift_chosen = d.chosen;
      row.probe_drift_rejected = d.rejected;
    }
    if (!result.best_pass1 || p1 > *result.best_pass1) {
      result.best_pass1 = p1;
      result.best_step = row.step;
      result.best_model = policy;
      stale_evals = 0;
    } else {
      ++stale_evals;
    }
  };

  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    const auto idx = schedule.next();
    std::vector<const PreferencePair*> batch;
    for (auto i : idx) batch.push_back(&(*in.train)[i]);

    ad::Graph g;
    const BoundModel bound = policy.bind(g);
    const auto scored = score_batch(bound, batch, in.reference);

    std::optional<double> kto_baseline;
    if (spec.objective == Objective::Kto && spec.hyper.kto_baseline == KtoBaseline::RunningMean) {
      kto_sum += kto_batch_baseline(batch_scores(scored));
      ++kto_count;
      kto_baseline = kto_sum / static_cast<double>(kto_count);
    }
    const StepResult sr = build_objective(scored, spec, kto_baseline);
    const double loss = sr.loss.item();
    if (!std::isfinite(loss)) {
      std::string ids;
      for (auto i : idx) ids += (ids.empty() ? "" : ",") + std::to_string(i);
      throw TrainingError("non-finite loss at step " + std::to_string(step) + " on batch [" + ids + "]");
    }
    g.backward(sr.loss);
    std::vector<double> grads = bound.parameters().grad().data;

    RunMetrics row;
    row.step = step;
    row.loss = loss;
    row.lr = lr_at_step(cfg, step);
    try {
      row.grad_norm = clip_gradients(grads, cfg.max_grad_norm);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step));
    }

    if (cfg.diagnostics) {
      const auto snaps = snapshot(batch_scores(scored));
      if (scored.front().score.ref_chosen) {
        double dw = 0.0, dl = 0.0;
        for (const auto& s : snaps) {
          dw += s.chosen - s.ref_chosen;
          dl += s.rejected - s.ref_rejected;
        }
        row.drift_chosen = dw / static_cast<double>(snaps.size());
        row.drift_rejected = dl / static_cast<double>(snaps.size());
      }
      if (!sr.base_coefficients.empty()) {
        const auto& effective = sr.fpa_coefficients.empty() ? sr.base_coefficients : sr.fpa_coefficients;
        const auto trace = coefficient_trace_step(sr.base_coefficients, effective, cfg.near_zero_threshold, step);
        row.c_w = trace.base.chosen;
        row.c_l = trace.base.rejected;
        if (!sr.fpa_coefficients.empty()) {
          row.fpa_c_w = trace.fpa.chosen;
          row.fpa_c_l = trace.fpa.rejected;
          row.r_w = trace.ratio_chosen;
          row.r_l = trace.ratio_rejected;
          row.r_w_of_means = trace.ratio_of_means_chosen;
          row.r_l_of_means = trace.ratio_of_means_rejected;
        }
        cumulative_near_zero += trace.near_zero;
        row.near_zero = trace.near_zero;
        row.near_zero_cumulative = cumulative_near_zero;
        for (const auto& c : effective) row.effective_c_l.push_back(c.rejected);
      }
      if (cfg.angle_every > 0 && step % cfg.angle_every == 0) {
        const auto rep = gradient_angle_and_norms(policy, batch);
        row.angle = rep.angle;
        row.norm_w = rep.chosen_norm;
        row.norm_l = rep.rejected_norm;
      }
    }

    adamw_step(policy.parameters(), grads, opt, row.lr, cfg);
    result.steps = step + 1;

    if (validating && (step + 1) % cfg.eval_every == 0) validate_now(row);
    result.metrics.push_back(std::move(row));
    if (observer) observer(result.metrics.back());
    if (validating && cfg.patience > 0 && stale_evals >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
    if (cfg.target_pass1 && result.metrics.back().val_pass1 && *result.metrics.back().val_pass1 >= *cfg.target_pass1) {
      result.stopped_early = true;
      break;
    }
  }
  if (!result.best_step) result.best_model = policy;
  return result;
}

}  // namespace preflab
