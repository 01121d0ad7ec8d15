#pragma once

// End-to-end experiment steps shared by the command-line tool and the
// acceptance suite: reference pretraining, dataset construction and
// preference training, all driven by a RunConfig.

#include <vector>

#include "preflab/run_config.hpp"

namespace preflab {

namespace streams {
inline constexpr std::uint64_t kInit = 0x1417;
inline constexpr std::uint64_t kPretrainQuestions = 0x9e71;
inline constexpr std::uint64_t kPretrainHoldout = 0x9e72;
inline constexpr std::uint64_t kPretrainTrain = 0x9e73;
inline constexpr std::uint64_t kInstances = 0xda7a;
inline constexpr std::uint64_t kPairs = 0xda7b;
inline constexpr std::uint64_t kSplit = 0xda7c;
inline constexpr std::uint64_t kEvalQuestions = 0xe7a0;
inline constexpr std::uint64_t kTrain = 0x7a10;
inline constexpr std::uint64_t kEval = 0xe7a2;
}  // namespace streams

struct ReferenceBuild {
  TinyLM model;
  std::size_t steps = 0;
  double pass1 = 0.0;  // validation pass@1 when pretraining stopped
};

/// Supervised training of a randomly initialized model on gold completions
/// until held-out pass@1 reaches `pretrain_target` or the step budget runs
/// out. The result is the reference policy: partially competent, so that
/// K samples per question contain both correct and incorrect answers.
inline ReferenceBuild pretrain_reference(const RunConfig& c) {
  const TaskFormat f = c.format();
  const TinyLM init = TinyLM::random(c.model, derive_seed(c.seed, streams::kInit), c.init_std);
  ReferenceBuild out{init, 0, 0.0};
  if (c.pretrain_steps == 0) return out;

  std::vector<PreferencePair> gold;
  for (const auto& inst : generate_instances(f, c.train_instances, derive_seed(c.seed, streams::kPretrainQuestions))) {
    gold.push_back(PreferencePair{inst.prompt, inst.gold, inst.gold, std::nullopt, std::nullopt});
  }
  const FrozenReference anchor(init);
  TrainInputs in;
  in.reference = &anchor;
  in.train = &gold;
  in.format = f;
  in.validation_questions = generate_instances(f, 40, derive_seed(c.seed, streams::kPretrainHoldout));

  TrainConfig tc;
  tc.seed = derive_seed(c.seed, streams::kPretrainTrain);
  tc.learning_rate = c.pretrain_lr;
  tc.max_steps = c.pretrain_steps;
  tc.batch_size = c.train.batch_size;
  tc.eval_every = c.pretrain_eval_every;
  tc.eval_samples = 8;
  tc.eval_temperature = c.temperature;
  tc.target_pass1 = c.pretrain_target;
  tc.diagnostics = false;
  ObjectiveSpec spec;
  spec.objective = Objective::Sft;
  auto r = train(init, in, spec, tc);
  out.model = std::move(r.final_model);
  out.steps = r.steps;
  if (!r.metrics.empty() && r.metrics.back().val_pass1) out.pass1 = *r.metrics.back().val_pass1;
  return out;
}

struct Dataset {
  TinyLM reference;
  ReferenceBuild build;
  std::vector<TaskInstance> instances;
  std::vector<PreferencePair> pairs;  // every kept pair, with cached reference logits
  PairingStats stats;
  DatasetSplit split;
  std::vector<TaskInstance> eval_questions;
};

inline Dataset build_dataset(const RunConfig& c) {
  validate(c);
  const TaskFormat f = c.format();
  Dataset d;
  d.build = pretrain_reference(c);
  d.reference = d.build.model;
  const FrozenReference ref(d.reference);
  d.instances = generate_instances(f, c.train_instances, derive_seed(c.seed, streams::kInstances));
  PairingOptions po;
  po.samples_per_instance = c.k_samples;
  po.temperature = c.temperature;
  po.max_pairs_per_instance = c.max_pairs_per_instance;
  po.seed = derive_seed(c.seed, streams::kPairs);
  d.pairs = build_preference_pairs(ref, f, d.instances, po, &d.stats);
  cache_reference_logits(ref, d.pairs);
  d.split = split_validation(d.pairs, c.validation_fraction, derive_seed(c.seed, streams::kSplit));
  d.eval_questions = generate_instances(f, c.eval_instances, derive_seed(c.seed, streams::kEvalQuestions));
  return d;
}

inline ObjectiveSpec objective_spec(const RunConfig& c) {
  ObjectiveSpec s;
  s.objective = c.objective;
  s.hyper = c.hyper;
  s.fpa = c.fpa;
  return s;
}

inline TrainConfig train_config(const RunConfig& c) {
  TrainConfig t = c.train;
  t.seed = derive_seed(c.seed, streams::kTrain);
  return t;
}

inline EvalOptions eval_options(const RunConfig& c) {
  EvalOptions o;
  o.samples = c.eval_n;
  o.temperature = c.eval_temperature;
  o.seed = derive_seed(c.seed, streams::kEval);
  o.std_convention = c.std_convention;
  return o;
}

/// Preference training starting from the reference policy. Validation
/// questions are the distinct prompts of the held-out pairs.
inline TrainResult run_training(const RunConfig& c, const TinyLM& reference, const DatasetSplit& split,
                                const StepObserver& observer = {}) {
  validate(c);
  if (reference.shape() != c.model) throw ConfigError("reference model shape does not match the config");
  const FrozenReference ref(reference);
  TrainInputs in;
  in.reference = &ref;
  in.train = &split.train;
  in.format = c.format();
  in.validation_questions = instances_from_pairs(in.format, split.validation);
  in.probe = split.validation;
  return train(reference, in, objective_spec(c), train_config(c), observer);
}

}  // namespace preflab
