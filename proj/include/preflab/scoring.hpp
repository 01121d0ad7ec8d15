#pragma once

// Scores preference pairs under a bound policy, attaching reference
// log-probabilities from cached logits or a live reference forward pass.

#include <optional>
#include <vector>

#include "preflab/objectives.hpp"
#include "preflab/pref_data.hpp"
#include "preflab/tiny_lm.hpp"

namespace preflab {

/// One pair scored under the policy, with everything needed for both the
/// base objectives and the future-policy view.
struct ScoredPair {
  PairScore score;
  TrajectoryScore chosen;
  TrajectoryScore rejected;
  std::optional<Tensor> ref_logits_chosen;
  std::optional<Tensor> ref_logits_rejected;
  const PreferencePair* source = nullptr;
};

/// Sum of log-softmax entries of the realized tokens, from logit rows.
inline double logprob_from_logits(const Tensor& rows, std::span<const std::size_t> tokens) {
  if (rows.rank() != 2 || rows.rows() != tokens.size()) throw ShapeError("logit rows do not match trajectory length");
  ad::Graph g;
  ad::Value lp = ad::log_softmax(g.constant(rows));
  std::vector<std::size_t> picks(tokens.size());
  for (std::size_t j = 0; j < tokens.size(); ++j) picks[j] = j * rows.cols() + tokens[j];
  return ad::sum(ad::gather(lp, std::move(picks))).item();
}

/// Scores `pair` under `policy`. Reference logits come from the pair's cache
/// when present, else from `reference` when given, else stay absent.
inline ScoredPair score_pair(const BoundModel& policy, const PreferencePair& pair,
                             const FrozenReference* reference = nullptr) {
  ScoredPair out;
  out.source = &pair;
  out.chosen = score_trajectory(policy, pair.prompt, pair.chosen);
  out.rejected = score_trajectory(policy, pair.prompt, pair.rejected);
  if (pair.has_cache()) {
    if (pair.ref_logits_chosen->rows() != pair.chosen.size() ||
        pair.ref_logits_rejected->rows() != pair.rejected.size() ||
        pair.ref_logits_chosen->cols() != policy.shape().vocab ||
        pair.ref_logits_rejected->cols() != policy.shape().vocab) {
      throw ShapeError("cached reference logits do not match the trajectory or vocabulary");
    }
    out.ref_logits_chosen = *pair.ref_logits_chosen;
    out.ref_logits_rejected = *pair.ref_logits_rejected;
  } else if (reference) {
    out.ref_logits_chosen = reference_logits(*reference, pair.prompt, pair.chosen);
    out.ref_logits_rejected = reference_logits(*reference, pair.prompt, pair.rejected);
  }
  out.score.chosen = out.chosen.logprob;
  out.score.rejected = out.rejected.logprob;
  out.score.chosen_len = pair.chosen.size();
  out.score.rejected_len = pair.rejected.size();
  if (out.ref_logits_chosen) {
    out.score.ref_chosen = logprob_from_logits(*out.ref_logits_chosen, pair.chosen);
    out.score.ref_rejected = logprob_from_logits(*out.ref_logits_rejected, pair.rejected);
  }
  return out;
}

inline std::vector<ScoredPair> score_batch(const BoundModel& policy, std::span<const PreferencePair* const> pairs,
                                           const FrozenReference* reference = nullptr) {
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (const auto* p : pairs) out.push_back(score_pair(policy, *p, reference));
  return out;
}

inline std::vector<ScoredPair> score_batch(const BoundModel& policy, const std::vector<PreferencePair>& pairs,
                                           const FrozenReference* reference = nullptr) {
  std::vector<const PreferencePair*> ptrs;
  for (const auto& p : pairs) ptrs.push_back(&p);
  return score_batch(policy, ptrs, reference);
}

inline BatchScore batch_scores(const std::vector<ScoredPair>& scored) {
  BatchScore out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.score);
  return out;
}

}  // namespace preflab
