#pragma once

// Future-policy-aware wrappers.
//
// The future policy is the softmax of logits extrapolated from the
// reference toward the current policy,
//   h_future = (1 + lambda) * h_theta - lambda * h_ref,
// and replaces the current policy inside the gradient coefficients only.
// The coefficients are gradient-stopped; gradient still flows through the
// live log pi_theta terms.

#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "preflab/objectives.hpp"
#include "preflab/scoring.hpp"

namespace preflab {

enum class FpaTarget { Both, PreferredOnly, DispreferredOnly };

inline std::string_view to_string(FpaTarget t) {
  switch (t) {
    case FpaTarget::Both: return "both";
    case FpaTarget::PreferredOnly: return "preferred-only";
    case FpaTarget::DispreferredOnly: return "dispreferred-only";
  }
  return "?";
}

struct FpaConfig {
  double lambda = 0.5;
  FpaTarget target = FpaTarget::Both;
  BaseAlgorithm base = BaseAlgorithm::Simper;
};

inline void validate(const FpaConfig& c) {
  if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) throw std::invalid_argument("lambda must be finite and >= 0");
}

/// (1 + lambda) * h_theta - lambda * h_ref, elementwise.
inline Tensor future_policy_logits(const Tensor& h_theta, const Tensor& h_ref, double lambda) {
  if (h_theta.shape != h_ref.shape) {
    throw ShapeError("future_policy_logits: shapes " + shape_string(h_theta.shape) + " and " +
                     shape_string(h_ref.shape) + " differ");
  }
  Tensor out = h_theta;
  // Written as h + lambda * (h - h_ref) so that h == h_ref returns h bit-for-bit.
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = h_theta.data[i] + lambda * (h_theta.data[i] - h_ref.data[i]);
  return out;
}

/// Graph form of the extrapolation; the result carries no gradient.
inline ad::Value future_policy_logits(ad::Value h_theta, const Tensor& h_ref, double lambda) {
  if (h_theta.shape() != h_ref.shape) {
    throw ShapeError("future_policy_logits: shapes " + shape_string(h_theta.shape()) + " and " +
                     shape_string(h_ref.shape) + " differ");
  }
  ad::Graph& g = h_theta.graph();
  ad::Value h = ad::stop_gradient(h_theta);
  return h + (h - g.constant(h_ref)) * lambda;
}

/// log pi_future(y | x) from policy and reference logit rows; gradient-stopped.
inline ad::Value future_sequence_logprob(ad::Value h_theta_rows, const Tensor& h_ref_rows,
                                         std::span<const std::size_t> tokens, double lambda) {
  if (h_theta_rows.shape().size() != 2 || h_theta_rows.shape()[0] != tokens.size()) {
    throw ShapeError("future_sequence_logprob: logit rows do not match trajectory length");
  }
  const std::size_t vocab = h_theta_rows.shape()[1];
  ad::Value lp = ad::log_softmax(future_policy_logits(h_theta_rows, h_ref_rows, lambda));
  std::vector<std::size_t> picks(tokens.size());
  for (std::size_t j = 0; j < tokens.size(); ++j) picks[j] = j * vocab + tokens[j];
  return ad::sum(ad::gather(lp, std::move(picks)));
}

/// Future-policy log-probabilities of both trajectories of a pair.
struct FuturePolicyView {
  ad::Value chosen;
  ad::Value rejected;
};

inline FuturePolicyView future_view(const ScoredPair& s, double lambda) {
  if (!s.ref_logits_chosen || !s.ref_logits_rejected || !s.source) {
    throw std::invalid_argument("future policy needs reference logits (cached or live)");
  }
  return {future_sequence_logprob(s.chosen.logits, *s.ref_logits_chosen, s.source->chosen, lambda),
          future_sequence_logprob(s.rejected.logits, *s.ref_logits_rejected, s.source->rejected, lambda)};
}

inline std::vector<FuturePolicyView> future_views(const std::vector<ScoredPair>& scored, double lambda) {
  std::vector<FuturePolicyView> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(future_view(s, lambda));
  return out;
}

/// Coefficients with the designated side(s) evaluated under the future
/// policy and the other side under the (stopped) current policy.
inline CoefficientPair fpa_coefficients(const PairLogProbs& current, double future_chosen, double future_rejected,
                                        const FpaConfig& cfg, const HyperParams& hp) {
  PairLogProbs future = current;
  future.chosen = future_chosen;
  future.rejected = future_rejected;
  const PairLogProbs& w_src = cfg.target == FpaTarget::DispreferredOnly ? current : future;
  const PairLogProbs& l_src = cfg.target == FpaTarget::PreferredOnly ? current : future;
  return {coefficients(cfg.base, w_src, hp).chosen, coefficients(cfg.base, l_src, hp).rejected};
}

inline std::vector<CoefficientPair> fpa_coefficients(const BatchScore& batch, std::span<const FuturePolicyView> views,
                                                     const FpaConfig& cfg, const HyperParams& hp) {
  if (views.size() != batch.size()) throw std::invalid_argument("one future view per pair required");
  std::vector<CoefficientPair> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.push_back(fpa_coefficients(snapshot(batch[i]), views[i].chosen.item(), views[i].rejected.item(), cfg, hp));
  }
  return out;
}

/// -mean[ sg(c_w) log pi(y_w) - sg(c_l) log pi(y_l) ] with future-policy
/// coefficients. Loss values differ from the base loss; gradients coincide
/// at lambda = 0.
inline ad::Value fpa_loss(const BatchScore& batch, std::span<const FuturePolicyView> views, const FpaConfig& cfg,
                          const HyperParams& hp) {
  validate(cfg);
  if (batch.empty()) throw std::invalid_argument("fpa_loss: empty batch");
  if (cfg.base != BaseAlgorithm::Simper) {
    for (const auto& p : batch) detail::require_reference(p, "fpa_loss");
  }
  for (const auto& v : views) {
    if (v.chosen.tracks_grad() || v.rejected.tracks_grad()) throw std::logic_error("future view must be gradient-stopped");
  }
  const auto coefs = fpa_coefficients(batch, views, cfg, hp);
  std::vector<ad::Value> terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    // Coefficients enter as constants: the stop-gradient of the future policy.
    terms.push_back(-(batch[i].chosen * coefs[i].chosen - batch[i].rejected * coefs[i].rejected));
  }
  return detail::batch_mean(terms);
}

inline ad::Value targeted_fpa_loss(const BatchScore& batch, std::span<const FuturePolicyView> views,
                                   const FpaConfig& cfg, const HyperParams& hp) {
  if (cfg.target == FpaTarget::Both) throw std::invalid_argument("targeted FPA needs a one-sided target");
  return fpa_loss(batch, views, cfg, hp);
}

/// Element-wise fpa / base; a zero base coefficient yields no ratio.
struct CoefficientRatio {
  std::optional<double> chosen;
  std::optional<double> rejected;
};

inline CoefficientRatio coefficient_ratio(const CoefficientPair& base, const CoefficientPair& fpa) {
  CoefficientRatio r;
  if (base.chosen > 0.0) r.chosen = fpa.chosen / base.chosen;
  if (base.rejected > 0.0) r.rejected = fpa.rejected / base.rejected;
  return r;
}

}  // namespace preflab
