#pragma once

// Preference objectives and their gradient-coefficient decomposition.
//
// Every pairwise objective here has a gradient of the form
//   grad L = -mean[ c_w * grad log pi(y_w|x) - c_l * grad log pi(y_l|x) ]
// and the *_coefficients functions return (c_w, c_l) per pair.

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "preflab/grad.hpp"

namespace preflab {

/// Log-probabilities of one preference pair. Policy terms are graph values;
/// reference terms are plain numbers (the reference never gets gradient).
struct PairScore {
  ad::Value chosen;    // log pi_theta(y_w | x)
  ad::Value rejected;  // log pi_theta(y_l | x)
  std::size_t chosen_len = 1;
  std::size_t rejected_len = 1;
  std::optional<double> ref_chosen;
  std::optional<double> ref_rejected;
};

using BatchScore = std::vector<PairScore>;

/// Plain-number snapshot of a pair, used for coefficient evaluation.
struct PairLogProbs {
  double chosen = 0.0;
  double rejected = 0.0;
  std::size_t chosen_len = 1;
  std::size_t rejected_len = 1;
  double ref_chosen = 0.0;
  double ref_rejected = 0.0;
};

struct CoefficientPair {
  double chosen = 0.0;    // c_w
  double rejected = 0.0;  // c_l
};

enum class KtoBaseline { Batch, RunningMean };

struct HyperParams {
  double beta = 0.1;
  double alpha = 1.0;
  double lambda_dpop = 50.0;
  double kto_beta = 0.1;
  double kto_lambda_w = 1.0;
  double kto_lambda_l = 1.0;
  KtoBaseline kto_baseline = KtoBaseline::Batch;
};

inline void validate(const HyperParams& hp) {
  for (double v : {hp.beta, hp.alpha, hp.lambda_dpop, hp.kto_beta, hp.kto_lambda_w, hp.kto_lambda_l}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("hyperparameters must be positive and finite");
  }
}

namespace detail {

inline void require_nonempty(const BatchScore& batch, const char* who) {
  if (batch.empty()) throw std::invalid_argument(std::string(who) + ": empty batch");
}

inline void require_reference(const PairScore& p, const char* who) {
  if (!p.ref_chosen || !p.ref_rejected) {
    throw std::invalid_argument(std::string(who) + ": reference log-probabilities missing");
  }
}

inline void require_lengths(const PairScore& p) {
  if (p.chosen_len == 0 || p.rejected_len == 0) throw std::invalid_argument("trajectory lengths must be >= 1");
}

/// Arithmetic mean of scalar values.
inline ad::Value batch_mean(const std::vector<ad::Value>& terms) {
  ad::Value acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
  return acc * (1.0 / static_cast<double>(terms.size()));
}

/// log(pi/pi_ref)(y_w) - log(pi/pi_ref)(y_l) as a graph value.
inline ad::Value dpo_margin(const PairScore& p) {
  return (p.chosen - *p.ref_chosen) - (p.rejected - *p.ref_rejected);
}

/// exp(logp / len): per-token geometric-mean probability.
inline ad::Value inverse_perplexity(ad::Value logp, std::size_t len) {
  return ad::exp(logp * (1.0 / static_cast<double>(len)));
}

}  // namespace detail

inline PairLogProbs snapshot(const PairScore& p) {
  return {p.chosen.item(),     p.rejected.item(),          p.chosen_len,
          p.rejected_len,      p.ref_chosen.value_or(0.0), p.ref_rejected.value_or(0.0)};
}

inline std::vector<PairLogProbs> snapshot(const BatchScore& batch) {
  std::vector<PairLogProbs> out;
  out.reserve(batch.size());
  for (const auto& p : batch) out.push_back(snapshot(p));
  return out;
}

// Losses. All reduce over the batch by arithmetic mean.

inline ad::Value sft_loss(const BatchScore& batch) {
  detail::require_nonempty(batch, "sft_loss");
  std::vector<ad::Value> terms;
  for (const auto& p : batch) terms.push_back(-p.chosen);
  return detail::batch_mean(terms);
}

inline ad::Value dpo_loss(const BatchScore& batch, const HyperParams& hp) {
  detail::require_nonempty(batch, "dpo_loss");
  std::vector<ad::Value> terms;
  for (const auto& p : batch) {
    detail::require_reference(p, "dpo_loss");
    terms.push_back(-ad::log_sigmoid(detail::dpo_margin(p) * hp.beta));
  }
  return detail::batch_mean(terms);
}

inline ad::Value rpo_loss(const BatchScore& batch, const HyperParams& hp) {
  detail::require_nonempty(batch, "rpo_loss");
  std::vector<ad::Value> nll;
  for (const auto& p : batch) {
    detail::require_lengths(p);
    nll.push_back(p.chosen * (1.0 / static_cast<double>(p.chosen_len)));
  }
  return dpo_loss(batch, hp) - detail::batch_mean(nll) * hp.alpha;
}

inline ad::Value simper_loss(const BatchScore& batch) {
  detail::require_nonempty(batch, "simper_loss");
  std::vector<ad::Value> terms;
  for (const auto& p : batch) {
    detail::require_lengths(p);
    terms.push_back(-(detail::inverse_perplexity(p.chosen, p.chosen_len) -
                      detail::inverse_perplexity(p.rejected, p.rejected_len)));
  }
  return detail::batch_mean(terms);
}

inline ad::Value dpop_loss(const BatchScore& batch, const HyperParams& hp) {
  detail::require_nonempty(batch, "dpop_loss");
  std::vector<ad::Value> terms;
  for (const auto& p : batch) {
    detail::require_reference(p, "dpop_loss");
    // max(0, log pi_ref(y_w) - log pi_theta(y_w))
    ad::Value penalty = ad::relu(-(p.chosen - *p.ref_chosen));
    ad::Value arg = (detail::dpo_margin(p) - penalty * hp.lambda_dpop) * hp.beta;
    terms.push_back(-ad::log_sigmoid(arg));
  }
  return detail::batch_mean(terms);
}

/// Mean log-ratio over the batch flattened into 2B singletons.
inline double kto_batch_baseline(const BatchScore& batch) {
  double s = 0.0;
  for (const auto& p : batch) {
    detail::require_reference(p, "kto_loss");
    s += (p.chosen.item() - *p.ref_chosen) + (p.rejected.item() - *p.ref_rejected);
  }
  return s / static_cast<double>(2 * batch.size());
}

/// KTO over the pairs treated as independent desirable / undesirable
/// examples. The baseline z_0 carries no gradient; when `baseline` is
/// absent it is the batch mean log-ratio.
inline ad::Value kto_loss(const BatchScore& batch, const HyperParams& hp, std::optional<double> baseline = {}) {
  detail::require_nonempty(batch, "kto_loss");
  const double z0 = baseline ? *baseline : kto_batch_baseline(batch);
  std::vector<ad::Value> terms;
  for (const auto& p : batch) {
    detail::require_reference(p, "kto_loss");
    ad::Value r_w = p.chosen - *p.ref_chosen;
    ad::Value r_l = p.rejected - *p.ref_rejected;
    ad::Value v_w = ad::sigmoid((r_w - z0) * hp.kto_beta) * hp.kto_lambda_w;
    ad::Value v_l = ad::sigmoid((-r_l + z0) * hp.kto_beta) * hp.kto_lambda_l;
    terms.push_back(-v_w + hp.kto_lambda_w);
    terms.push_back(-v_l + hp.kto_lambda_l);
  }
  return detail::batch_mean(terms);
}

// Coefficients.

inline double dpo_coefficient(const PairLogProbs& p, const HyperParams& hp) {
  const double margin = (p.chosen - p.ref_chosen) - (p.rejected - p.ref_rejected);
  return hp.beta * ad::sigmoid(-hp.beta * margin);
}

inline CoefficientPair dpo_coefficients(const PairLogProbs& p, const HyperParams& hp) {
  const double c = dpo_coefficient(p, hp);
  return {c, c};
}

inline CoefficientPair rpo_coefficients(const PairLogProbs& p, const HyperParams& hp) {
  const double c = dpo_coefficient(p, hp);
  return {c + hp.alpha / static_cast<double>(p.chosen_len), c};
}

/// (1/|y|) exp(log pi(y) / |y|)
inline double simper_coefficient(double logp, std::size_t len) {
  const double n = static_cast<double>(len);
  return std::exp(logp / n) / n;
}

inline CoefficientPair simper_coefficients(const PairLogProbs& p) {
  return {simper_coefficient(p.chosen, p.chosen_len), simper_coefficient(p.rejected, p.rejected_len)};
}

/// Base algorithms that admit the (c_w, c_l) form and a future-policy wrapper.
enum class BaseAlgorithm { Dpo, Rpo, Simper };

inline std::string_view to_string(BaseAlgorithm a) {
  switch (a) {
    case BaseAlgorithm::Dpo: return "dpo";
    case BaseAlgorithm::Rpo: return "rpo";
    case BaseAlgorithm::Simper: return "simper";
  }
  return "?";
}

inline CoefficientPair coefficients(BaseAlgorithm algo, const PairLogProbs& p, const HyperParams& hp) {
  switch (algo) {
    case BaseAlgorithm::Dpo: return dpo_coefficients(p, hp);
    case BaseAlgorithm::Rpo: return rpo_coefficients(p, hp);
    case BaseAlgorithm::Simper: return simper_coefficients(p);
  }
  throw std::invalid_argument("unknown base algorithm");
}

inline std::vector<CoefficientPair> coefficients(BaseAlgorithm algo, std::span<const PairLogProbs> batch,
                                                 const HyperParams& hp) {
  std::vector<CoefficientPair> out;
  out.reserve(batch.size());
  for (const auto& p : batch) out.push_back(coefficients(algo, p, hp));
  return out;
}

inline CoefficientPair mean_coefficients(std::span<const CoefficientPair> cs) {
  CoefficientPair m;
  if (cs.empty()) return m;
  for (const auto& c : cs) {
    m.chosen += c.chosen;
    m.rejected += c.rejected;
  }
  m.chosen /= static_cast<double>(cs.size());
  m.rejected /= static_cast<double>(cs.size());
  return m;
}

inline ad::Value base_loss(BaseAlgorithm algo, const BatchScore& batch, const HyperParams& hp) {
  switch (algo) {
    case BaseAlgorithm::Dpo: return dpo_loss(batch, hp);
    case BaseAlgorithm::Rpo: return rpo_loss(batch, hp);
    case BaseAlgorithm::Simper: return simper_loss(batch);
  }
  throw std::invalid_argument("unknown base algorithm");
}

// Length-normalized REINFORCE view of SimPER.

/// +1 for the preferred trajectory, -1 for the dispreferred one, 0 otherwise.
template <class Seq>
int masked_reward(const Seq& y, const Seq& chosen, const Seq& rejected) {
  if (y == chosen) return 1;
  if (y == rejected) return -1;
  return 0;
}

/// mean over pairs of pi(y_w)^(1/|y_w|) - pi(y_l)^(1/|y_l|); a quantity to
/// maximize.
inline ad::Value ln_reinforce_objective(const BatchScore& batch) {
  detail::require_nonempty(batch, "ln_reinforce_objective");
  std::vector<ad::Value> terms;
  for (const auto& p : batch) {
    detail::require_lengths(p);
    // sum over S_x = {y_w, y_l} of pi(y)^(1/|y|) * R(x, y), R = +1 / -1
    ad::Value w = detail::inverse_perplexity(p.chosen, p.chosen_len) * 1.0;
    ad::Value l = detail::inverse_perplexity(p.rejected, p.rejected_len) * -1.0;
    terms.push_back(w + l);
  }
  return detail::batch_mean(terms);
}

}  // namespace preflab
