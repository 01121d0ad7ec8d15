#pragma once

// Read-only measurements of training dynamics: gradient angles and norms,
// log-probability drift against the reference, and coefficient traces.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "preflab/fpa.hpp"
#include "preflab/scoring.hpp"

namespace preflab {

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Angle in degrees; missing when either vector has zero norm.
inline std::optional<double> angle_degrees(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("angle_degrees: length mismatch");
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  // 2 atan2(|u - v|, |u + v|) on unit vectors; acos loses accuracy near 0 and 180.
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double u = a[i] / na, v = b[i] / nb;
    diff += (u - v) * (u - v);
    sum += (u + v) * (u + v);
  }
  return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)) * 180.0 / std::numbers::pi;
}

struct GradientReport {
  std::optional<double> angle;  // degrees between preferred and dispreferred gradients
  // Degrees between the two update directions, grad log pi(y_w) and
  // -grad log pi(y_l); always 180 - angle.
  std::optional<double> update_angle;
  double chosen_norm = 0.0;
  double rejected_norm = 0.0;
  std::size_t batch = 0;
  std::size_t step = 0;
};

/// Gradients of mean log pi(y_w) and mean log pi(y_l) over the batch with
/// respect to all parameters, from two backward passes on one graph.
inline GradientReport gradient_angle_and_norms(const TinyLM& model, std::span<const PreferencePair* const> batch) {
  if (batch.empty()) throw std::invalid_argument("gradient_angle_and_norms: empty batch");
  ad::Graph g;
  const BoundModel bound = model.bind(g);
  std::vector<ad::Value> chosen, rejected;
  for (const auto* p : batch) {
    chosen.push_back(score_trajectory(bound, p->prompt, p->chosen).logprob);
    rejected.push_back(score_trajectory(bound, p->prompt, p->rejected).logprob);
  }
  ad::Value mean_w = detail::batch_mean(chosen);
  ad::Value mean_l = detail::batch_mean(rejected);
  g.backward(mean_w);
  const std::vector<double> grad_w = bound.parameters().grad().data;
  g.zero_grad();
  g.backward(mean_l);
  const std::vector<double>& grad_l = bound.parameters().grad().data;
  GradientReport r;
  r.angle = angle_degrees(grad_w, grad_l);
  std::vector<double> descent_l(grad_l.size());
  for (std::size_t i = 0; i < grad_l.size(); ++i) descent_l[i] = -grad_l[i];
  r.update_angle = angle_degrees(grad_w, descent_l);
  r.chosen_norm = l2_norm(grad_w);
  r.rejected_norm = l2_norm(grad_l);
  r.batch = batch.size();
  return r;
}

inline GradientReport gradient_angle_and_norms(const TinyLM& model, const std::vector<PreferencePair>& batch) {
  std::vector<const PreferencePair*> ptrs;
  for (const auto& p : batch) ptrs.push_back(&p);
  return gradient_angle_and_norms(model, ptrs);
}

/// Number of values strictly below `threshold`.
inline std::size_t near_zero_count(std::span<const double> values, double threshold = 1e-8) {
  std::size_t n = 0;
  for (double v : values)
    if (v < threshold) ++n;
  return n;
}

struct DriftRecord {
  double chosen = 0.0;    // mean log pi_theta(y_w) - log pi_ref(y_w)
  double rejected = 0.0;  // mean log pi_theta(y_l) - log pi_ref(y_l)
};

/// Mean drift over a fixed probe set.
inline DriftRecord drift_probe(const TinyLM& model, const FrozenReference& reference,
                               const std::vector<PreferencePair>& probe) {
  DriftRecord d;
  if (probe.empty()) return d;
  for (const auto& p : probe) {
    d.chosen += model.sequence_logprob(p.prompt, p.chosen) - reference.sequence_logprob(p.prompt, p.chosen);
    d.rejected += model.sequence_logprob(p.prompt, p.rejected) - reference.sequence_logprob(p.prompt, p.rejected);
  }
  d.chosen /= static_cast<double>(probe.size());
  d.rejected /= static_cast<double>(probe.size());
  return d;
}

struct CoefficientTrace {
  std::size_t step = 0;
  CoefficientPair base;  // batch means
  CoefficientPair fpa;
  std::optional<double> ratio_chosen;            // mean over pairs of fpa / base
  std::optional<double> ratio_rejected;
  std::optional<double> ratio_of_means_chosen;   // mean fpa / mean base
  std::optional<double> ratio_of_means_rejected;
  std::size_t near_zero = 0;  // effective c_l values below threshold
};

/// Assembles one trace row from per-pair coefficients of the same batch.
/// Pairs with a zero base coefficient are left out of the mean of ratios.
inline CoefficientTrace coefficient_trace_step(std::span<const CoefficientPair> base,
                                               std::span<const CoefficientPair> fpa, double threshold = 1e-8,
                                               std::size_t step = 0) {
  if (base.size() != fpa.size()) throw std::invalid_argument("coefficient_trace_step: batch size mismatch");
  CoefficientTrace t;
  t.step = step;
  t.base = mean_coefficients(base);
  t.fpa = mean_coefficients(fpa);
  double sw = 0.0, sl = 0.0;
  std::size_t nw = 0, nl = 0;
  std::vector<double> effective_l;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto r = coefficient_ratio(base[i], fpa[i]);
    if (r.chosen) {
      sw += *r.chosen;
      ++nw;
    }
    if (r.rejected) {
      sl += *r.rejected;
      ++nl;
    }
    effective_l.push_back(fpa[i].rejected);
  }
  if (nw) t.ratio_chosen = sw / static_cast<double>(nw);
  if (nl) t.ratio_rejected = sl / static_cast<double>(nl);
  const auto rm = coefficient_ratio(t.base, t.fpa);
  t.ratio_of_means_chosen = rm.chosen;
  t.ratio_of_means_rejected = rm.rejected;
  t.near_zero = near_zero_count(effective_l, threshold);
  return t;
}

}  // namespace preflab
