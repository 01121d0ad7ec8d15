#include <gtest/gtest.h>

#include <random>

#include "checks.hpp"

using namespace preflab;

TEST(Angle, ParallelAntiparallelOrthogonal) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> g(1 + i % 40), neg;
    for (double& v : g) v = n(rng);
    for (double v : g) neg.push_back(-v);
    EXPECT_NEAR(*angle_degrees(g, g), 0.0, 1e-6);
    EXPECT_NEAR(*angle_degrees(g, neg), 180.0, 1e-6);
  }
  const std::vector<double> a{1.0, 0.0, 2.0}, b{0.0, 3.0, 0.0};
  EXPECT_NEAR(*angle_degrees(a, b), 90.0, 1e-12);
  EXPECT_FALSE(angle_degrees(a, std::vector<double>(3, 0.0)).has_value());
  EXPECT_EQ(l2_norm(std::vector<double>{3.0, 4.0}), 5.0);
}

TEST(GradientReport, IdenticalTrajectoriesGiveZeroAngle) {
  const TinyLM m = TinyLM::random({}, 5, 0.3);
  const TaskFormat f;
  std::vector<PreferencePair> batch;
  for (const auto& inst : generate_instances(f, 4, 2)) batch.push_back({inst.prompt, inst.gold, inst.gold, {}, {}});
  const auto r = gradient_angle_and_norms(m, batch);
  ASSERT_TRUE(r.angle.has_value());
  EXPECT_NEAR(*r.angle, 0.0, 1e-6);
  EXPECT_EQ(r.chosen_norm, r.rejected_norm);
  EXPECT_EQ(r.batch, 4u);
  EXPECT_THROW(gradient_angle_and_norms(m, std::vector<PreferencePair>{}), std::invalid_argument);
}

TEST(GradientReport, MatchesSeparateGradients) {
  std::mt19937_64 rng(6);
  const auto pr = oracle::random_problem(rng, 3);
  const TinyLM m(pr.shape, pr.policy);
  std::vector<double> gw(m.parameter_count(), 0.0), gl(m.parameter_count(), 0.0);
  for (const auto& p : pr.pairs) {
    const auto a = checks::logprob_gradient(m, p.prompt, p.chosen);
    const auto b = checks::logprob_gradient(m, p.prompt, p.rejected);
    for (std::size_t k = 0; k < gw.size(); ++k) {
      gw[k] += a[k] / 3.0;
      gl[k] += b[k] / 3.0;
    }
  }
  const auto r = gradient_angle_and_norms(m, pr.pairs);
  EXPECT_NEAR(r.chosen_norm, l2_norm(gw), 1e-12);
  EXPECT_NEAR(r.rejected_norm, l2_norm(gl), 1e-12);
  EXPECT_NEAR(*r.angle, *angle_degrees(gw, gl), 1e-9);
  EXPECT_NEAR(*r.update_angle, 180.0 - *r.angle, 1e-9);
  EXPECT_GE(*r.angle, 0.0);
  EXPECT_LE(*r.angle, 180.0);
}

TEST(NearZero, Counting) {
  EXPECT_EQ(near_zero_count(std::vector<double>{1e-9, 2e-8, 0.0}), 2u);
  EXPECT_EQ(near_zero_count(std::vector<double>(5, 1.0)), 0u);
  EXPECT_EQ(near_zero_count(std::vector<double>{0.0, 1e-300}, 0.0), 0u);
  EXPECT_EQ(near_zero_count(std::vector<double>{1e-8}), 0u);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> e(-12.0, 0.0);
  std::vector<double> v(200);
  for (double& x : v) x = std::pow(10.0, e(rng));
  std::size_t prev = 0;
  for (double t = 1e-13; t < 10.0; t *= 3.0) {
    const auto c = near_zero_count(v, t);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(Drift, ZeroAtInitAndPure) {
  const TinyLM m = TinyLM::random({}, 8, 0.2);
  const FrozenReference ref = freeze(m);
  const TaskFormat f;
  std::vector<PreferencePair> probe;
  for (const auto& inst : generate_instances(f, 5, 3)) {
    Tokens wrong = inst.gold;
    wrong[wrong.size() - 2] = (wrong[wrong.size() - 2] + 1) % f.modulus;
    probe.push_back({inst.prompt, inst.gold, wrong, {}, {}});
  }
  const auto d = drift_probe(m, ref, probe);
  EXPECT_EQ(d.chosen, 0.0);
  EXPECT_EQ(d.rejected, 0.0);
  const TinyLM other = TinyLM::random({}, 9, 0.2);
  const auto a = drift_probe(other, ref, probe);
  const auto b = drift_probe(other, ref, probe);
  EXPECT_EQ(a.chosen, b.chosen);
  EXPECT_EQ(a.rejected, b.rejected);
  EXPECT_NE(a.chosen, 0.0);
}

TEST(Drift, PreferredRisesUnderSft) {
  const TaskFormat f;
  const TinyLM init = TinyLM::random({}, 42);
  const FrozenReference ref = freeze(init);
  std::vector<PreferencePair> pairs;
  for (const auto& inst : generate_instances(f, 10, 42)) {
    Tokens wrong = inst.gold;
    wrong[wrong.size() - 2] = (wrong[wrong.size() - 2] + 1) % f.modulus;
    pairs.push_back({inst.prompt, inst.gold, wrong, {}, {}});
  }
  TrainInputs in;
  in.reference = &ref;
  in.train = &pairs;
  in.format = f;
  TrainConfig cfg;
  cfg.max_steps = 30;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 5;
  cfg.eval_every = 0;
  ObjectiveSpec spec;
  spec.objective = Objective::Sft;
  const auto r = train(init, in, spec, cfg);
  EXPECT_GT(drift_probe(r.final_model, ref, pairs).chosen, 0.0);
}

TEST(Trace, RatiosAndExclusions) {
  const std::vector<CoefficientPair> base{{0.5, 0.25}, {0.2, 0.0}}, fpa{{0.5, 0.125}, {0.4, 1e-9}};
  const auto t = coefficient_trace_step(base, fpa, 1e-8, 7);
  EXPECT_EQ(t.step, 7u);
  EXPECT_DOUBLE_EQ(*t.ratio_chosen, 1.5);
  EXPECT_DOUBLE_EQ(*t.ratio_rejected, 0.5);  // the zero base c_l is left out
  EXPECT_DOUBLE_EQ(*t.ratio_of_means_chosen, 0.45 / 0.35);
  EXPECT_EQ(t.near_zero, 1u);
  EXPECT_EQ(coefficient_trace_step(base, base).ratio_chosen, 1.0);
  EXPECT_THROW(coefficient_trace_step(base, std::vector<CoefficientPair>(1)), std::invalid_argument);
}

TEST(Trace, OneRowPerStepAndDiagnosticsArePassive) {
  const TaskFormat f;
  const TinyLM init = TinyLM::random({}, 11, 0.1);
  const FrozenReference ref = freeze(init);
  std::vector<PreferencePair> pairs;
  for (const auto& inst : generate_instances(f, 8, 5)) {
    Tokens wrong = inst.gold;
    wrong[wrong.size() - 2] = (wrong[wrong.size() - 2] + 2) % f.modulus;
    pairs.push_back({inst.prompt, inst.gold, wrong, {}, {}});
  }
  TrainInputs in;
  in.reference = &ref;
  in.train = &pairs;
  in.format = f;
  TrainConfig cfg;
  cfg.max_steps = 12;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 4;
  cfg.eval_every = 0;
  cfg.angle_every = 3;
  ObjectiveSpec spec;
  spec.objective = Objective::FpaSimper;
  const auto on = train(init, in, spec, cfg);
  EXPECT_EQ(on.metrics.size(), 12u);
  EXPECT_TRUE(on.metrics[0].r_w.has_value());
  EXPECT_EQ(*on.metrics[0].r_w, 1.0);
  EXPECT_EQ(*on.metrics[0].r_l, 1.0);
  EXPECT_TRUE(on.metrics[0].angle.has_value());
  cfg.diagnostics = false;
  cfg.angle_every = 0;
  const auto off = train(init, in, spec, cfg);
  EXPECT_EQ(on.final_model, off.final_model);
}
