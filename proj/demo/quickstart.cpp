// Trains SimPER and FPA-SimPER from the same pretrained reference and
// compares them question by question.

#include <cstdio>
#include <string>

#include "preflab/preflab.hpp"

using namespace preflab;

int main() {
  RunConfig c;
  c.overlap = 0.75;
  c.train_instances = 120;
  c.eval_instances = 40;
  c.train.max_steps = 400;
  c.train.learning_rate = 5e-3;
  c.train.eval_every = 100;

  const Dataset d = build_dataset(c);
  std::printf("reference: %zu pretraining steps, held-out pass@1 %.3f\n", d.build.steps, d.build.pass1);
  std::printf("pairs: %zu train, %zu validation, mean overlap %.3f\n", d.split.train.size(), d.split.validation.size(),
              mean_overlap(d.pairs));

  EvalResult results[2];
  const Objective objectives[2] = {Objective::Simper, Objective::FpaSimper};
  for (int i = 0; i < 2; ++i) {
    c.objective = objectives[i];
    const auto r = run_training(c, d.reference, d.split, [](const RunMetrics& m) {
      if (m.val_pass1) std::printf("  step %4zu  loss %8.4f  val pass@1 %.3f\n", m.step, m.loss, *m.val_pass1);
    });
    results[i] = evaluate(r.final_model, c.format(), d.eval_questions, eval_options(c));
    std::printf("%-11s pass@1 %.3f +- %.3f\n", std::string(to_string(c.objective)).c_str(), results[i].pass_at_1,
                results[i].standard_error);
  }
  const auto g = gain_loss(results[0].accuracies(), results[1].accuracies());
  std::printf("fpa vs simper: gain %.3f loss %.3f net %+.3f\n", g.gain, g.loss, g.net);
}
