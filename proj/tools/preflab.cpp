#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "preflab/commands.hpp"

using namespace preflab;
namespace fs = std::filesystem;

namespace {

std::string flag_name(std::string key) {
  for (char& ch : key)
    if (ch == '_') ch = '-';
  return "--" + key;
}

struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value config file");
    for (const auto& key : config_keys()) {
      app->add_option(flag_name(key), values[key], "config key " + key);
    }
  }

  RunConfig resolve(RunConfig base) const {
    if (!config_file.empty()) base = load_config(config_file, base);
    for (const auto& [k, v] : values)
      if (!v.empty()) set_config_value(base, k, v);
    validate(base);
    return base;
  }
};

RunConfig base_from(const fs::path& dir) {
  return fs::exists(dir / "config.txt") ? cli::read_run_config(dir) : RunConfig{};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference optimization lab: synthetic data, training, diagnostics"};
  app.require_subcommand(1);

  ConfigFlags gen_flags, train_flags, eval_flags, diag_flags;
  std::string out, data, run, checkpoint = "final", a, b, csv, columns = "loss";
  std::size_t batches = 50;

  auto* gen = app.add_subcommand("gen-data", "pretrain a reference and build the preference dataset");
  gen_flags.attach(gen);
  gen->add_option("--out", out, "dataset directory")->required();

  auto* tr = app.add_subcommand("train", "train a policy on a generated dataset");
  train_flags.attach(tr);
  tr->add_option("--data", data, "dataset directory")->required();
  tr->add_option("--out", out, "run directory")->required();

  auto* ev = app.add_subcommand("eval", "pass@1 of a trained run on the dataset's eval instances");
  eval_flags.attach(ev);
  ev->add_option("--run", run, "run directory")->required();
  ev->add_option("--data", data, "dataset directory")->required();
  ev->add_option("--checkpoint", checkpoint, "final, best, or a checkpoint path");

  auto* dg = app.add_subcommand("diagnose", "gradient angle/norm probe over a dataset");
  diag_flags.attach(dg);
  dg->add_option("--data", data, "dataset directory")->required();
  dg->add_option("--checkpoint", checkpoint, "checkpoint path (default: the reference)");
  dg->add_option("--batches", batches, "number of batches");
  dg->add_option("--out", out, "output directory")->required();

  auto* cmp = app.add_subcommand("compare", "question-level gain/loss between two evaluated runs");
  cmp->add_option("--a", a, "baseline run directory")->required();
  cmp->add_option("--b", b, "candidate run directory")->required();
  cmp->add_option("--out", out, "report directory")->required();

  auto* pl = app.add_subcommand("plot", "SVG line chart of metrics.csv columns");
  pl->add_option("--csv", csv, "metrics csv")->required();
  pl->add_option("--columns", columns, "comma-separated column names");
  pl->add_option("--out", out, "output svg")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto c = gen_flags.resolve({});
      cli::cmd_gen_data(c, cli::resolve_dir(out));
    } else if (tr->parsed()) {
      const fs::path d = cli::resolve_dir(data);
      const auto c = train_flags.resolve(base_from(d));
      const auto r = cli::cmd_train(c, d, cli::resolve_dir(out));
      std::cout << "steps " << r.steps;
      if (r.best_pass1) std::cout << " best_val_pass1 " << *r.best_pass1 << " at step " << *r.best_step + 1;
      std::cout << "\n";
    } else if (ev->parsed()) {
      const fs::path r = cli::resolve_dir(run);
      const auto c = eval_flags.resolve(base_from(r));
      fs::path ckpt = checkpoint == "final" || checkpoint == "best" ? r / (checkpoint + ".tlm") : cli::resolve_dir(checkpoint);
      const auto res = cli::cmd_eval(c, ckpt, cli::resolve_dir(data), r);
      std::cout << "pass@1 " << res.pass_at_1 << " +- " << res.standard_error << "\n";
    } else if (dg->parsed()) {
      const fs::path d = cli::resolve_dir(data);
      const auto c = diag_flags.resolve(base_from(d));
      std::optional<fs::path> ck;
      if (dg->count("--checkpoint")) ck = cli::resolve_dir(checkpoint);
      const auto s = cli::cmd_diagnose(c, d, ck, batches, cli::resolve_dir(out));
      std::cout << "batches " << s.batches << " mean_angle " << s.mean_angle << " mean_update_angle " << s.mean_update_angle
                << " mean_norm_w " << s.mean_norm_w
                << " mean_norm_l " << s.mean_norm_l << "\n";
    } else if (cmp->parsed()) {
      const auto r = cli::cmd_compare(cli::resolve_dir(a), cli::resolve_dir(b), cli::resolve_dir(out));
      std::cout << "pass@1 " << r.a.pass_at_1 << " -> " << r.b.pass_at_1 << " gain " << r.report.gain << " loss "
                << r.report.loss << " net " << r.report.net << "\n";
    } else if (pl->parsed()) {
      std::vector<std::string> cols;
      std::stringstream ss(columns);
      for (std::string c; std::getline(ss, c, ',');)
        if (!c.empty()) cols.push_back(c);
      cli::cmd_plot(cli::resolve_dir(csv), cols, cli::resolve_dir(out));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
