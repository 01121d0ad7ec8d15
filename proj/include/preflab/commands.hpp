#pragma once

// Subcommand bodies of the preflab tool. Each reads and writes plain files
// in a run directory so the steps can be chained from a shell or a test.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "preflab/pipeline.hpp"

namespace preflab::cli {

namespace fs = std::filesystem;

inline constexpr std::string_view kMetricsVersion = "# preflab-metrics v1";
inline constexpr std::string_view kCoefficientsVersion = "# preflab-coefficients v1";

/// Where run directories live: $PREFLAB_OUT when set, else `fallback`.
inline fs::path output_root(const fs::path& fallback = "runs") {
  if (const char* env = std::getenv("PREFLAB_OUT"); env && *env) return env;
  return fallback;
}

/// Absolute paths are used as given; relative ones go under the root.
inline fs::path resolve_dir(const fs::path& dir) { return dir.is_absolute() ? dir : output_root() / dir; }

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  return is;
}

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw std::runtime_error("cannot create output directory " + p.string());
}

inline void write_text(const fs::path& p, const std::string& text) {
  auto os = open_out(p);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + p.string());
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string cell(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) {
    return num(*v);
  } else {
    return std::to_string(*v);
  }
}

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{
      "step",   "loss",          "lr",           "grad_norm",     "drift_w",        "drift_l",
      "c_w",    "c_l",           "fpa_c_w",      "fpa_c_l",       "r_w",            "r_l",
      "r_w_of_means", "r_l_of_means", "near_zero", "near_zero_cumulative", "angle", "norm_w",
      "norm_l", "val_pass1",     "probe_drift_w", "probe_drift_l"};
  return cols;
}

/// Versioned comment line, header row, one row per step. Missing values
/// are empty cells.
inline void write_metrics_csv(std::ostream& os, const std::vector<RunMetrics>& rows) {
  os << kMetricsVersion << '\n';
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& m : rows) {
    os << m.step << ',' << num(m.loss) << ',' << num(m.lr) << ',' << num(m.grad_norm) << ',' << cell(m.drift_chosen)
       << ',' << cell(m.drift_rejected) << ',' << cell(m.c_w) << ',' << cell(m.c_l) << ',' << cell(m.fpa_c_w) << ','
       << cell(m.fpa_c_l) << ',' << cell(m.r_w) << ',' << cell(m.r_l) << ',' << cell(m.r_w_of_means) << ','
       << cell(m.r_l_of_means) << ',' << cell(m.near_zero) << ',' << cell(m.near_zero_cumulative) << ','
       << cell(m.angle) << ',' << cell(m.norm_w) << ',' << cell(m.norm_l) << ',' << cell(m.val_pass1) << ','
       << cell(m.probe_drift_chosen) << ',' << cell(m.probe_drift_rejected) << '\n';
  }
}

/// Per-pair effective c_l of every step: step,slot,c_l.
inline void write_coefficients_csv(std::ostream& os, const std::vector<RunMetrics>& rows) {
  os << kCoefficientsVersion << '\n' << "step,slot,c_l\n";
  for (const auto& m : rows) {
    for (std::size_t i = 0; i < m.effective_c_l.size(); ++i) os << m.step << ',' << i << ',' << num(m.effective_c_l[i]) << '\n';
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("no column " + name);
  }
};

/// Reads a CSV written by this tool: '#' lines skipped, first row is the header.
inline CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size()) throw std::runtime_error("ragged csv row: " + line);
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

inline CsvTable read_csv_file(const fs::path& p) {
  auto is = open_in(p);
  return read_csv(is);
}

inline RunConfig read_run_config(const fs::path& dir) { return load_config(dir / "config.txt"); }

inline void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

// ---------------------------------------------------------------- gen-data

struct GenDataSummary {
  std::size_t generated = 0;
  std::size_t kept = 0;
  std::size_t discarded = 0;
  std::size_t pairs = 0;
  std::size_t train_pairs = 0;
  std::size_t validation_pairs = 0;
  double mean_overlap = 0.0;
};

/// Pretrains the reference, samples K completions per instance, pairs them
/// and writes reference.tlm, dataset/train/validation JSONL,
/// eval_instances.jsonl, config.txt and manifest.json into `out`.
inline GenDataSummary cmd_gen_data(const RunConfig& c, const fs::path& out, std::ostream& log = std::cerr) {
  validate(c);
  ensure_dir(out);
  log << "pretraining reference (target pass@1 " << c.pretrain_target << ")\n";
  const Dataset d = build_dataset(c);
  log << "reference: " << d.build.steps << " steps, pass@1 " << d.build.pass1 << "\n";

  const std::string config_text = to_config_text(c);
  write_text(out / "config.txt", config_text);
  save_checkpoint(out / "reference.tlm", d.reference);
  {
    auto os = open_out(out / "dataset.jsonl");
    write_pairs(os, d.pairs);
  }
  {
    auto os = open_out(out / "train.jsonl");
    write_pairs(os, d.split.train);
  }
  {
    auto os = open_out(out / "validation.jsonl");
    write_pairs(os, d.split.validation);
  }
  {
    auto os = open_out(out / "eval_instances.jsonl");
    write_instances(os, d.eval_questions);
  }
  GenDataSummary s;
  s.generated = d.stats.instances;
  s.kept = d.stats.kept_instances;
  s.discarded = d.stats.discarded_instances;
  s.pairs = d.pairs.size();
  s.train_pairs = d.split.train.size();
  s.validation_pairs = d.split.validation.size();
  s.mean_overlap = d.pairs.empty() ? 0.0 : mean_overlap(d.pairs);
  nlohmann::json m{{"kind", "dataset"},
                   {"config_hash", fnv1a_hex(config_text)},
                   {"generated_instances", s.generated},
                   {"kept_instances", s.kept},
                   {"discarded_instances", s.discarded},
                   {"pairs", s.pairs},
                   {"train_pairs", s.train_pairs},
                   {"validation_pairs", s.validation_pairs},
                   {"eval_questions", d.eval_questions.size()},
                   {"mean_overlap", s.mean_overlap},
                   {"reference_steps", d.build.steps},
                   {"reference_pass1", d.build.pass1}};
  write_json(out / "manifest.json", m);
  log << "pairs " << s.pairs << " (train " << s.train_pairs << ", validation " << s.validation_pairs
      << "), discarded instances " << s.discarded << "\n";
  return s;
}

inline std::vector<PreferencePair> load_pairs(const fs::path& p) {
  auto is = open_in(p);
  return read_pairs(is);
}

// ------------------------------------------------------------------ train

/// Trains from the dataset's reference. Writes final.tlm, best.tlm,
/// metrics.csv, coefficients.csv, config.txt and manifest.json.
inline TrainResult cmd_train(const RunConfig& c, const fs::path& data, const fs::path& out,
                             std::ostream& log = std::cerr) {
  validate(c);
  const TinyLM reference = load_checkpoint(data / "reference.tlm");
  if (reference.shape() != c.model) {
    throw ConfigError("dataset reference has vocab " + std::to_string(reference.shape().vocab) + ", config has " +
                      std::to_string(c.model.vocab));
  }
  DatasetSplit split{load_pairs(data / "train.jsonl"), load_pairs(data / "validation.jsonl")};
  if (split.train.empty()) throw std::runtime_error("dataset has no training pairs");
  ensure_dir(out);
  const std::size_t every = std::max<std::size_t>(1, c.train.max_steps / 20);
  const auto r = run_training(c, reference, split, [&](const RunMetrics& m) {
    if ((m.step + 1) % every == 0 || m.val_pass1) {
      log << "step " << m.step + 1 << " loss " << m.loss;
      if (m.val_pass1) log << " val_pass1 " << *m.val_pass1;
      log << "\n";
    }
  });
  const std::string config_text = to_config_text(c);
  write_text(out / "config.txt", config_text);
  save_checkpoint(out / "final.tlm", r.final_model);
  save_checkpoint(out / "best.tlm", r.best_model);
  {
    auto os = open_out(out / "metrics.csv");
    write_metrics_csv(os, r.metrics);
  }
  {
    auto os = open_out(out / "coefficients.csv");
    write_coefficients_csv(os, r.metrics);
  }
  nlohmann::json m{{"kind", "run"},
                   {"config_hash", fnv1a_hex(config_text)},
                   {"dataset", data.string()},
                   {"objective", std::string(to_string(c.objective))},
                   {"steps", r.steps},
                   {"stopped_early", r.stopped_early},
                   {"train_pairs", split.train.size()},
                   {"validation_pairs", split.validation.size()}};
  m["best_step"] = r.best_step ? nlohmann::json(*r.best_step) : nlohmann::json(nullptr);
  m["best_pass1"] = r.best_pass1 ? nlohmann::json(*r.best_pass1) : nlohmann::json(nullptr);
  write_json(out / "manifest.json", m);
  return r;
}

// ------------------------------------------------------------------- eval

/// Evaluates `checkpoint` on the dataset's eval instances. Writes
/// eval_questions.jsonl and eval.csv into `out`.
inline EvalResult cmd_eval(const RunConfig& c, const fs::path& checkpoint, const fs::path& data, const fs::path& out) {
  const TinyLM model = load_checkpoint(checkpoint);
  if (model.shape() != c.model) throw ConfigError("checkpoint shape does not match the config");
  auto is = open_in(data / "eval_instances.jsonl");
  const auto questions = read_instances(is, c.format());
  if (questions.empty()) throw std::runtime_error("no evaluation instances");
  const auto r = evaluate(model, c.format(), questions, eval_options(c));
  ensure_dir(out);
  {
    auto os = open_out(out / "eval_questions.jsonl");
    write_question_records(os, questions, r);
  }
  auto os = open_out(out / "eval.csv");
  os << "questions,n,temperature,pass_at_1,standard_error\n"
     << questions.size() << ',' << r.samples << ',' << num(r.temperature) << ',' << num(r.pass_at_1) << ','
     << num(r.standard_error) << '\n';
  return r;
}

struct QuestionRecord {
  std::size_t question = 0;
  std::size_t correct = 0;
  std::size_t n = 0;
};

inline std::vector<QuestionRecord> read_question_records(const fs::path& p) {
  auto is = open_in(p);
  std::vector<QuestionRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("question").get<std::size_t>(), j.at("correct").get<std::size_t>(), j.at("n").get<std::size_t>()});
  }
  return out;
}

// ---------------------------------------------------------------- compare

struct Comparison {
  EvalResult a, b;
  GainLossReport report;
};

/// Question-level comparison of two evaluated runs. Writes compare.csv
/// (per-question deltas) and compare_summary.csv into `out`.
inline Comparison cmd_compare(const fs::path& run_a, const fs::path& run_b, const fs::path& out) {
  const auto qa = read_question_records(run_a / "eval_questions.jsonl");
  const auto qb = read_question_records(run_b / "eval_questions.jsonl");
  if (qa.size() != qb.size()) throw std::runtime_error("runs were evaluated on different question sets");
  std::vector<std::size_t> ca, cb;
  for (std::size_t i = 0; i < qa.size(); ++i) {
    if (qa[i].question != qb[i].question) throw std::runtime_error("question ids differ between runs");
    if (qa[i].n != qa.front().n || qb[i].n != qb.front().n) throw std::runtime_error("inconsistent sample counts");
    ca.push_back(qa[i].correct);
    cb.push_back(qb[i].correct);
  }
  if (qa.empty()) throw std::runtime_error("no evaluated questions");
  Comparison c{summarize(ca, qa.front().n), summarize(cb, qb.front().n), {}};
  const auto acc_a = c.a.accuracies(), acc_b = c.b.accuracies();
  c.report = gain_loss(acc_a, acc_b);
  ensure_dir(out);
  {
    auto os = open_out(out / "compare.csv");
    os << "question,acc_a,acc_b,delta\n";
    for (std::size_t i = 0; i < qa.size(); ++i) {
      os << qa[i].question << ',' << num(acc_a[i]) << ',' << num(acc_b[i]) << ',' << num(acc_b[i] - acc_a[i]) << '\n';
    }
  }
  auto os = open_out(out / "compare_summary.csv");
  os << "pass1_a,se_a,pass1_b,se_b,gain,loss,net,pass1_delta\n"
     << num(c.a.pass_at_1) << ',' << num(c.a.standard_error) << ',' << num(c.b.pass_at_1) << ','
     << num(c.b.standard_error) << ',' << num(c.report.gain) << ',' << num(c.report.loss) << ','
     << num(c.report.net) << ',' << num(c.b.pass_at_1 - c.a.pass_at_1) << '\n';
  return c;
}

// --------------------------------------------------------------- diagnose

struct DiagnoseSummary {
  std::size_t batches = 0;
  double mean_angle = 0.0;
  double mean_update_angle = 0.0;
  double mean_norm_w = 0.0;
  double mean_norm_l = 0.0;
};

/// Angle/norm probe of `model` over consecutive batches of `pairs`.
inline DiagnoseSummary angle_probe(const TinyLM& model, const std::vector<PreferencePair>& pairs,
                                   std::size_t batch_size, std::size_t max_batches, std::uint64_t seed,
                                   std::vector<GradientReport>* reports = nullptr) {
  if (pairs.empty()) throw std::invalid_argument("angle probe needs pairs");
  BatchSchedule schedule(pairs.size(), batch_size, seed);
  DiagnoseSummary s;
  std::size_t with_angle = 0;
  for (std::size_t b = 0; b < max_batches; ++b) {
    std::vector<const PreferencePair*> batch;
    for (auto i : schedule.next()) batch.push_back(&pairs[i]);
    auto rep = gradient_angle_and_norms(model, batch);
    rep.step = b;
    if (rep.angle) {
      s.mean_angle += *rep.angle;
      s.mean_update_angle += *rep.update_angle;
      ++with_angle;
    }
    s.mean_norm_w += rep.chosen_norm;
    s.mean_norm_l += rep.rejected_norm;
    ++s.batches;
    if (reports) reports->push_back(rep);
  }
  if (with_angle) {
    s.mean_angle /= static_cast<double>(with_angle);
    s.mean_update_angle /= static_cast<double>(with_angle);
  }
  s.mean_norm_w /= static_cast<double>(s.batches);
  s.mean_norm_l /= static_cast<double>(s.batches);
  return s;
}

/// Runs the probe on a checkpoint (or the dataset reference) and writes
/// angles.csv into `out`.
inline DiagnoseSummary cmd_diagnose(const RunConfig& c, const fs::path& data, const std::optional<fs::path>& checkpoint,
                                    std::size_t batches, const fs::path& out) {
  const TinyLM model = load_checkpoint(checkpoint ? *checkpoint : data / "reference.tlm");
  const auto pairs = load_pairs(data / "train.jsonl");
  std::vector<GradientReport> reps;
  const auto s = angle_probe(model, pairs, c.train.batch_size, batches, derive_seed(c.seed, 0xd1a6), &reps);
  ensure_dir(out);
  auto os = open_out(out / "angles.csv");
  os << "batch,angle,update_angle,norm_w,norm_l\n";
  for (const auto& r : reps) {
    os << r.step << ',' << cell(r.angle) << ',' << cell(r.update_angle) << ',' << num(r.chosen_norm) << ',' << num(r.rejected_norm) << '\n';
  }
  return s;
}

// ------------------------------------------------------------------- plot

/// Line chart of `columns` against the step column of a metrics CSV.
/// Rows with an empty cell are skipped for that series.
inline std::string render_svg(const CsvTable& t, const std::vector<std::string>& columns, const std::string& title) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 30, B = 40;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const std::size_t xs = t.column("step");
  std::vector<std::vector<std::pair<double, double>>> series;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& name : columns) {
    const std::size_t ci = t.column(name);
    auto& pts = series.emplace_back();
    for (const auto& row : t.rows) {
      if (row[ci].empty()) continue;
      const double x = std::stod(row[xs]), y = std::stod(row[ci]);
      if (!std::isfinite(y)) continue;
      pts.emplace_back(x, y);
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  auto label = [&](double x, double y, const std::string& s, const char* anchor, const char* color = "black") {
    os << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor << "\" fill=\"" << color
       << "\" font-family=\"sans-serif\" font-size=\"10\">" << s << "</text>\n";
  };
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", y0);
  label(L - 4, H - B, buf, "end");
  std::snprintf(buf, sizeof buf, "%g", y1);
  label(L - 4, T + 8, buf, "end");
  std::snprintf(buf, sizeof buf, "%g", x0);
  label(L, H - B + 14, buf, "middle");
  std::snprintf(buf, sizeof buf, "%g", x1);
  label(W - R, H - B + 14, buf, "middle");
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    for (const auto& [x, y] : series[s]) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    label(W - R - 4, T + 12 + 12 * static_cast<double>(s), columns[s], "end", color);
  }
  os << "</svg>\n";
  return os.str();
}

inline void cmd_plot(const fs::path& csv, const std::vector<std::string>& columns, const fs::path& out_svg) {
  const auto t = read_csv_file(csv);
  write_text(out_svg, render_svg(t, columns, csv.filename().string()));
}

}  // namespace preflab::cli
