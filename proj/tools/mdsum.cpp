// mdsum: validate datasets, run summarization strategies, evaluate traces and
// build report tables.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdsum/mdsum.hpp"

namespace {

int exit_code(mdsum::ErrorKind kind) {
  switch (kind) {
    case mdsum::ErrorKind::config: return 2;
    case mdsum::ErrorKind::io: return 3;
    case mdsum::ErrorKind::backend: return 4;
    case mdsum::ErrorKind::validation: return 5;
  }
  return 1;
}

int cmd_validate(const std::string& path, const std::string& split, std::optional<std::size_t> max_per_day) {
  auto ds = mdsum::load_dataset(path, mdsum::parse_split(split));
  if (max_per_day) {
    for (auto& ex : ds.examples) ex = mdsum::cap_per_day(ex, *max_per_day);
  }
  const auto st = mdsum::dataset_stats(ds);
  std::cout << path << ": ok (" << mdsum::to_string(ds.split) << ")\n"
            << std::fixed << std::setprecision(1) << "  examples          " << st.examples << '\n'
            << "  docs/example      " << st.docs_per_example << '\n'
            << "  avg doc words     " << st.avg_doc_words << '\n'
            << "  avg summary words " << st.avg_summary_words << '\n';
  return 0;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& strategies,
            std::optional<std::size_t> workers, std::optional<std::string> output) {
  auto cfg = mdsum::load_run_config(config_path);
  if (!strategies.empty()) {
    cfg.strategies.clear();
    for (const auto& s : strategies) cfg.strategies.push_back(mdsum::parse_strategy(s));
  }
  if (workers) cfg.workers = *workers;
  if (output) cfg.output_dir = *output;
  cfg.validate();

  // Both factories check credentials before anything is sent.
  const auto summarizer = mdsum::make_summarizer(cfg.backend);
  const auto embedder = mdsum::make_embedder(cfg.embedder);
  const auto summary = mdsum::run_pipeline(cfg, *summarizer, *embedder, &std::cerr);
  std::cout << "num_words " << summary.num_words << ", wrote " << summary.completed << " traces, skipped "
            << summary.skipped << " already present\n";
  if (!summary.failures.empty()) {
    std::cerr << "error [backend]: " << summary.failures.size() << " example(s) failed\n";
    return exit_code(mdsum::ErrorKind::backend);
  }
  return 0;
}

int cmd_eval(const std::vector<std::string>& traces, const std::string& dataset, const std::string& split,
             const std::string& output, const std::string& metric, double theta) {
  const auto ds = mdsum::load_dataset(dataset, mdsum::parse_split(split));
  mdsum::EvalOptions opt;
  if (metric != "auto") opt.recall_metric = mdsum::parse_recall_metric(metric);
  opt.theta = theta;
  const auto res = mdsum::evaluate_traces(mdsum::expand_trace_paths(traces), ds, opt);
  std::ofstream out(output);
  if (!out) throw mdsum::io_error("cannot write '" + output + "'");
  mdsum::write_results_csv(out, res);
  std::cout << "scored " << res.rows.size() << " traces into " << output << '\n';
  return 0;
}

int cmd_report(const std::string& results, const std::string& output) {
  std::ifstream in(results);
  if (!in) throw mdsum::io_error("cannot open results '" + results + "'");
  const auto res = mdsum::read_results_csv(in);
  mdsum::write_reports(res, output, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-document summarization pipelines and retention analysis"};
  app.require_subcommand(1);

  auto* validate = app.add_subcommand("validate", "Check a JSONL dataset and print its statistics");
  std::string v_path, v_split = "test";
  std::optional<std::size_t> v_max_per_day;
  validate->add_option("dataset", v_path, "Dataset JSONL file")->required();
  validate->add_option("--split", v_split, "validation or test");
  validate->add_option("--max-per-day", v_max_per_day, "Keep at most N documents per calendar day");

  auto* run = app.add_subcommand("run", "Run strategies over a dataset and write traces");
  std::string r_config;
  std::vector<std::string> r_strategies;
  std::optional<std::size_t> r_workers;
  std::optional<std::string> r_output;
  run->add_option("--config", r_config, "Run config file")->required();
  run->add_option("--strategy", r_strategies, "Strategy to run (repeatable; default from config)")
      ->delimiter(',');
  run->add_option("--workers", r_workers, "Concurrent examples");
  run->add_option("--output", r_output, "Output directory");

  auto* eval = app.add_subcommand("eval", "Score traces against references");
  std::vector<std::string> e_traces;
  std::string e_dataset, e_split = "test", e_output = "results.csv", e_metric = "auto";
  double e_theta = 0.7;
  eval->add_option("--traces", e_traces, "Trace files or directories")->required();
  eval->add_option("--dataset", e_dataset, "Dataset JSONL file")->required();
  eval->add_option("--split", e_split, "validation or test");
  eval->add_option("--output", e_output, "Results CSV to write");
  eval->add_option("--recall-metric", e_metric, "auto, acu or rouge1_recall");
  eval->add_option("--theta", e_theta, "Content-unit match threshold")->check(CLI::Range(0.0, 1.0));

  auto* report = app.add_subcommand("report", "Aggregate a results CSV into tables");
  std::string p_results, p_output = "report";
  report->add_option("--results", p_results, "Results CSV from eval")->required();
  report->add_option("--output", p_output, "Directory for CSV tables");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(v_path, v_split, v_max_per_day);
    if (*run) return cmd_run(r_config, r_strategies, r_workers, r_output);
    if (*eval) return cmd_eval(e_traces, e_dataset, e_split, e_output, e_metric, e_theta);
    if (*report) return cmd_report(p_results, p_output);
  } catch (const mdsum::Error& e) {
    std::cerr << "error [" << mdsum::to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
