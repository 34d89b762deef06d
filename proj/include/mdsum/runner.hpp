#pragma once

// End-to-end drivers behind the `run`, `eval` and `report` commands.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mdsum/budget.hpp"
#include "mdsum/config.hpp"
#include "mdsum/corpus.hpp"
#include "mdsum/error.hpp"
#include "mdsum/eval.hpp"
#include "mdsum/report.hpp"
#include "mdsum/retrieval.hpp"
#include "mdsum/strategies.hpp"

namespace mdsum {

namespace fs = std::filesystem;

inline std::string trace_file_name(Strategy s, const std::string& backend) {
  std::string safe;
  for (char c : backend) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return std::string(to_string(s)) + "__" + safe + ".jsonl";
}

// Reads every well-formed trace line. A torn final line (interrupted write)
// is reported through `torn` and otherwise ignored.
inline std::vector<SummaryTrace> read_traces(const std::string& path, bool* torn = nullptr) {
  std::vector<SummaryTrace> out;
  std::ifstream in(path);
  if (!in) throw io_error("cannot open trace file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  if (torn) *torn = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(trace_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      if (in.peek() == std::char_traits<char>::eof() && torn) {
        *torn = true;
        break;
      }
      throw validation_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

struct RunSummary {
  std::size_t num_words = 0;
  std::map<Strategy, std::string> trace_files;
  std::size_t completed = 0;  // traces written by this invocation
  std::size_t skipped = 0;    // already present from an earlier invocation
  std::vector<std::string> failures;
};

inline std::size_t derive_num_words(const RunConfig& cfg) {
  if (cfg.num_words) return *cfg.num_words;
  const auto val = load_dataset(*cfg.validation_path, Split::validation);
  std::vector<std::string> refs;
  for (const auto& ex : val.examples) refs.insert(refs.end(), ex.references.begin(), ex.references.end());
  return summary_word_limit(refs);
}

// Runs every configured strategy over the dataset and appends one trace line
// per example to <output_dir>/traces/<strategy>__<backend>.jsonl. Examples
// already present in a trace file are skipped. Lines are committed in
// dataset order regardless of which worker finishes first.
inline RunSummary run_pipeline(RunConfig cfg, const Summarizer& summarizer, const Embedder& embedder,
                               std::ostream* log = nullptr) {
  cfg.validate();
  RunSummary summary;
  summary.num_words = derive_num_words(cfg);
  cfg.num_words = summary.num_words;

  auto ds = load_dataset(cfg.dataset_path, cfg.split);
  if (cfg.max_per_day) {
    for (auto& ex : ds.examples) ex = cap_per_day(ex, *cfg.max_per_day);
  }

  const fs::path out_dir(cfg.output_dir);
  const fs::path trace_dir = out_dir / "traces";
  std::error_code ec;
  fs::create_directories(trace_dir, ec);
  if (ec) throw io_error("cannot create '" + trace_dir.string() + "': " + ec.message());
  {
    std::ofstream echo(out_dir / "resolved_config.toml");
    if (!echo) throw io_error("cannot write resolved config in '" + out_dir.string() + "'");
    echo << dump_run_config(cfg);
  }

  const std::string backend = cfg.backend.label();
  for (const Strategy strategy : cfg.strategies) {
    const fs::path path = trace_dir / trace_file_name(strategy, backend);
    summary.trace_files[strategy] = path.string();

    std::set<std::string> done;
    if (fs::exists(path)) {
      bool torn = false;
      auto existing = read_traces(path.string(), &torn);
      for (const auto& t : existing) done.insert(t.example_id);
      if (torn) {  // drop the partial line so appends start on a clean boundary
        std::ofstream rewrite(path, std::ios::trunc);
        for (const auto& t : existing) rewrite << to_json(t).dump() << '\n';
      }
    }

    std::vector<const Example*> todo;
    for (const auto& ex : ds.examples) {
      if (done.count(ex.id)) ++summary.skipped; else todo.push_back(&ex);
    }
    if (todo.empty()) continue;

    std::ofstream out(path, std::ios::app);
    if (!out) throw io_error("cannot open '" + path.string() + "' for appending");

    std::vector<std::optional<std::string>> lines(todo.size());
    std::vector<bool> finished(todo.size(), false);
    std::size_t next_commit = 0;
    std::mutex mu;
    std::atomic<std::size_t> next_job{0};

    auto worker = [&] {
      for (;;) {
        const std::size_t i = next_job.fetch_add(1);
        if (i >= todo.size()) return;
        const Example& ex = *todo[i];
        std::optional<std::string> line;
        std::string failure;
        try {
          const auto budgeted = budget_example(ex, cfg.budget, cfg.tokenizer);
          const auto limits = make_limits(ex, summary.num_words, cfg.tokenizer, cfg.budget.temperature);
          auto trace = run_strategy(strategy, budgeted, summarizer, cfg.budget, limits, cfg.tokenizer, embedder);
          trace.backend = backend;
          line = to_json(trace).dump();
        } catch (const StrategyError& e) {
          failure = std::string(to_string(strategy)) + ": " + e.what() + " [" + std::to_string(e.partial().stages.size()) +
                    " stages before failure]";
        } catch (const std::exception& e) {
          failure = std::string(to_string(strategy)) + ": example '" + ex.id + "': " + e.what();
        }
        std::lock_guard lk(mu);
        lines[i] = std::move(line);
        finished[i] = true;
        if (!failure.empty()) {
          summary.failures.push_back(failure);
          if (log) *log << "error: " << failure << '\n';
        }
        while (next_commit < todo.size() && finished[next_commit]) {
          if (lines[next_commit]) {
            out << *lines[next_commit] << '\n';
            out.flush();
            ++summary.completed;
            lines[next_commit].reset();
          }
          ++next_commit;
        }
      }
    };

    const std::size_t n_threads = std::min(cfg.workers, todo.size());
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    if (log) *log << to_string(strategy) << ": wrote " << path.string() << '\n';
  }
  return summary;
}

struct EvalOptions {
  std::optional<RecallMetric> recall_metric;  // unset: acu when the example has units, else rouge1 recall
  double theta = 0.7;
};

inline RunResults evaluate_traces(const std::vector<std::string>& trace_paths, const Dataset& ds,
                                  const EvalOptions& opt = {}) {
  std::map<std::string, const Example*> by_id;
  for (const auto& ex : ds.examples) by_id[ex.id] = &ex;
  RunResults res;
  for (const auto& p : trace_paths) {
    for (const auto& t : read_traces(p)) {
      auto it = by_id.find(t.example_id);
      if (it == by_id.end()) {
        throw validation_error(p + ": trace refers to unknown example '" + t.example_id + "'");
      }
      const Example& ex = *it->second;
      const RecallMetric metric =
          opt.recall_metric.value_or(ex.acus && !ex.acus->empty() ? RecallMetric::acu : RecallMetric::rouge1_recall);
      ResultRow row;
      row.example_id = t.example_id;
      row.strategy = t.strategy;
      row.backend = t.backend;
      row.scores = score_example(t, ex.references, ex.acus, opt.theta);
      row.retention = retention_analysis(t, ex.references, ex.acus, metric, opt.theta);
      res.add(std::move(row));
    }
  }
  return res;
}

// Collects trace files: plain files are taken as is, directories contribute
// every *.jsonl they contain (sorted by name).
inline std::vector<std::string> expand_trace_paths(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".jsonl") found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      out.push_back(in);
    } else {
      throw io_error("trace path '" + in + "' does not exist");
    }
  }
  return out;
}

// Writes every table as CSV into `out_dir` and the aligned text versions to `text`.
inline void write_reports(const RunResults& res, const std::string& out_dir, std::ostream& text) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create '" + out_dir + "': " + ec.message());
  auto open = [&](const std::string& name) {
    std::ofstream f(fs::path(out_dir) / name);
    if (!f) throw io_error("cannot write '" + name + "' in '" + out_dir + "'");
    return f;
  };

  const bool all_acu = !res.rows.empty() && std::all_of(res.rows.begin(), res.rows.end(), [](const ResultRow& r) {
    return r.scores.acu_recall.has_value();
  });
  std::vector<std::string> metrics = {"rouge1_f", "rouge2_f", "rougeL_f", "rougeLsum_f"};
  if (all_acu) metrics.insert(metrics.begin(), "acu_recall");
  for (const auto& m : metrics) {
    const auto cells = relative_delta_table(res, metric_selector(m));
    auto f = open("delta_" + m + ".csv");
    write_delta_csv(f, cells);
    print_delta_table(text, cells, "Relative to full_context: " + m);
    text << '\n';
  }

  const auto series = retention_series(res);
  {
    auto f = open("retention_series.csv");
    write_retention_csv(f, series);
  }
  text << "Retention (mean recall): backend / strategy / final / best intermediate\n";
  for (const auto& r : series) {
    text << "  " << r.backend << " / " << to_string(r.strategy) << " / " << detail::fmt_real(r.mean_final_recall)
         << " / " << (r.mean_best_intermediate_recall ? detail::fmt_real(*r.mean_best_intermediate_recall) : "-")
         << '\n';
  }
  text << '\n';

  const auto lengths = length_table(res);
  {
    auto f = open("length_table.csv");
    write_length_csv(f, lengths);
  }
  text << "Summary length (words): backend / strategy / final / best intermediate\n";
  for (const auto& r : lengths) {
    text << "  " << r.backend << " / " << to_string(r.strategy) << " / " << r.final_words << " / "
         << (r.best_words ? std::to_string(*r.best_words) : "-") << '\n';
  }

  auto f = open("example_scores.csv");
  f << "backend,strategy,example_id,rouge1_f,acu_recall\n";
  for (const auto& r : res.rows) {
    f << detail::csv_escape(r.backend) << ',' << to_string(r.strategy) << ',' << detail::csv_escape(r.example_id)
      << ',' << detail::fmt_real(r.scores.rouge1.f1) << ','
      << (r.scores.acu_recall ? detail::fmt_real(*r.scores.acu_recall) : "") << '\n';
  }
}

}  // namespace mdsum
