#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mdsum/error.hpp"
#include "mdsum/eval.hpp"
#include "mdsum/strategies.hpp"

namespace mdsum {

struct ResultRow {
  std::string example_id;
  Strategy strategy = Strategy::full_context;
  std::string backend;
  EvalScores scores;
  RetentionReport retention;
};

struct RunResults {
  std::vector<ResultRow> rows;

  // Rejects a second row for the same (example, strategy, backend).
  void add(ResultRow row) {
    auto key = std::make_tuple(row.example_id, row.strategy, row.backend);
    if (!keys_.insert(key).second) {
      throw validation_error("duplicate result row for example '" + row.example_id + "', strategy " +
                             std::string(to_string(row.strategy)) + ", backend '" + row.backend + "'");
    }
    rows.push_back(std::move(row));
  }

 private:
  std::set<std::tuple<std::string, Strategy, std::string>> keys_;
};

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& results_csv_header() {
  static const std::vector<std::string> h = {
      "example_id",       "strategy",       "backend",           "rouge1_p",        "rouge1_r",
      "rouge1_f",         "rouge2_p",       "rouge2_r",          "rouge2_f",        "rougeL_p",
      "rougeL_r",         "rougeL_f",       "rougeLsum_p",       "rougeLsum_r",     "rougeLsum_f",
      "acu_recall",       "summary_words",  "final_recall",      "best_intermediate_recall",
      "best_stage",       "best_stage_words"};
  return h;
}

namespace detail {

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

inline std::string fmt_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

inline void write_results_csv(std::ostream& out, const RunResults& res) {
  const auto& h = results_csv_header();
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
  out << '\n';
  for (const auto& r : res.rows) {
    const auto& s = r.scores;
    out << detail::csv_escape(r.example_id) << ',' << to_string(r.strategy) << ',' << detail::csv_escape(r.backend);
    for (const PRF* p : {&s.rouge1, &s.rouge2, &s.rougeL, &s.rougeLsum}) {
      out << ',' << detail::fmt_real(p->precision) << ',' << detail::fmt_real(p->recall) << ','
          << detail::fmt_real(p->f1);
    }
    out << ',' << (s.acu_recall ? detail::fmt_real(*s.acu_recall) : "") << ',' << s.summary_words << ','
        << detail::fmt_real(r.retention.final_recall) << ','
        << detail::fmt_real(r.retention.best_intermediate_recall) << ','
        << detail::csv_escape(r.retention.best_stage) << ',' << r.retention.best_stage_words << '\n';
  }
}

inline RunResults read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw validation_error("results CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (detail::csv_split(line) != results_csv_header()) throw validation_error("results CSV has an unexpected header");
  RunResults res;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c = detail::csv_split(line);
    if (c.size() != results_csv_header().size()) {
      throw validation_error("results CSV line " + std::to_string(lineno) + ": wrong number of columns");
    }
    try {
      ResultRow r;
      r.example_id = c[0];
      r.strategy = parse_strategy(c[1]);
      r.backend = c[2];
      std::size_t k = 3;
      for (PRF* p : {&r.scores.rouge1, &r.scores.rouge2, &r.scores.rougeL, &r.scores.rougeLsum}) {
        p->precision = std::stod(c[k++]);
        p->recall = std::stod(c[k++]);
        p->f1 = std::stod(c[k++]);
      }
      if (!c[15].empty()) r.scores.acu_recall = std::stod(c[15]);
      r.scores.summary_words = std::stoul(c[16]);
      r.retention.final_recall = std::stod(c[17]);
      r.retention.best_intermediate_recall = std::stod(c[18]);
      r.retention.best_stage = c[19];
      r.retention.best_stage_words = std::stoul(c[20]);
      res.add(std::move(r));
    } catch (const std::logic_error&) {
      throw validation_error("results CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

// One observation of a metric for a (backend, strategy) cell.
struct MetricSample {
  std::string backend;
  Strategy strategy = Strategy::full_context;
  double value = 0.0;
};

using MetricSelector = std::function<std::optional<double>(const ResultRow&)>;

inline MetricSelector metric_selector(std::string_view name) {
  auto prf = [](PRF EvalScores::*m, double PRF::*f) -> MetricSelector {
    return [m, f](const ResultRow& r) -> std::optional<double> { return r.scores.*m.*f; };
  };
  if (name == "rouge1_f") return prf(&EvalScores::rouge1, &PRF::f1);
  if (name == "rouge2_f") return prf(&EvalScores::rouge2, &PRF::f1);
  if (name == "rougeL_f") return prf(&EvalScores::rougeL, &PRF::f1);
  if (name == "rougeLsum_f") return prf(&EvalScores::rougeLsum, &PRF::f1);
  if (name == "rouge1_r") return prf(&EvalScores::rouge1, &PRF::recall);
  if (name == "acu_recall") return [](const ResultRow& r) { return r.scores.acu_recall; };
  if (name == "final_recall") return [](const ResultRow& r) -> std::optional<double> { return r.retention.final_recall; };
  throw config_error("unknown metric '" + std::string(name) + "'");
}

inline std::vector<MetricSample> collect(const RunResults& res, const MetricSelector& sel) {
  std::vector<MetricSample> out;
  for (const auto& r : res.rows) {
    if (auto v = sel(r)) out.push_back({r.backend, r.strategy, *v});
  }
  return out;
}

struct DeltaCell {
  std::string backend;
  Strategy strategy = Strategy::full_context;
  double mean = 0.0;
  // Relative to the backend's full-context mean; 0 for the baseline itself,
  // unset when that mean is zero.
  std::optional<long> percent;
};

// Macro-averages per (backend, strategy) and expresses every method relative
// to the full-context mean of the same backend, rounded to whole percent.
inline std::vector<DeltaCell> relative_delta_table(const std::vector<MetricSample>& samples) {
  std::map<std::pair<std::string, Strategy>, std::pair<double, std::size_t>> acc;
  for (const auto& s : samples) {
    auto& [sum, n] = acc[{s.backend, s.strategy}];
    sum += s.value;
    ++n;
  }
  std::vector<DeltaCell> out;
  for (const auto& [key, sn] : acc) {
    const auto base = acc.find({key.first, Strategy::full_context});
    if (base == acc.end()) throw validation_error("backend '" + key.first + "' has no full_context rows");
    const double base_mean = base->second.first / static_cast<double>(base->second.second);
    const double mean = sn.first / static_cast<double>(sn.second);
    DeltaCell cell{key.first, key.second, mean, 0L};
    if (key.second != Strategy::full_context) {
      cell.percent = base_mean == 0.0 ? std::nullopt
                                      : std::optional<long>(std::lround((mean - base_mean) / base_mean * 100.0));
    }
    out.push_back(cell);
  }
  return out;
}

inline std::vector<DeltaCell> relative_delta_table(const RunResults& res, const MetricSelector& sel) {
  return relative_delta_table(collect(res, sel));
}

struct RetentionSeriesRow {
  std::string backend;
  Strategy strategy = Strategy::full_context;
  std::size_t examples = 0;
  double mean_final_recall = 0.0;
  std::optional<double> mean_best_intermediate_recall;  // absent for full_context
};

inline std::vector<RetentionSeriesRow> retention_series(const RunResults& res) {
  std::map<std::pair<std::string, Strategy>, RetentionSeriesRow> acc;
  for (const auto& r : res.rows) {
    auto& row = acc[{r.backend, r.strategy}];
    row.backend = r.backend;
    row.strategy = r.strategy;
    ++row.examples;
    row.mean_final_recall += r.retention.final_recall;
    if (r.strategy != Strategy::full_context) {
      row.mean_best_intermediate_recall = row.mean_best_intermediate_recall.value_or(0.0) +
                                          r.retention.best_intermediate_recall;
    }
  }
  std::vector<RetentionSeriesRow> out;
  for (auto& [key, row] : acc) {
    const double n = static_cast<double>(row.examples);
    row.mean_final_recall /= n;
    if (row.mean_best_intermediate_recall) *row.mean_best_intermediate_recall /= n;
    out.push_back(row);
  }
  return out;
}

struct LengthRow {
  std::string backend;
  Strategy strategy = Strategy::full_context;
  long final_words = 0;
  std::optional<long> best_words;  // hierarchical and incremental only
};

// Mean summary lengths in words, rounded to integers.
inline std::vector<LengthRow> length_table(const RunResults& res) {
  std::map<std::pair<std::string, Strategy>, std::tuple<double, double, std::size_t>> acc;
  for (const auto& r : res.rows) {
    auto& [fin, best, n] = acc[{r.backend, r.strategy}];
    fin += static_cast<double>(r.scores.summary_words);
    best += static_cast<double>(r.retention.best_stage_words);
    ++n;
  }
  std::vector<LengthRow> out;
  for (const auto& [key, v] : acc) {
    const auto& [fin, best, n] = v;
    LengthRow row{key.first, key.second, std::lround(fin / static_cast<double>(n)), std::nullopt};
    if (key.second == Strategy::hierarchical || key.second == Strategy::incremental) {
      row.best_words = std::lround(best / static_cast<double>(n));
    }
    out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline void write_delta_csv(std::ostream& out, const std::vector<DeltaCell>& cells) {
  out << "backend,strategy,mean,percent_vs_full_context\n";
  for (const auto& c : cells) {
    out << detail::csv_escape(c.backend) << ',' << to_string(c.strategy) << ',' << detail::fmt_real(c.mean) << ','
        << (c.percent ? std::to_string(*c.percent) : "") << '\n';
  }
}

inline void write_retention_csv(std::ostream& out, const std::vector<RetentionSeriesRow>& rows) {
  out << "backend,strategy,examples,mean_final_recall,mean_best_intermediate_recall\n";
  for (const auto& r : rows) {
    out << detail::csv_escape(r.backend) << ',' << to_string(r.strategy) << ',' << r.examples << ','
        << detail::fmt_real(r.mean_final_recall) << ','
        << (r.mean_best_intermediate_recall ? detail::fmt_real(*r.mean_best_intermediate_recall) : "") << '\n';
  }
}

inline void write_length_csv(std::ostream& out, const std::vector<LengthRow>& rows) {
  out << "backend,strategy,final_words,best_words\n";
  for (const auto& r : rows) {
    out << detail::csv_escape(r.backend) << ',' << to_string(r.strategy) << ',' << r.final_words << ','
        << (r.best_words ? std::to_string(*r.best_words) : "") << '\n';
  }
}

// Aligned text table: one line per backend, one column per strategy. The
// baseline column shows the absolute mean, the others a signed percentage.
inline void print_delta_table(std::ostream& out, const std::vector<DeltaCell>& cells, std::string_view title) {
  std::map<std::string, std::map<Strategy, const DeltaCell*>> grid;
  std::size_t width = 7;
  for (const auto& c : cells) {
    grid[c.backend][c.strategy] = &c;
    width = std::max(width, c.backend.size());
  }
  out << title << '\n' << std::left << std::setw(static_cast<int>(width)) << "backend";
  for (auto s : kAllStrategies) out << "  " << std::right << std::setw(13) << to_string(s);
  out << '\n';
  for (const auto& [backend, row] : grid) {
    out << std::left << std::setw(static_cast<int>(width)) << backend;
    for (auto s : kAllStrategies) {
      std::string cell = "-";
      if (auto it = row.find(s); it != row.end()) {
        std::ostringstream os;
        if (s == Strategy::full_context) {
          os << std::fixed << std::setprecision(4) << it->second->mean;
        } else if (const auto& p = it->second->percent) {
          os << (*p > 0 ? "+" : "") << *p << '%';
        } else {
          os << "n/a";
        }
        cell = os.str();
      }
      out << "  " << std::right << std::setw(13) << cell;
    }
    out << '\n';
  }
}

}  // namespace mdsum
